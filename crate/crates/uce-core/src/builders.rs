//! Target construction for the three edit modes.
//!
//! Every mode reduces to the same move: pick the inputs to re-route and
//! compute each desired output by pushing some other embedding through the
//! unedited matrix. Erasing routes a concept to an anchor concept's old
//! outputs, moderation routes it to an unconditional prompt's, and
//! debiasing shifts the concept embedding along weighted attribute
//! directions before projecting. The builders only read `W_old`; they emit
//! plain [`EditItem`]s that callers feed to the solver once per matrix
//! (keys and values are edited by separate calls with the same items
//! rebuilt against each matrix).

use alloc::vec::Vec;

use crate::catalog::{align_tokens, Concept};
use crate::edit::EditItem;
use crate::error::{validation, Result};
use crate::tensor::{Matrix, Vector};

/// Which target-construction rule an edit request uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EditMode {
    Erase,
    Moderate,
    Debias,
}

fn check_concept_dims(w_old: &Matrix, concept: &Concept) -> Result<()> {
    if concept.dim() != w_old.cols() {
        return Err(validation(alloc::format!(
            "concept '{}' has dim {}, matrix expects {}",
            concept.name,
            concept.dim(),
            w_old.cols()
        )));
    }
    Ok(())
}

/// Routes `concept` into `anchor`: one item per aligned token pair
/// `(c, c*)`, with target `W_old c*`.
pub fn build_erase(w_old: &Matrix, concept: &Concept, anchor: &Concept) -> Result<Vec<EditItem>> {
    check_concept_dims(w_old, concept)?;
    check_concept_dims(w_old, anchor)?;
    let pairs = align_tokens(concept, anchor)?;
    Ok(pairs
        .into_iter()
        .map(|(c, c_star)| EditItem::new(c.clone(), w_old.mul_vec(c_star)))
        .collect())
}

/// Routes `concept` into an unconditional prompt. Identical rule to
/// [`build_erase`]; the distinct name keeps call sites self-describing.
pub fn build_moderate(
    w_old: &Matrix,
    concept: &Concept,
    unconditional: &Concept,
) -> Result<Vec<EditItem>> {
    build_erase(w_old, concept, unconditional)
}

/// Shifts every aligned token of `concept` along attribute directions:
/// target `W_old (c + sum_p alpha_p a_p)`, where `a_p` is the last token
/// of attribute `p`. Attribute coefficients may be any sign.
pub fn build_debias(
    w_old: &Matrix,
    concept: &Concept,
    attributes: &[Concept],
    alphas: &[f64],
) -> Result<Vec<EditItem>> {
    check_concept_dims(w_old, concept)?;
    if attributes.is_empty() {
        return Err(validation("debias needs at least one attribute"));
    }
    if attributes.len() != alphas.len() {
        return Err(validation(alloc::format!(
            "got {} attributes but {} alphas",
            attributes.len(),
            alphas.len()
        )));
    }
    for (a, &alpha) in attributes.iter().zip(alphas) {
        check_concept_dims(w_old, a)?;
        if !alpha.is_finite() {
            return Err(validation(alloc::format!(
                "alpha for attribute '{}' is not finite",
                a.name
            )));
        }
    }
    let mut offset = Vector::zeros(w_old.cols());
    for (a, &alpha) in attributes.iter().zip(alphas) {
        offset = offset.add_scaled(alpha, a.last_token());
    }
    Ok(concept
        .tokens
        .iter()
        .map(|c| EditItem::new(c.clone(), w_old.mul_vec(&c.add(&offset))))
        .collect())
}
