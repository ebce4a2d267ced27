//! Iterative attribute rebalancing.
//!
//! The driver measures how often each attribute wins for a concept (through
//! a pluggable [`RatioOracle`]), nudges per-attribute coefficients, rebuilds
//! debias targets, and re-solves until every concept's measured ratios are
//! within a threshold of the desired ones.
//!
//! Two wiring choices matter and are easy to get wrong:
//!
//! - **Coefficients accumulate against the frozen original matrices.** Each
//!   iteration's targets are `W_frozen (c + sum_p alpha_p a_p)` with the
//!   cumulative `alpha`, and the solve starts from the frozen originals.
//!   Compounding edits on already-edited matrices degrades them; deriving
//!   from the original keeps every iteration a single clean edit.
//! - **The update runs opposite the measured excess.** [`compute_alpha`]
//!   reports `eta * (measured - desired)` per attribute; the loop subtracts
//!   it, so an over-represented attribute gets a more negative coefficient,
//!   shifting the concept embedding away from that attribute. Adding the
//!   raw excess instead would amplify it, and the loop would diverge.
//!
//! Concepts whose ratios are already close enough migrate to the preserve
//! side and never return. Their coefficients freeze and their edit items
//! stay in every later solve, which holds their debiased outputs in place
//! while the remaining concepts keep moving (for a concept migrated with
//! zero coefficients this degenerates to an exact preserve constraint).
//!
//! After the last solve changed anything, non-convergence at the iteration
//! cap is a reported outcome carrying the full trace, not an error.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::builders::build_debias;
use crate::catalog::Concept;
use crate::edit::{uce_solve, EditItem, EditPlan, PreserveItem, DEFAULT_CANON_REG};
use crate::error::{validation, Result};
use crate::rng::{derive_seed, GaussianSource};
use crate::tensor::Matrix;

/// Probabilities over attributes: entries in `[0, 1]` summing to 1 within
/// 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioVector {
    probs: Vec<f64>,
}

impl RatioVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(validation("ratio vector must be nonempty"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(validation(alloc::format!(
                    "ratio entry {i} is {p}, expected a probability in [0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(validation(alloc::format!(
                "ratios sum to {sum}, expected 1 within 1e-9"
            )));
        }
        Ok(Self { probs })
    }

    /// The even distribution over `n` attributes.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(validation("ratio vector must be nonempty"));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest per-attribute absolute difference from `other`.
    pub fn max_abs_deviation(&self, other: &RatioVector) -> f64 {
        assert_eq!(self.len(), other.len(), "ratio length mismatch");
        let mut m = 0.0f64;
        for (a, b) in self.probs.iter().zip(&other.probs) {
            let d = libm::fabs(a - b);
            if d > m {
                m = d;
            }
        }
        m
    }
}

/// Measures attribute ratios for a concept under the current matrices.
/// Implementations must be pure: identical inputs (including the seed)
/// must yield identical ratios.
pub trait RatioOracle {
    fn measure(
        &self,
        w_k: Option<&Matrix>,
        w_v: &Matrix,
        concept: &Concept,
        attributes: &[Concept],
        n_samples: usize,
        seed: u64,
    ) -> Result<RatioVector>;
}

/// Deterministic stand-in for a real classifier.
///
/// Holds the pre-edit value matrix so attribute anchors stay fixed while
/// the edited matrix moves. Each sample perturbs the concept's projected
/// output with seeded Gaussian noise and votes for the attribute anchor
/// with the highest inner product; ratios are the vote shares.
#[derive(Debug, Clone)]
pub struct SyntheticRatioOracle {
    w_v_frozen: Matrix,
    noise_scale: f64,
    temperature: f64,
}

impl SyntheticRatioOracle {
    /// Default sampling noise scale in output space.
    pub const DEFAULT_NOISE_SCALE: f64 = 0.05;

    pub fn new(w_v_frozen: Matrix) -> Self {
        Self {
            w_v_frozen,
            noise_scale: Self::DEFAULT_NOISE_SCALE,
            temperature: 1.0,
        }
    }

    pub fn with_params(w_v_frozen: Matrix, noise_scale: f64, temperature: f64) -> Result<Self> {
        if !(noise_scale.is_finite() && noise_scale >= 0.0) {
            return Err(validation("noise_scale must be finite and non-negative"));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(validation("temperature must be finite and positive"));
        }
        Ok(Self {
            w_v_frozen,
            noise_scale,
            temperature,
        })
    }
}

impl RatioOracle for SyntheticRatioOracle {
    fn measure(
        &self,
        _w_k: Option<&Matrix>,
        w_v: &Matrix,
        concept: &Concept,
        attributes: &[Concept],
        n_samples: usize,
        seed: u64,
    ) -> Result<RatioVector> {
        if attributes.is_empty() {
            return Err(validation("oracle needs at least one attribute"));
        }
        if n_samples == 0 {
            return Err(validation("n_samples must be at least 1"));
        }
        if w_v.rows() != self.w_v_frozen.rows() || w_v.cols() != self.w_v_frozen.cols() {
            return Err(validation(
                "edited matrix shape differs from the frozen one",
            ));
        }
        if concept.dim() != w_v.cols() {
            return Err(validation(alloc::format!(
                "concept '{}' dim {} does not match matrix cols {}",
                concept.name,
                concept.dim(),
                w_v.cols()
            )));
        }
        for a in attributes {
            if a.dim() != w_v.cols() {
                return Err(validation(alloc::format!(
                    "attribute '{}' dim {} does not match matrix cols {}",
                    a.name,
                    a.dim(),
                    w_v.cols()
                )));
            }
        }

        let anchors: Vec<Vec<f64>> = attributes
            .iter()
            .map(|a| self.w_v_frozen.mul_vec(a.last_token()).as_slice().to_vec())
            .collect();
        let base = w_v.mul_vec(concept.last_token());
        let base = base.as_slice();
        let rows = w_v.rows();

        let mut gauss = GaussianSource::new(seed);
        let mut z = vec![0.0f64; rows];
        let mut tallies = vec![0usize; attributes.len()];
        for _ in 0..n_samples {
            gauss.fill(&mut z);
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (p, anchor) in anchors.iter().enumerate() {
                let mut s = 0.0;
                for i in 0..rows {
                    s += (base[i] + self.noise_scale * z[i]) * anchor[i];
                }
                s /= self.temperature;
                // First-wins tie break keeps the tally deterministic.
                if s > best_score {
                    best_score = s;
                    best = p;
                }
            }
            tallies[best] += 1;
        }
        RatioVector::new(
            tallies
                .iter()
                .map(|&t| t as f64 / n_samples as f64)
                .collect(),
        )
    }
}

/// Per-attribute step `eta * (measured - desired)`: the signed excess of
/// each attribute, scaled by the learning rate. Callers decide the
/// direction in which to apply it; see the module docs.
pub fn compute_alpha(measured: &RatioVector, desired: &RatioVector, eta: f64) -> Result<Vec<f64>> {
    if measured.len() != desired.len() {
        return Err(validation(alloc::format!(
            "measured has {} attributes, desired has {}",
            measured.len(),
            desired.len()
        )));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(validation("eta must be finite and positive"));
    }
    Ok(measured
        .probs()
        .iter()
        .zip(desired.probs())
        .map(|(m, d)| eta * (m - d))
        .collect())
}

/// Knobs for [`debias_loop`]. `Default` gives the documented defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasConfig {
    pub eta: f64,
    pub threshold: f64,
    pub max_iters: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub canon_reg: f64,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            threshold: 0.05,
            max_iters: 50,
            n_samples: 200,
            seed: 0,
            canon_reg: DEFAULT_CANON_REG,
        }
    }
}

/// Membership and coefficient bookkeeping at the end of a run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DebiasState {
    /// Concepts still being edited when the loop stopped.
    pub edit_list: Vec<String>,
    /// User-supplied preserve concepts followed by migrated ones, in
    /// migration order. Never loses a member.
    pub preserve_list: Vec<String>,
    /// Cumulative per-attribute coefficients, one entry per edit concept in
    /// input order.
    pub alphas: Vec<ConceptAlphas>,
    /// Iterations executed (measurement rounds).
    pub iteration: usize,
}

/// Cumulative coefficients for one concept.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConceptAlphas {
    pub concept: String,
    pub alphas: Vec<f64>,
}

/// One measurement event: what the oracle saw for one concept at one
/// iteration, and the cumulative coefficients in effect after the update.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TraceRecord {
    pub iteration: usize,
    pub concept: String,
    pub ratios: Vec<f64>,
    pub alphas: Vec<f64>,
    pub converged: bool,
}

/// Everything a debias run produces.
#[derive(Debug, Clone)]
pub struct DebiasRun {
    /// Edited key matrix; `None` when the run was value-only.
    pub w_k: Option<Matrix>,
    pub w_v: Matrix,
    pub state: DebiasState,
    pub trace: Vec<TraceRecord>,
    /// True when every concept migrated before the iteration cap.
    pub converged: bool,
}

/// Runs the measurement/update/solve loop.
///
/// Each iteration measures every still-active concept with the oracle
/// (seeded per concept, constant across iterations, so successive
/// measurements differ only through the matrices), migrates those within
/// `threshold`, updates the rest's coefficients, and re-solves both
/// matrices from the frozen originals over all concepts' current targets
/// plus the preserve set. Reaching `max_iters` with active concepts left
/// returns `converged = false` with the trace intact.
#[allow(clippy::too_many_arguments)]
pub fn debias_loop(
    w_k: Option<&Matrix>,
    w_v: &Matrix,
    edit_concepts: &[Concept],
    preserve_concepts: &[Concept],
    attributes: &[Concept],
    desired: &[RatioVector],
    oracle: &dyn RatioOracle,
    cfg: &DebiasConfig,
) -> Result<DebiasRun> {
    if edit_concepts.is_empty() {
        return Err(validation("debias needs at least one edit concept"));
    }
    if attributes.is_empty() {
        return Err(validation("debias needs at least one attribute"));
    }
    if desired.len() != edit_concepts.len() {
        return Err(validation(alloc::format!(
            "got {} desired ratio vectors for {} edit concepts",
            desired.len(),
            edit_concepts.len()
        )));
    }
    for (i, d) in desired.iter().enumerate() {
        if d.len() != attributes.len() {
            return Err(validation(alloc::format!(
                "desired ratios for concept {i} have {} entries, expected {}",
                d.len(),
                attributes.len()
            )));
        }
    }
    if !(cfg.eta.is_finite() && cfg.eta > 0.0) {
        return Err(validation("eta must be finite and positive"));
    }
    if !(cfg.threshold.is_finite() && cfg.threshold >= 0.0) {
        return Err(validation("threshold must be finite and non-negative"));
    }
    if cfg.n_samples == 0 {
        return Err(validation("n_samples must be at least 1"));
    }
    for (i, c) in edit_concepts.iter().enumerate() {
        if edit_concepts[..i].iter().any(|o| o.name == c.name) {
            return Err(validation(alloc::format!(
                "duplicate edit concept '{}'",
                c.name
            )));
        }
        if preserve_concepts.iter().any(|p| p.name == c.name) {
            return Err(validation(alloc::format!(
                "concept '{}' appears in both edit and preserve lists",
                c.name
            )));
        }
    }
    if let Some(wk) = w_k {
        if wk.cols() != w_v.cols() {
            return Err(validation("key and value matrices must share input dim"));
        }
    }

    let n_concepts = edit_concepts.len();
    let mut alphas: Vec<Vec<f64>> = vec![vec![0.0; attributes.len()]; n_concepts];
    let mut active = vec![true; n_concepts];
    let mut preserve_list: Vec<String> = preserve_concepts.iter().map(|c| c.name.clone()).collect();
    let mut w_v_cur = w_v.clone();
    let mut w_k_cur = w_k.cloned();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations_run = 0;

    let preserve_items: Vec<PreserveItem> = preserve_concepts
        .iter()
        .flat_map(|c| c.tokens.iter().map(|t| PreserveItem::new(t.clone())))
        .collect();

    for it in 1..=cfg.max_iters {
        iterations_run = it;

        for (idx, concept) in edit_concepts.iter().enumerate() {
            if !active[idx] {
                continue;
            }
            // One seed stream per concept, reused every iteration: the
            // measurement noise is held constant so ratio changes reflect
            // only the matrices.
            let seed = derive_seed(cfg.seed, idx as u64);
            let measured = oracle.measure(
                w_k_cur.as_ref(),
                &w_v_cur,
                concept,
                attributes,
                cfg.n_samples,
                seed,
            )?;
            let within = measured.max_abs_deviation(&desired[idx]) < cfg.threshold;
            if within {
                active[idx] = false;
                preserve_list.push(concept.name.clone());
            } else {
                let step = compute_alpha(&measured, &desired[idx], cfg.eta)?;
                for (a, s) in alphas[idx].iter_mut().zip(&step) {
                    *a -= s;
                }
            }
            trace.push(TraceRecord {
                iteration: it,
                concept: concept.name.clone(),
                ratios: measured.probs().to_vec(),
                alphas: alphas[idx].clone(),
                converged: within,
            });
        }

        if active.iter().all(|a| !a) {
            // Everything migrated; the matrices already carry the state the
            // oracle just accepted, so no further solve is needed.
            converged = true;
            break;
        }

        // Rebuild every concept's targets (frozen coefficients for migrated
        // ones) and solve both matrices from the frozen originals.
        let mut items_v: Vec<EditItem> = Vec::new();
        let mut items_k: Vec<EditItem> = Vec::new();
        for (idx, concept) in edit_concepts.iter().enumerate() {
            items_v.extend(build_debias(w_v, concept, attributes, &alphas[idx])?);
            if let Some(wk0) = w_k {
                items_k.extend(build_debias(wk0, concept, attributes, &alphas[idx])?);
            }
        }
        let plan_v = EditPlan::new(items_v, preserve_items.clone(), cfg.canon_reg);
        w_v_cur = uce_solve(&plan_v, w_v)?;
        if let Some(wk0) = w_k {
            let plan_k = EditPlan::new(items_k, preserve_items.clone(), cfg.canon_reg);
            w_k_cur = Some(uce_solve(&plan_k, wk0)?);
        }
    }

    let state = DebiasState {
        edit_list: edit_concepts
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(_, c)| c.name.clone())
            .collect(),
        preserve_list,
        alphas: edit_concepts
            .iter()
            .zip(&alphas)
            .map(|(c, a)| ConceptAlphas {
                concept: c.name.clone(),
                alphas: a.clone(),
            })
            .collect(),
        iteration: iterations_run,
    };
    Ok(DebiasRun {
        w_k: w_k_cur,
        w_v: w_v_cur,
        state,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Vector;

    fn single(name: &str, v: Vec<f64>) -> Concept {
        Concept::new(name, vec![Vector::from_vec(v).unwrap()]).unwrap()
    }

    #[test]
    fn ratio_vector_validates() {
        assert!(RatioVector::new(vec![0.5, 0.5]).is_ok());
        assert!(RatioVector::new(vec![0.6, 0.6]).is_err());
        assert!(RatioVector::new(vec![1.2, -0.2]).is_err());
        assert!(RatioVector::new(vec![]).is_err());
        assert!(RatioVector::uniform(3).is_ok());
    }

    #[test]
    fn alpha_is_zero_at_the_target() {
        let r = RatioVector::new(vec![0.3, 0.7]).unwrap();
        let a = compute_alpha(&r, &r, 0.5).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn alpha_hand_example() {
        let measured = RatioVector::new(vec![0.9, 0.1]).unwrap();
        let desired = RatioVector::new(vec![0.5, 0.5]).unwrap();
        let a = compute_alpha(&measured, &desired, 1.0).unwrap();
        assert!((a[0] - 0.4).abs() <= 1e-15);
        assert!((a[1] + 0.4).abs() <= 1e-15);
    }

    #[test]
    fn alpha_is_linear_in_eta() {
        let measured = RatioVector::new(vec![0.8, 0.2]).unwrap();
        let desired = RatioVector::new(vec![0.5, 0.5]).unwrap();
        let a1 = compute_alpha(&measured, &desired, 1.0).unwrap();
        let a2 = compute_alpha(&measured, &desired, 2.0).unwrap();
        for (x1, x2) in a1.iter().zip(&a2) {
            assert_eq!(x2.to_bits(), (x1 * 2.0).to_bits());
        }
    }

    #[test]
    fn alpha_rejects_length_mismatch() {
        let a = RatioVector::new(vec![1.0]).unwrap();
        let b = RatioVector::new(vec![0.5, 0.5]).unwrap();
        assert!(compute_alpha(&a, &b, 0.5).is_err());
    }

    #[test]
    fn oracle_is_deterministic() {
        let w = Matrix::identity(4);
        let oracle = SyntheticRatioOracle::new(w.clone());
        let c = single("c", vec![0.5, 0.5, 0.0, 0.0]);
        let attrs = [
            single("a1", vec![1.0, 0.0, 0.0, 0.0]),
            single("a2", vec![0.0, 1.0, 0.0, 0.0]),
        ];
        let r1 = oracle.measure(None, &w, &c, &attrs, 500, 42).unwrap();
        let r2 = oracle.measure(None, &w, &c, &attrs, 500, 42).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn single_attribute_always_wins() {
        let w = Matrix::identity(3);
        let oracle = SyntheticRatioOracle::new(w.clone());
        let c = single("c", vec![1.0, 0.0, 0.0]);
        let attrs = [single("a", vec![0.0, 1.0, 0.0])];
        let r = oracle.measure(None, &w, &c, &attrs, 50, 7).unwrap();
        assert_eq!(r.probs(), &[1.0]);
    }

    #[test]
    fn equidistant_concept_splits_evenly() {
        let w = Matrix::identity(4);
        let oracle = SyntheticRatioOracle::new(w.clone());
        let c = single("c", vec![0.5, 0.5, 0.0, 0.0]);
        let attrs = [
            single("a1", vec![1.0, 0.0, 0.0, 0.0]),
            single("a2", vec![0.0, 1.0, 0.0, 0.0]),
        ];
        let r = oracle.measure(None, &w, &c, &attrs, 10000, 123).unwrap();
        for &p in r.probs() {
            assert!((0.45..=0.55).contains(&p), "ratio {p} outside [0.45, 0.55]");
        }
    }

    #[test]
    fn temperature_rescales_scores_without_changing_votes() {
        let w = Matrix::identity(4);
        let c = single("c", vec![0.7, 0.3, 0.0, 0.0]);
        let attrs = [
            single("a1", vec![1.0, 0.0, 0.0, 0.0]),
            single("a2", vec![0.0, 1.0, 0.0, 0.0]),
        ];
        let o1 = SyntheticRatioOracle::with_params(w.clone(), 0.05, 1.0).unwrap();
        let o2 = SyntheticRatioOracle::with_params(w.clone(), 0.05, 3.5).unwrap();
        let r1 = o1.measure(None, &w, &c, &attrs, 400, 9).unwrap();
        let r2 = o2.measure(None, &w, &c, &attrs, 400, 9).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn zero_attributes_rejected_by_oracle() {
        let w = Matrix::identity(3);
        let oracle = SyntheticRatioOracle::new(w.clone());
        let c = single("c", vec![1.0, 0.0, 0.0]);
        assert!(oracle.measure(None, &w, &c, &[], 10, 0).is_err());
    }

    #[test]
    fn zero_iteration_cap_reports_non_convergence_untouched() {
        let w_v = Matrix::identity(3);
        let w_k = Matrix::identity(3);
        let oracle = SyntheticRatioOracle::new(w_v.clone());
        let c = single("c", vec![1.0, 0.0, 0.0]);
        let attrs = [
            single("a1", vec![0.9, 0.1, 0.0]),
            single("a2", vec![0.0, 0.0, 1.0]),
        ];
        let desired = [RatioVector::uniform(2).unwrap()];
        let cfg = DebiasConfig {
            max_iters: 0,
            ..DebiasConfig::default()
        };
        let run =
            debias_loop(Some(&w_k), &w_v, &[c], &[], &attrs, &desired, &oracle, &cfg).unwrap();
        assert!(!run.converged);
        assert_eq!(run.state.iteration, 0);
        assert!(run.trace.is_empty());
        assert_eq!(run.w_v, w_v);
        assert_eq!(run.w_k.unwrap(), w_k);
    }

    #[test]
    fn already_balanced_concept_migrates_without_a_solve() {
        // Concept projects equidistant from both anchors, so the very first
        // measurement is inside the threshold and the matrices come back
        // bit-identical to the inputs.
        let w_v = Matrix::identity(4);
        let w_k = Matrix::identity(4);
        let oracle = SyntheticRatioOracle::new(w_v.clone());
        let c = single("c", vec![0.5, 0.5, 0.0, 0.0]);
        let attrs = [
            single("a1", vec![1.0, 0.0, 0.0, 0.0]),
            single("a2", vec![0.0, 1.0, 0.0, 0.0]),
        ];
        let desired = [RatioVector::uniform(2).unwrap()];
        let cfg = DebiasConfig {
            threshold: 0.2,
            ..DebiasConfig::default()
        };
        let run =
            debias_loop(Some(&w_k), &w_v, &[c], &[], &attrs, &desired, &oracle, &cfg).unwrap();
        assert!(run.converged);
        assert_eq!(run.state.iteration, 1);
        assert_eq!(run.w_v, w_v);
        assert_eq!(run.w_k.unwrap(), w_k);
        assert_eq!(run.state.preserve_list, vec![String::from("c")]);
        assert!(run.state.edit_list.is_empty());
        assert_eq!(run.trace.len(), 1);
        assert!(run.trace[0].converged);
    }

    #[test]
    fn edit_and_preserve_overlap_rejected() {
        let w_v = Matrix::identity(3);
        let oracle = SyntheticRatioOracle::new(w_v.clone());
        let c = single("c", vec![1.0, 0.0, 0.0]);
        let attrs = [single("a", vec![0.0, 1.0, 0.0])];
        let desired = [RatioVector::uniform(1).unwrap()];
        let err = debias_loop(
            None,
            &w_v,
            core::slice::from_ref(&c),
            core::slice::from_ref(&c),
            &attrs,
            &desired,
            &oracle,
            &DebiasConfig::default(),
        );
        assert!(err.is_err());
    }
}
