//! Quantitative checks on edited matrices.
//!
//! Everything here measures in embedding space: residuals against edit
//! targets, output drift on preserved and held-out inputs, the relative
//! bias deviation, a minimal attention forward pass, and a gradient-descent
//! minimizer used as an independent reference for the closed-form solver.
//! No image-space metric is emulated; drift norms are the desk-scale
//! analog.

use alloc::vec::Vec;

use crate::catalog::Concept;
use crate::edit::{objective_value, EditPlan};
use crate::error::{validation, Error, Result};
use crate::tensor::Matrix;

/// Step cap for [`gradient_descent_reference`] when callers have no better
/// number.
pub const DEFAULT_GD_STEPS: usize = 100_000;

/// Norm-level summary of one edit, comparing the new matrix against the
/// old one on every input the plan mentions plus a holdout set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EditReport {
    /// `||W_new c - v*||` per edit item, in plan order.
    pub edit_residuals: Vec<f64>,
    /// `||W_new c - W_old c||` per preserve item, in plan order.
    pub preserve_drifts: Vec<f64>,
    /// Same drift norm for every token of every holdout concept, flattened
    /// in concept-then-token order.
    pub holdout_drifts: Vec<f64>,
    pub objective_before: f64,
    pub objective_after: f64,
}

/// Builds an [`EditReport`] for `w_new` against `w_old` under `plan`.
pub fn edit_report(
    w_old: &Matrix,
    w_new: &Matrix,
    plan: &EditPlan,
    holdout: &[Concept],
) -> Result<EditReport> {
    plan.validate_against(w_old)?;
    if w_new.rows() != w_old.rows() || w_new.cols() != w_old.cols() {
        return Err(validation("edited matrix shape differs from base matrix"));
    }
    for h in holdout {
        if h.dim() != w_old.cols() {
            return Err(validation(alloc::format!(
                "holdout concept '{}' has dim {}, matrix expects {}",
                h.name,
                h.dim(),
                w_old.cols()
            )));
        }
    }
    let edit_residuals = plan
        .edits
        .iter()
        .map(|e| w_new.mul_vec(&e.input).distance(&e.target))
        .collect();
    let preserve_drifts = plan
        .preserves
        .iter()
        .map(|p| w_new.mul_vec(&p.input).distance(&w_old.mul_vec(&p.input)))
        .collect();
    let holdout_drifts = holdout
        .iter()
        .flat_map(|c| {
            c.tokens
                .iter()
                .map(|t| w_new.mul_vec(t).distance(&w_old.mul_vec(t)))
        })
        .collect();
    Ok(EditReport {
        edit_residuals,
        preserve_drifts,
        holdout_drifts,
        objective_before: objective_value(w_old, plan, w_old)?,
        objective_after: objective_value(w_new, plan, w_old)?,
    })
}

/// Relative deviation of an achieved attribute share from the desired one:
/// `|p_desired - p_actual| / p_desired`. Zero means the target share was
/// hit exactly; 1 means the attribute is off by its entire desired share.
pub fn delta_bias(p_actual: f64, p_desired: f64) -> Result<f64> {
    if !(p_actual.is_finite() && (0.0..=1.0).contains(&p_actual)) {
        return Err(validation("p_actual must be in [0, 1]"));
    }
    if !(p_desired.is_finite() && p_desired > 0.0 && p_desired <= 1.0) {
        return Err(validation("p_desired must be in (0, 1]"));
    }
    Ok(libm::fabs(p_desired - p_actual) / p_desired)
}

/// Minimal attention forward pass: row-wise softmax of `q K^T` (plain
/// softmax, no scaling factor), then the weighted sum of `V` rows.
///
/// `q` is tokens_img x d_head, `k` is tokens_txt x d_head, `v` is
/// tokens_txt x d_out. Logits are max-shifted before exponentiation so
/// large magnitudes cannot overflow; each attention row sums to 1 within
/// 1e-12.
pub fn toy_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    if q.cols() != k.cols() {
        return Err(validation(alloc::format!(
            "query dim {} does not match key dim {}",
            q.cols(),
            k.cols()
        )));
    }
    if k.rows() != v.rows() {
        return Err(validation(alloc::format!(
            "{} key rows but {} value rows",
            k.rows(),
            v.rows()
        )));
    }
    if !(q.is_finite() && k.is_finite() && v.is_finite()) {
        return Err(validation("attention inputs must be finite"));
    }
    let logits = q.matmul(&k.transpose());
    let mut weights = Matrix::zeros(q.rows(), k.rows());
    for i in 0..q.rows() {
        let row = logits.row(i);
        let mut max = f64::NEG_INFINITY;
        for &x in row {
            if x > max {
                max = x;
            }
        }
        let mut sum = 0.0;
        let mut exps: Vec<f64> = Vec::with_capacity(row.len());
        for &x in row {
            let e = libm::exp(x - max);
            exps.push(e);
            sum += e;
        }
        for (j, e) in exps.into_iter().enumerate() {
            weights.set(i, j, e / sum);
        }
    }
    Ok(weights.matmul(v))
}

/// Full-batch gradient descent on the editing objective, starting from
/// `w_old`.
///
/// This is the reference the closed-form solver is validated against, so
/// its gradient is accumulated directly from the plan items here and must
/// not be routed through the moment assembly the solver uses. Stops early
/// when the gradient's Frobenius norm falls below 1e-10; reports
/// [`Error::Divergence`] after ten consecutive objective increases.
pub fn gradient_descent_reference(
    plan: &EditPlan,
    w_old: &Matrix,
    steps: usize,
    lr: f64,
) -> Result<Matrix> {
    plan.validate_against(w_old)?;
    if !(lr.is_finite() && lr > 0.0) {
        return Err(validation("learning rate must be finite and positive"));
    }
    let mut w = w_old.clone();
    let mut obj_prev = objective_value(&w, plan, w_old)?;
    let mut rising = 0usize;
    for step in 0..steps {
        let mut grad = w.sub(w_old).scale(plan.canon_reg);
        for e in &plan.edits {
            let r = w.mul_vec(&e.input).sub(&e.target);
            grad.add_outer_in_place(e.weight, &r, &e.input);
        }
        for p in &plan.preserves {
            let r = w.mul_vec(&p.input).sub(&w_old.mul_vec(&p.input));
            grad.add_outer_in_place(p.weight, &r, &p.input);
        }
        let grad = grad.scale(2.0);
        if grad.frobenius_norm() < 1e-10 {
            break;
        }
        w.add_scaled_in_place(-lr, &grad);
        let obj = objective_value(&w, plan, w_old)?;
        if obj > obj_prev {
            rising += 1;
            if rising >= 10 {
                return Err(Error::Divergence { step });
            }
        } else {
            rising = 0;
        }
        obj_prev = obj;
    }
    Ok(w)
}

/// A learning rate guaranteed stable for [`gradient_descent_reference`] on
/// this plan: half the reciprocal of a Gershgorin bound on the largest
/// eigenvalue of the quadratic term. The objective's per-row Hessian is
/// `2A`, so any rate below `1 / (2 * lambda_max)` converges; this returns
/// half that.
pub fn stable_learning_rate(plan: &EditPlan, w_old: &Matrix) -> Result<f64> {
    plan.validate_against(w_old)?;
    let cols = w_old.cols();
    let mut a = Matrix::zeros(cols, cols);
    for i in 0..cols {
        a.set(i, i, plan.canon_reg);
    }
    for e in &plan.edits {
        a.add_outer_in_place(e.weight, &e.input, &e.input);
    }
    for p in &plan.preserves {
        a.add_outer_in_place(p.weight, &p.input, &p.input);
    }
    let mut bound = 0.0f64;
    for i in 0..cols {
        let mut row_sum = 0.0;
        for j in 0..cols {
            row_sum += libm::fabs(a.get(i, j));
        }
        if row_sum > bound {
            bound = row_sum;
        }
    }
    if bound == 0.0 {
        return Err(validation("plan has no quadratic term"));
    }
    Ok(0.5 / (2.0 * bound))
}
