//! Closed-form weighted least-squares editing of a projection matrix.
//!
//! An [`EditPlan`] asks for new outputs `v*` at some inputs (the edits)
//! while pinning the old outputs at others (the preserves). The objective
//! being minimized over `W` is
//!
//! ```text
//!   sum_e w_e ||W c_e - v_e*||^2
//! + sum_p w_p ||W c_p - W_old c_p||^2
//! + canon_reg * ||W - W_old||_F^2
//! ```
//!
//! whose unique minimizer is `W_new = B A^-1` with
//!
//! ```text
//! A = sum_e w_e c_e c_e^T + sum_p w_p c_p c_p^T + canon_reg * I
//! B = sum_e w_e v_e* c_e^T + sum_p w_p (W_old c_p) c_p^T + canon_reg * W_old
//! ```
//!
//! The canonical term acts as a uniform preservation pressure along every
//! axis; it both regularizes and completes rank when the preserve set does
//! not span the input space. [`time_solve`] and [`memit_delta_solve`] are
//! restricted variants of the same normal equations kept as independent
//! code paths so their algebraic equivalence with [`uce_solve`] can be
//! asserted in tests rather than assumed.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{validation, Result};
use crate::solve::solve_right_spd;
use crate::tensor::{Matrix, Vector};

/// Default scale for the canonical preservation term, on the dimensionless
/// scale where item weights default to 1. Mid-scale: strong enough to keep
/// the system well conditioned, weak enough not to visibly damp a single
/// edit. Every precision-sensitive caller passes an explicit value.
pub const DEFAULT_CANON_REG: f64 = 0.5;

/// One requested output change: input `c`, desired output `v*`.
#[derive(Debug, Clone, PartialEq)]
pub struct EditItem {
    pub input: Vector,
    pub target: Vector,
    pub weight: f64,
}

impl EditItem {
    pub fn new(input: Vector, target: Vector) -> Self {
        Self {
            input,
            target,
            weight: 1.0,
        }
    }

    pub fn weighted(input: Vector, target: Vector, weight: f64) -> Self {
        Self {
            input,
            target,
            weight,
        }
    }
}

/// One input whose old output must be kept.
#[derive(Debug, Clone, PartialEq)]
pub struct PreserveItem {
    pub input: Vector,
    pub weight: f64,
}

impl PreserveItem {
    pub fn new(input: Vector) -> Self {
        Self { input, weight: 1.0 }
    }

    pub fn weighted(input: Vector, weight: f64) -> Self {
        Self { input, weight }
    }
}

/// A complete editing request against one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EditPlan {
    pub edits: Vec<EditItem>,
    pub preserves: Vec<PreserveItem>,
    /// Scale of the canonical preservation term. Must be positive when
    /// `preserves` is empty, since nothing else guarantees full rank.
    pub canon_reg: f64,
}

impl EditPlan {
    pub fn new(edits: Vec<EditItem>, preserves: Vec<PreserveItem>, canon_reg: f64) -> Self {
        Self {
            edits,
            preserves,
            canon_reg,
        }
    }

    /// Checks every item against the shape of `w_old`, naming the first
    /// offending item. Does not require `edits` to be non-empty; that is a
    /// solve-time requirement, not a structural one.
    pub fn validate_against(&self, w_old: &Matrix) -> Result<()> {
        if !w_old.is_finite() {
            return Err(validation("base matrix has non-finite entries"));
        }
        if !(self.canon_reg.is_finite() && self.canon_reg >= 0.0) {
            return Err(validation("canon_reg must be finite and non-negative"));
        }
        if self.preserves.is_empty() && self.canon_reg == 0.0 {
            return Err(validation(
                "canon_reg must be positive when the preserve set is empty",
            ));
        }
        for (i, e) in self.edits.iter().enumerate() {
            if e.input.dim() != w_old.cols() {
                return Err(validation(format!(
                    "edit item {i}: input dim {} does not match matrix cols {}",
                    e.input.dim(),
                    w_old.cols()
                )));
            }
            if e.target.dim() != w_old.rows() {
                return Err(validation(format!(
                    "edit item {i}: target dim {} does not match matrix rows {}",
                    e.target.dim(),
                    w_old.rows()
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(validation(format!(
                    "edit item {i}: weight must be positive"
                )));
            }
            if !(e.input.is_finite() && e.target.is_finite()) {
                return Err(validation(format!("edit item {i}: non-finite entries")));
            }
        }
        for (i, p) in self.preserves.iter().enumerate() {
            if p.input.dim() != w_old.cols() {
                return Err(validation(format!(
                    "preserve item {i}: input dim {} does not match matrix cols {}",
                    p.input.dim(),
                    w_old.cols()
                )));
            }
            if !(p.weight.is_finite() && p.weight > 0.0) {
                return Err(validation(format!(
                    "preserve item {i}: weight must be positive"
                )));
            }
            if !p.input.is_finite() {
                return Err(validation(format!("preserve item {i}: non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Builds the normal-equation moments `(B, A)` for a plan.
///
/// `A` is accumulated through exactly symmetric rank-one updates, so it
/// equals its transpose to the bit. An empty edit list is allowed here
/// (the result then solves to `w_old`); [`uce_solve`] enforces non-empty
/// edits at the operation level.
pub fn assemble_moments(plan: &EditPlan, w_old: &Matrix) -> Result<(Matrix, Matrix)> {
    plan.validate_against(w_old)?;
    let cols = w_old.cols();

    let mut a = Matrix::zeros(cols, cols);
    for i in 0..cols {
        a.set(i, i, plan.canon_reg);
    }
    let mut b = w_old.scale(plan.canon_reg);

    for e in &plan.edits {
        a.add_outer_in_place(e.weight, &e.input, &e.input);
        b.add_outer_in_place(e.weight, &e.target, &e.input);
    }
    for p in &plan.preserves {
        a.add_outer_in_place(p.weight, &p.input, &p.input);
        b.add_outer_in_place(p.weight, &w_old.mul_vec(&p.input), &p.input);
    }
    Ok((b, a))
}

/// Computes the minimizer `W_new = B A^-1` through a symmetric
/// positive-definite factorization; the inverse is never formed.
pub fn uce_solve(plan: &EditPlan, w_old: &Matrix) -> Result<Matrix> {
    if plan.edits.is_empty() {
        return Err(validation("edit plan has no edit items"));
    }
    let (b, a) = assemble_moments(plan, w_old)?;
    let w_new = solve_right_spd(&b, &a)?;
    if !w_new.is_finite() {
        return Err(validation("solve produced non-finite values"));
    }
    Ok(w_new)
}

/// Single-shot editing without an explicit preserve set:
/// `W = (sum_e w_e v_e* c_e^T + lambda W_old)(sum_e w_e c_e c_e^T + lambda I)^-1`.
///
/// Algebraically this is [`uce_solve`] with an empty preserve list and
/// `canon_reg = lambda`; the assembly is kept separate so that identity is
/// testable instead of true by delegation.
pub fn time_solve(edits: &[EditItem], w_old: &Matrix, lambda: f64) -> Result<Matrix> {
    if edits.is_empty() {
        return Err(validation("time_solve needs at least one edit"));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(validation("lambda must be finite and positive"));
    }
    if !w_old.is_finite() {
        return Err(validation("base matrix has non-finite entries"));
    }
    let cols = w_old.cols();
    let mut a = Matrix::zeros(cols, cols);
    for i in 0..cols {
        a.set(i, i, lambda);
    }
    let mut b = w_old.scale(lambda);
    for (i, e) in edits.iter().enumerate() {
        if e.input.dim() != cols || e.target.dim() != w_old.rows() {
            return Err(validation(format!("edit item {i}: dimension mismatch")));
        }
        if !(e.weight.is_finite() && e.weight > 0.0) {
            return Err(validation(format!(
                "edit item {i}: weight must be positive"
            )));
        }
        if !(e.input.is_finite() && e.target.is_finite()) {
            return Err(validation(format!("edit item {i}: non-finite entries")));
        }
        a.add_outer_in_place(e.weight, &e.input, &e.input);
        b.add_outer_in_place(e.weight, &e.target, &e.input);
    }
    solve_right_spd(&b, &a)
}

/// Computes the additive update `dW` such that `W_old + dW` fits the edits
/// against a fixed preservation Gram matrix `c0`:
/// `dW = (sum_e w_e r_e c_e^T)(sum_e w_e c_e c_e^T + c0)^-1` with residuals
/// `r_e = v_e* - W_old c_e`.
///
/// When `c0` equals a plan's preserve Gram sum plus `canon_reg * I`, the
/// result satisfies `W_old + dW == uce_solve(plan)` exactly in algebra,
/// because preserve targets are the old outputs and so contribute nothing
/// to the residual side.
pub fn memit_delta_solve(edits: &[EditItem], w_old: &Matrix, c0: &Matrix) -> Result<Matrix> {
    if edits.is_empty() {
        return Err(validation("memit_delta_solve needs at least one edit"));
    }
    if !w_old.is_finite() {
        return Err(validation("base matrix has non-finite entries"));
    }
    let cols = w_old.cols();
    if c0.rows() != cols || c0.cols() != cols {
        return Err(validation(format!(
            "c0 must be {cols}x{cols}, got {}x{}",
            c0.rows(),
            c0.cols()
        )));
    }
    if !c0.is_finite() {
        return Err(validation("c0 has non-finite entries"));
    }
    let asym = c0.max_abs_diff(&c0.transpose());
    if asym > 1e-12 * (1.0 + c0.frobenius_norm()) {
        return Err(validation("c0 must be symmetric"));
    }

    let mut a = c0.clone();
    let mut b = Matrix::zeros(w_old.rows(), cols);
    for (i, e) in edits.iter().enumerate() {
        if e.input.dim() != cols || e.target.dim() != w_old.rows() {
            return Err(validation(format!("edit item {i}: dimension mismatch")));
        }
        if !(e.weight.is_finite() && e.weight > 0.0) {
            return Err(validation(format!(
                "edit item {i}: weight must be positive"
            )));
        }
        if !(e.input.is_finite() && e.target.is_finite()) {
            return Err(validation(format!("edit item {i}: non-finite entries")));
        }
        let residual = e.target.sub(&w_old.mul_vec(&e.input));
        a.add_outer_in_place(e.weight, &e.input, &e.input);
        b.add_outer_in_place(e.weight, &residual, &e.input);
    }
    solve_right_spd(&b, &a)
}

/// Evaluates the editing objective at `w`.
pub fn objective_value(w: &Matrix, plan: &EditPlan, w_old: &Matrix) -> Result<f64> {
    plan.validate_against(w_old)?;
    if w.rows() != w_old.rows() || w.cols() != w_old.cols() {
        return Err(validation(
            "candidate matrix shape differs from base matrix",
        ));
    }
    let mut total = 0.0;
    for e in &plan.edits {
        let r = w.mul_vec(&e.input).sub(&e.target);
        total += e.weight * r.dot(&r);
    }
    for p in &plan.preserves {
        let r = w.mul_vec(&p.input).sub(&w_old.mul_vec(&p.input));
        total += p.weight * r.dot(&r);
    }
    let d = w.sub(w_old).frobenius_norm();
    total += plan.canon_reg * d * d;
    Ok(total)
}

/// Frobenius norm of the objective gradient `2 (W A - B)` at `w`, relative
/// to `1 + ||B||_F`. The solve is correct when this is at the level of
/// factorization roundoff.
pub fn relative_gradient_norm(w: &Matrix, plan: &EditPlan, w_old: &Matrix) -> Result<f64> {
    let (b, a) = assemble_moments(plan, w_old)?;
    if w.rows() != w_old.rows() || w.cols() != w_old.cols() {
        return Err(validation(
            "candidate matrix shape differs from base matrix",
        ));
    }
    let grad = w.matmul(&a).sub(&b).scale(2.0);
    Ok(grad.frobenius_norm() / (1.0 + b.frobenius_norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianSource;

    fn vec2(x: f64, y: f64) -> Vector {
        Vector::from_vec(alloc::vec![x, y]).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, g: &mut GaussianSource) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| g.sample())
    }

    fn random_vector(n: usize, g: &mut GaussianSource) -> Vector {
        Vector::from_vec((0..n).map(|_| g.sample()).collect()).unwrap()
    }

    #[test]
    fn moments_match_hand_example() {
        let plan = EditPlan::new(
            alloc::vec![EditItem::new(vec2(1.0, 0.0), vec2(2.0, 0.0))],
            alloc::vec![],
            1.0,
        );
        let (b, a) = assemble_moments(&plan, &Matrix::identity(2)).unwrap();
        assert_eq!(a.data(), &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(b.data(), &[3.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_edit_list_solves_to_base_matrix() {
        let mut g = GaussianSource::new(11);
        let w_old = random_matrix(3, 3, &mut g);
        let plan = EditPlan::new(alloc::vec![], alloc::vec![], 0.7);
        let (b, a) = assemble_moments(&plan, &w_old).unwrap();
        let w = solve_right_spd(&b, &a).unwrap();
        assert!(w.max_abs_diff(&w_old) < 1e-14);
        // The operation-level entry point still refuses the empty plan.
        assert!(uce_solve(&plan, &w_old).is_err());
    }

    #[test]
    fn worked_two_by_two_solve() {
        let plan = EditPlan::new(
            alloc::vec![EditItem::new(vec2(1.0, 0.0), vec2(0.0, 1.0))],
            alloc::vec![],
            1.0,
        );
        let w = uce_solve(&plan, &Matrix::identity(2)).unwrap();
        let expect = Matrix::from_vec(2, 2, alloc::vec![0.5, 0.0, 0.5, 1.0]).unwrap();
        assert!(w.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn matching_targets_are_a_fixed_point() {
        let mut g = GaussianSource::new(5);
        let w_old = random_matrix(4, 4, &mut g);
        let edits: Vec<EditItem> = (0..3)
            .map(|_| {
                let c = random_vector(4, &mut g);
                let v = w_old.mul_vec(&c);
                EditItem::new(c, v)
            })
            .collect();
        let preserves = alloc::vec![PreserveItem::new(random_vector(4, &mut g))];
        let plan = EditPlan::new(edits, preserves, 0.5);
        let w = uce_solve(&plan, &w_old).unwrap();
        assert!(w.sub(&w_old).frobenius_norm() < 1e-10);
    }

    #[test]
    fn objective_hand_example_is_two() {
        let plan = EditPlan::new(
            alloc::vec![EditItem::new(vec2(1.0, 0.0), vec2(0.0, 1.0))],
            alloc::vec![PreserveItem::new(vec2(0.0, 1.0))],
            0.0,
        );
        let w = Matrix::identity(2);
        assert_eq!(objective_value(&w, &plan, &w).unwrap(), 2.0);
    }

    #[test]
    fn objective_is_zero_at_exact_fit() {
        let mut g = GaussianSource::new(9);
        let w_old = random_matrix(3, 3, &mut g);
        let c = random_vector(3, &mut g);
        let plan = EditPlan::new(
            alloc::vec![EditItem::new(c.clone(), w_old.mul_vec(&c))],
            alloc::vec![],
            0.5,
        );
        assert_eq!(objective_value(&w_old, &plan, &w_old).unwrap(), 0.0);
    }

    #[test]
    fn solve_is_stationary() {
        let mut g = GaussianSource::new(21);
        let w_old = random_matrix(5, 6, &mut g);
        let edits: Vec<EditItem> = (0..2)
            .map(|_| EditItem::new(random_vector(6, &mut g), random_vector(5, &mut g)))
            .collect();
        let preserves: Vec<PreserveItem> = (0..3)
            .map(|_| PreserveItem::new(random_vector(6, &mut g)))
            .collect();
        let plan = EditPlan::new(edits, preserves, 0.5);
        let w = uce_solve(&plan, &w_old).unwrap();
        assert!(relative_gradient_norm(&w, &plan, &w_old).unwrap() <= 1e-8);
    }

    #[test]
    fn time_matches_the_general_solver() {
        let mut g = GaussianSource::new(33);
        let w_old = random_matrix(4, 4, &mut g);
        let edits: Vec<EditItem> = (0..2)
            .map(|_| EditItem::new(random_vector(4, &mut g), random_vector(4, &mut g)))
            .collect();
        let lambda = 0.8;
        let via_time = time_solve(&edits, &w_old, lambda).unwrap();
        let plan = EditPlan::new(edits, alloc::vec![], lambda);
        let via_uce = uce_solve(&plan, &w_old).unwrap();
        assert!(via_time.sub(&via_uce).frobenius_norm() < 1e-10);
    }

    #[test]
    fn time_with_huge_lambda_pins_the_base() {
        let mut g = GaussianSource::new(40);
        let w_old = random_matrix(4, 4, &mut g);
        let c = random_vector(4, &mut g);
        let c = c.scale(1.0 / c.norm());
        let edits = alloc::vec![EditItem::new(c, random_vector(4, &mut g))];
        let w = time_solve(&edits, &w_old, 1e9).unwrap();
        assert!(w.sub(&w_old).frobenius_norm() <= 1e-6);
    }

    #[test]
    fn zero_residual_edits_give_zero_delta() {
        let mut g = GaussianSource::new(50);
        let w_old = random_matrix(3, 3, &mut g);
        let c = random_vector(3, &mut g);
        let edits = alloc::vec![EditItem::new(c.clone(), w_old.mul_vec(&c))];
        let c0 = Matrix::identity(3).scale(0.5);
        let delta = memit_delta_solve(&edits, &w_old, &c0).unwrap();
        assert!(delta.frobenius_norm() < 1e-12);
    }

    #[test]
    fn near_zero_gram_gives_the_rank_one_update() {
        let mut g = GaussianSource::new(60);
        let w_old = random_matrix(3, 3, &mut g);
        let c = random_vector(3, &mut g);
        let c = c.scale(1.0 / c.norm());
        let v = random_vector(3, &mut g);
        let edits = alloc::vec![EditItem::new(c.clone(), v.clone())];
        let c0 = Matrix::identity(3).scale(1e-9);
        let delta = memit_delta_solve(&edits, &w_old, &c0).unwrap();
        let r = v.sub(&w_old.mul_vec(&c));
        let mut expect = Matrix::zeros(3, 3);
        expect.add_outer_in_place(1.0, &r, &c);
        assert!(delta.max_abs_diff(&expect) < 1e-6);
    }

    #[test]
    fn memit_rejects_asymmetric_gram() {
        let w_old = Matrix::identity(2);
        let edits = alloc::vec![EditItem::new(vec2(1.0, 0.0), vec2(0.0, 1.0))];
        let c0 = Matrix::from_vec(2, 2, alloc::vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(memit_delta_solve(&edits, &w_old, &c0).is_err());
    }

    #[test]
    fn validation_names_the_offending_item() {
        let plan = EditPlan::new(
            alloc::vec![
                EditItem::new(vec2(1.0, 0.0), vec2(0.0, 1.0)),
                EditItem::new(
                    Vector::from_vec(alloc::vec![1.0, 0.0, 0.0]).unwrap(),
                    vec2(0.0, 1.0),
                ),
            ],
            alloc::vec![],
            1.0,
        );
        let err = uce_solve(&plan, &Matrix::identity(2)).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("edit item 1"), "unexpected message: {msg}");
    }

    #[test]
    fn zero_canon_reg_without_preserves_is_rejected() {
        let plan = EditPlan::new(
            alloc::vec![EditItem::new(vec2(1.0, 0.0), vec2(0.0, 1.0))],
            alloc::vec![],
            0.0,
        );
        assert!(uce_solve(&plan, &Matrix::identity(2)).is_err());
    }

    #[test]
    fn non_positive_weights_are_rejected() {
        let plan = EditPlan::new(
            alloc::vec![EditItem::weighted(vec2(1.0, 0.0), vec2(0.0, 1.0), 0.0)],
            alloc::vec![],
            1.0,
        );
        assert!(uce_solve(&plan, &Matrix::identity(2)).is_err());
    }

    #[test]
    fn moment_matrix_is_bit_exactly_symmetric() {
        let mut g = GaussianSource::new(77);
        let w_old = random_matrix(6, 6, &mut g);
        let edits: Vec<EditItem> = (0..4)
            .map(|_| EditItem::weighted(random_vector(6, &mut g), random_vector(6, &mut g), 1.5))
            .collect();
        let preserves: Vec<PreserveItem> = (0..3)
            .map(|_| PreserveItem::weighted(random_vector(6, &mut g), 2.5))
            .collect();
        let plan = EditPlan::new(edits, preserves, 0.3);
        let (_, a) = assemble_moments(&plan, &w_old).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
            }
        }
    }
}
