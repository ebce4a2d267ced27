//! Invariants of the closed-form solver family over randomized plans.

use proptest::prelude::*;
use uce_core::builders::build_debias;
use uce_core::catalog::Concept;
use uce_core::edit::{
    memit_delta_solve, objective_value, relative_gradient_norm, time_solve, uce_solve, EditItem,
    EditPlan, PreserveItem,
};
use uce_core::rng::GaussianSource;
use uce_core::{Matrix, Vector};

const CANON_CHOICES: [f64; 3] = [0.1, 0.5, 1.0];

fn random_matrix(g: &mut GaussianSource, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| g.sample())
}

fn random_vector(g: &mut GaussianSource, n: usize) -> Vector {
    Vector::from_vec((0..n).map(|_| g.sample()).collect()).unwrap()
}

fn random_plan(
    g: &mut GaussianSource,
    rows: usize,
    cols: usize,
    n_edits: usize,
    n_preserves: usize,
    canon: f64,
) -> EditPlan {
    let edits = (0..n_edits)
        .map(|_| EditItem::new(random_vector(g, cols), random_vector(g, rows)))
        .collect();
    let preserves = (0..n_preserves)
        .map(|_| PreserveItem::new(random_vector(g, cols)))
        .collect();
    EditPlan::new(edits, preserves, canon)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn time_reduces_to_the_general_solver(
        seed in any::<u64>(),
        rows in 2usize..=8,
        cols in 2usize..=8,
        n_edits in 1usize..=4,
        lam_idx in 0usize..3,
    ) {
        let mut g = GaussianSource::new(seed);
        let w_old = random_matrix(&mut g, rows, cols);
        let lam = CANON_CHOICES[lam_idx];
        let plan = random_plan(&mut g, rows, cols, n_edits, 0, lam);
        let via_time = time_solve(&plan.edits, &w_old, lam).unwrap();
        let via_uce = uce_solve(&plan, &w_old).unwrap();
        prop_assert!(via_time.sub(&via_uce).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn delta_form_matches_the_general_solver(
        seed in any::<u64>(),
        rows in 2usize..=8,
        cols in 2usize..=8,
        n_edits in 1usize..=4,
        n_preserves in 0usize..=6,
        lam_idx in 0usize..3,
    ) {
        let mut g = GaussianSource::new(seed);
        let w_old = random_matrix(&mut g, rows, cols);
        let canon = CANON_CHOICES[lam_idx];
        let plan = random_plan(&mut g, rows, cols, n_edits, n_preserves, canon);

        // The preserve side of the normal equations, as a fixed Gram term.
        let mut c0 = Matrix::zeros(cols, cols);
        for i in 0..cols {
            c0.set(i, i, canon);
        }
        for p in &plan.preserves {
            for i in 0..cols {
                for j in 0..cols {
                    let bump = p.weight * (p.input.get(i) * p.input.get(j));
                    c0.set(i, j, c0.get(i, j) + bump);
                }
            }
        }

        let delta = memit_delta_solve(&plan.edits, &w_old, &c0).unwrap();
        let via_uce = uce_solve(&plan, &w_old).unwrap();
        prop_assert!(w_old.add(&delta).sub(&via_uce).frobenius_norm() <= 1e-9);
    }

    #[test]
    fn matching_targets_fix_all_three_solvers(
        seed in any::<u64>(),
        rows in 2usize..=8,
        cols in 2usize..=8,
        n_edits in 1usize..=4,
        n_preserves in 0usize..=6,
        lam_idx in 0usize..3,
    ) {
        let mut g = GaussianSource::new(seed);
        let w_old = random_matrix(&mut g, rows, cols);
        let canon = CANON_CHOICES[lam_idx];
        let mut plan = random_plan(&mut g, rows, cols, n_edits, n_preserves, canon);
        for e in &mut plan.edits {
            e.target = w_old.mul_vec(&e.input);
        }

        let w = uce_solve(&plan, &w_old).unwrap();
        prop_assert!(w.sub(&w_old).frobenius_norm() <= 1e-10);

        let w = time_solve(&plan.edits, &w_old, canon).unwrap();
        prop_assert!(w.sub(&w_old).frobenius_norm() <= 1e-10);

        let c0 = Matrix::identity(cols).scale(canon);
        let delta = memit_delta_solve(&plan.edits, &w_old, &c0).unwrap();
        prop_assert!(delta.frobenius_norm() <= 1e-10);
    }

    #[test]
    fn solutions_are_stationary(
        seed in any::<u64>(),
        rows in 2usize..=12,
        cols in 2usize..=12,
        n_edits in 1usize..=5,
        n_preserves in 0usize..=8,
        lam_idx in 0usize..3,
    ) {
        let mut g = GaussianSource::new(seed);
        let w_old = random_matrix(&mut g, rows, cols);
        let plan = random_plan(&mut g, rows, cols, n_edits, n_preserves, CANON_CHOICES[lam_idx]);
        let w = uce_solve(&plan, &w_old).unwrap();
        prop_assert!(relative_gradient_norm(&w, &plan, &w_old).unwrap() <= 1e-8);
    }

    #[test]
    fn heavier_preserve_weights_pin_the_probe_harder(
        seed in any::<u64>(),
        rows in 2usize..=8,
        cols in 2usize..=8,
        n_edits in 1usize..=4,
        lam_idx in 0usize..3,
    ) {
        let mut g = GaussianSource::new(seed);
        let w_old = random_matrix(&mut g, rows, cols);
        let base = random_plan(&mut g, rows, cols, n_edits, 2, CANON_CHOICES[lam_idx]);
        let probe = random_vector(&mut g, cols);
        let probe_old = w_old.mul_vec(&probe);

        let mut drifts = Vec::new();
        // Weight 0 means the probe is absent entirely.
        let w = uce_solve(&base, &w_old).unwrap();
        drifts.push(w.mul_vec(&probe).distance(&probe_old));
        for weight in [1.0, 10.0, 100.0] {
            let mut plan = base.clone();
            plan.preserves.push(PreserveItem::weighted(probe.clone(), weight));
            let w = uce_solve(&plan, &w_old).unwrap();
            drifts.push(w.mul_vec(&probe).distance(&probe_old));
        }
        for pair in drifts.windows(2) {
            prop_assert!(
                pair[1] <= pair[0] + 1e-12,
                "drift rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn solve_is_affine_in_the_targets(
        seed in any::<u64>(),
        rows in 2usize..=8,
        cols in 2usize..=8,
        n_edits in 1usize..=4,
        n_preserves in 0usize..=4,
        lam_idx in 0usize..3,
    ) {
        let mut g = GaussianSource::new(seed);
        let w_old = random_matrix(&mut g, rows, cols);
        let plan = random_plan(&mut g, rows, cols, n_edits, n_preserves, CANON_CHOICES[lam_idx]);

        // Interpolate every target toward its no-op value and check the
        // solutions interpolate identically, with stationarity at each stop.
        let plan_at = |alpha: f64| {
            let mut p = plan.clone();
            for e in &mut p.edits {
                let noop = w_old.mul_vec(&e.input);
                e.target = noop.scale(1.0 - alpha).add(&e.target.scale(alpha));
            }
            p
        };
        let w0 = uce_solve(&plan_at(0.0), &w_old).unwrap();
        let w_half = uce_solve(&plan_at(0.5), &w_old).unwrap();
        let w1 = uce_solve(&plan_at(1.0), &w_old).unwrap();
        for (alpha, w) in [(0.0, &w0), (0.5, &w_half), (1.0, &w1)] {
            prop_assert!(
                relative_gradient_norm(w, &plan_at(alpha), &w_old).unwrap() <= 1e-8
            );
        }
        let blended = w0.scale(0.5).add(&w1.scale(0.5));
        prop_assert!(w_half.sub(&blended).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn debias_targets_equal_shifted_outputs(
        seed in any::<u64>(),
        dim in 2usize..=10,
        n_attrs in 1usize..=4,
    ) {
        let mut g = GaussianSource::new(seed);
        let w_old = random_matrix(&mut g, dim, dim);
        let concept = Concept::new("c", vec![random_vector(&mut g, dim)]).unwrap();
        let attrs: Vec<Concept> = (0..n_attrs)
            .map(|i| Concept::new(format!("a{i}"), vec![random_vector(&mut g, dim)]).unwrap())
            .collect();
        let alphas: Vec<f64> = (0..n_attrs).map(|_| 0.5 * g.sample()).collect();

        // Shifting the input before projecting equals shifting the output
        // by the projected attributes.
        let items = build_debias(&w_old, &concept, &attrs, &alphas).unwrap();
        let mut shifted = w_old.mul_vec(concept.last_token());
        for (a, &alpha) in attrs.iter().zip(&alphas) {
            shifted = shifted.add_scaled(alpha, &w_old.mul_vec(a.last_token()));
        }
        let scale = 1.0 + shifted.norm();
        prop_assert!(items[0].target.distance(&shifted) <= 1e-12 * scale);
    }
}

#[test]
fn objective_beats_a_thousand_random_candidates() {
    let mut g = GaussianSource::new(2024);
    let w_old = random_matrix(&mut g, 4, 4);
    let plan = random_plan(&mut g, 4, 4, 3, 2, 0.5);
    let w = uce_solve(&plan, &w_old).unwrap();
    let best = objective_value(&w, &plan, &w_old).unwrap();
    for _ in 0..1000 {
        let candidate = random_matrix(&mut g, 4, 4);
        let obj = objective_value(&candidate, &plan, &w_old).unwrap();
        assert!(best <= obj);
    }
}

#[test]
fn objective_beats_small_perturbations() {
    let mut g = GaussianSource::new(4096);
    let w_old = random_matrix(&mut g, 5, 5);
    let plan = random_plan(&mut g, 5, 5, 2, 3, 0.5);
    let w = uce_solve(&plan, &w_old).unwrap();
    let best = objective_value(&w, &plan, &w_old).unwrap();
    for _ in 0..100 {
        let raw = random_matrix(&mut g, 5, 5);
        let e = raw.scale(1e-3 / raw.frobenius_norm());
        let obj = objective_value(&w.add(&e), &plan, &w_old).unwrap();
        assert!(
            best <= obj,
            "perturbed objective {obj} beat the solve's {best}"
        );
    }
}
