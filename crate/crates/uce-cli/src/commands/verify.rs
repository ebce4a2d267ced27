//! `uce verify`: recompute a run's metrics from the matrices it points to
//! and diff them against the stored report.
//!
//! The edit plan is rebuilt from the spec (for debias runs, with the
//! coefficients stored in the report), so any tampering with matrices,
//! residuals, drifts, objectives, or coefficients shows up as a field
//! mismatch. Oracle ratio measurements are not replayed; the `final_ratios`
//! entries are covered only indirectly, through the coefficients that
//! produced them.

use std::fs;
use std::path::Path;

use uce_core::builders::EditMode;
use uce_core::metrics::{edit_report, EditReport};
use uce_core::Matrix;

use super::debias::final_debias_plan;
use super::edit::{build_plan, holdout_concepts, mode_name};
use super::load_inputs;
use crate::error::CliError;
use crate::format::load_matrix_path;
use crate::report::RunReport;

/// Per-field agreement tolerance between stored and recomputed values.
const TOL: f64 = 1e-9;

fn mismatch(kind: &str) -> CliError {
    CliError::VerifyMismatch(kind.to_string())
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn diff_field(label: String, stored: f64, recomputed: f64, out: &mut Vec<String>) {
    // NaN anywhere counts as a mismatch, so the comparison is inverted.
    if !((stored - recomputed).abs() <= TOL) {
        out.push(format!("{label}: stored {stored}, recomputed {recomputed}"));
    }
}

fn diff_slice(label: &str, stored: &[f64], recomputed: &[f64], out: &mut Vec<String>) {
    if stored.len() != recomputed.len() {
        out.push(format!(
            "{label}: stored {} entries, recomputed {}",
            stored.len(),
            recomputed.len()
        ));
        return;
    }
    for (i, (&s, &r)) in stored.iter().zip(recomputed).enumerate() {
        diff_field(format!("{label}[{i}]"), s, r, out);
    }
}

fn diff_reports(label: &str, stored: &EditReport, recomputed: &EditReport, out: &mut Vec<String>) {
    diff_slice(
        &format!("{label}.edit_residuals"),
        &stored.edit_residuals,
        &recomputed.edit_residuals,
        out,
    );
    diff_slice(
        &format!("{label}.preserve_drifts"),
        &stored.preserve_drifts,
        &recomputed.preserve_drifts,
        out,
    );
    diff_slice(
        &format!("{label}.holdout_drifts"),
        &stored.holdout_drifts,
        &recomputed.holdout_drifts,
        out,
    );
    diff_field(
        format!("{label}.objective_before"),
        stored.objective_before,
        recomputed.objective_before,
        out,
    );
    diff_field(
        format!("{label}.objective_after"),
        stored.objective_after,
        recomputed.objective_after,
        out,
    );
}

pub fn cmd_verify(
    report_path: &Path,
    spec_path: &Path,
    catalog_path: &Path,
) -> Result<(), CliError> {
    let bytes = fs::read(report_path).map_err(|e| CliError::input(report_path, e.to_string()))?;
    let report: RunReport = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::input(report_path, format!("invalid report: {e}")))?;
    let inputs = load_inputs(spec_path, catalog_path)?;
    let spec = &inputs.spec;
    let catalog = &inputs.catalog;

    if report.mode != mode_name(spec.mode) {
        return Err(mismatch(&format!(
            "mode: report says '{}', spec says '{}'",
            report.mode,
            mode_name(spec.mode)
        )));
    }
    if inputs.wk.is_some() != report.wk.is_some() {
        return Err(mismatch(
            "key matrix: present on one side of the comparison only",
        ));
    }
    if (spec.mode == EditMode::Debias) != report.debias.is_some() {
        return Err(mismatch("debias section: presence disagrees with mode"));
    }

    let report_dir = report_path.parent().unwrap_or_else(|| Path::new("."));
    let wv_new = load_matrix_path(&report_dir.join(&report.wv.path))?;

    // Tampered coefficient lists surface as plan-construction failures;
    // they mean the report cannot describe this spec.
    let to_mismatch = |e: CliError| match e {
        CliError::Validation(m) => CliError::VerifyMismatch(m),
        other => other,
    };
    let alphas: Option<Vec<(String, Vec<f64>)>> = report.debias.as_ref().map(|d| {
        d.concepts
            .iter()
            .map(|c| (c.concept.clone(), c.alphas.clone()))
            .collect()
    });
    let plan_for = |w_old: &Matrix| match &alphas {
        Some(a) => final_debias_plan(spec, catalog, w_old, a).map_err(to_mismatch),
        None => build_plan(spec, catalog, w_old),
    };

    let holdouts = holdout_concepts(spec, catalog)?;
    let mut mismatches = Vec::new();

    let plan_v = plan_for(&inputs.wv)?;
    let recomputed_v = edit_report(&inputs.wv, &wv_new, &plan_v, &holdouts)
        .map_err(|e| to_mismatch(CliError::Validation(format!("recomputing wv metrics: {e}"))))?;
    diff_reports("wv", &report.wv.report, &recomputed_v, &mut mismatches);

    let mut checked = field_count(&report.wv.report);
    if let (Some(wk_old), Some(wk_stored)) = (&inputs.wk, &report.wk) {
        let wk_new = load_matrix_path(&report_dir.join(&wk_stored.path))?;
        let plan_k = plan_for(wk_old)?;
        let recomputed_k = edit_report(wk_old, &wk_new, &plan_k, &holdouts).map_err(|e| {
            to_mismatch(CliError::Validation(format!("recomputing wk metrics: {e}")))
        })?;
        diff_reports("wk", &wk_stored.report, &recomputed_k, &mut mismatches);
        checked += field_count(&wk_stored.report);
    }

    if mismatches.is_empty() {
        println!("verify ok: {checked} field(s) agree within {TOL:e}");
        Ok(())
    } else {
        Err(CliError::VerifyMismatch(mismatches.join("\n")))
    }
}

fn field_count(r: &EditReport) -> usize {
    r.edit_residuals.len() + r.preserve_drifts.len() + r.holdout_drifts.len() + 2
}
