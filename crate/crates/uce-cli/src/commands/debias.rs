//! `uce debias`: run the iterative ratio-balancing loop and write edited
//! matrices, a report, and the per-iteration trace.

use std::path::Path;

use uce_core::builders::{build_debias, EditMode};
use uce_core::catalog::{Concept, EmbeddingCatalog};
use uce_core::debias::{debias_loop, RatioOracle, RatioVector, SyntheticRatioOracle};
use uce_core::edit::{EditItem, EditPlan};
use uce_core::metrics::{delta_bias, edit_report};
use uce_core::rng::derive_seed;
use uce_core::Matrix;

use super::edit::{
    holdout_concepts, mode_name, preserve_items, REPORT_OUT, SUMMARY_OUT, WK_OUT, WV_OUT,
};
use super::{load_inputs, prepare_out_dir, write_json_file, write_text_file};
use crate::error::CliError;
use crate::format::save_matrix_path;
use crate::report::{
    render_summary, DebiasConceptOutcome, DebiasSummary, MatrixReport, RunReport, REPORT_NOTE,
};
use crate::specfile::EditSpecFile;

pub(crate) const TRACE_OUT: &str = "trace.jsonl";

/// The plan the loop's last solve used: every edit concept's shifted
/// targets (coefficients supplied per concept, in spec order) plus the
/// preserve set. `verify` rebuilds it from a stored report.
pub(crate) fn final_debias_plan(
    spec: &EditSpecFile,
    catalog: &EmbeddingCatalog,
    w_old: &Matrix,
    alphas: &[(String, Vec<f64>)],
) -> Result<EditPlan, CliError> {
    if alphas.len() != spec.edit.len() {
        return Err(CliError::Validation(format!(
            "got coefficients for {} concepts, spec edits {}",
            alphas.len(),
            spec.edit.len()
        )));
    }
    let attributes = attribute_concepts(spec, catalog)?;
    let mut edits: Vec<EditItem> = Vec::new();
    for (name, (alpha_name, alpha)) in spec.edit.iter().zip(alphas) {
        if name != alpha_name {
            return Err(CliError::Validation(format!(
                "coefficients list concept '{alpha_name}' where the spec has '{name}'"
            )));
        }
        let concept = catalog.require(name)?;
        edits.extend(build_debias(w_old, concept, &attributes, alpha)?);
    }
    Ok(EditPlan::new(
        edits,
        preserve_items(spec, catalog)?,
        spec.canon_reg(),
    ))
}

fn attribute_concepts(
    spec: &EditSpecFile,
    catalog: &EmbeddingCatalog,
) -> Result<Vec<Concept>, CliError> {
    spec.attributes
        .iter()
        .map(|name| Ok(catalog.require(name)?.clone()))
        .collect()
}

pub fn cmd_debias(
    spec_path: &Path,
    catalog_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let inputs = load_inputs(spec_path, catalog_path)?;
    if inputs.spec.mode != EditMode::Debias {
        return Err(CliError::Validation(format!(
            "mode '{}' is handled by the edit command",
            mode_name(inputs.spec.mode)
        )));
    }
    let spec = &inputs.spec;
    let catalog = &inputs.catalog;
    let cfg = spec.debias_config(seed_override);

    let edit_concepts: Vec<Concept> = spec
        .edit
        .iter()
        .map(|name| Ok::<_, CliError>(catalog.require(name)?.clone()))
        .collect::<Result<_, _>>()?;
    let preserve_concepts: Vec<Concept> = spec
        .preserve
        .iter()
        .map(|name| Ok::<_, CliError>(catalog.require(name)?.clone()))
        .collect::<Result<_, _>>()?;
    let attributes = attribute_concepts(spec, catalog)?;
    let holdouts = holdout_concepts(spec, catalog)?;

    let one_desired = match &spec.desired_ratios {
        Some(r) => RatioVector::new(r.clone())?,
        None => RatioVector::uniform(attributes.len())?,
    };
    let desired = vec![one_desired.clone(); edit_concepts.len()];

    let oracle = SyntheticRatioOracle::new(inputs.wv.clone());
    let run = debias_loop(
        inputs.wk.as_ref(),
        &inputs.wv,
        &edit_concepts,
        &preserve_concepts,
        &attributes,
        &desired,
        &oracle,
        &cfg,
    )?;

    // Per-concept outcomes are measured once more under the final matrices
    // with each concept's usual seed stream, so converged entries reflect
    // any interference from solves that happened after their migration.
    let mut outcomes = Vec::with_capacity(edit_concepts.len());
    let mut delta_sum = 0.0;
    for (idx, concept) in edit_concepts.iter().enumerate() {
        let measured = oracle.measure(
            run.w_k.as_ref(),
            &run.w_v,
            concept,
            &attributes,
            cfg.n_samples,
            derive_seed(cfg.seed, idx as u64),
        )?;
        let mut delta: f64 = 0.0;
        for (&p, &d) in measured.probs().iter().zip(one_desired.probs()) {
            delta = delta.max(delta_bias(p, d)?);
        }
        delta_sum += delta;
        outcomes.push(DebiasConceptOutcome {
            concept: concept.name.clone(),
            converged: !run.state.edit_list.contains(&concept.name),
            final_ratios: measured.probs().to_vec(),
            alphas: run.state.alphas[idx].alphas.clone(),
            delta,
        });
    }

    let alphas: Vec<(String, Vec<f64>)> = run
        .state
        .alphas
        .iter()
        .map(|a| (a.concept.clone(), a.alphas.clone()))
        .collect();
    let plan_v = final_debias_plan(spec, catalog, &inputs.wv, &alphas)?;
    let wv_report = MatrixReport {
        path: WV_OUT.to_string(),
        report: edit_report(&inputs.wv, &run.w_v, &plan_v, &holdouts)?,
    };
    let wk_report = match (&inputs.wk, &run.w_k) {
        (Some(wk_old), Some(wk_new)) => {
            let plan_k = final_debias_plan(spec, catalog, wk_old, &alphas)?;
            Some(MatrixReport {
                path: WK_OUT.to_string(),
                report: edit_report(wk_old, wk_new, &plan_k, &holdouts)?,
            })
        }
        _ => None,
    };

    let report = RunReport {
        note: REPORT_NOTE.to_string(),
        mode: mode_name(spec.mode).to_string(),
        wv: wv_report,
        wk: wk_report,
        debias: Some(DebiasSummary {
            converged: run.converged,
            iterations: run.state.iteration,
            concepts: outcomes,
            mean_delta: delta_sum / edit_concepts.len() as f64,
        }),
    };

    let mut trace_text = String::new();
    for record in &run.trace {
        let line = serde_json::to_string(record).map_err(|e| CliError::OutputIo {
            path: TRACE_OUT.into(),
            message: e.to_string(),
        })?;
        trace_text.push_str(&line);
        trace_text.push('\n');
    }

    prepare_out_dir(out_dir)?;
    save_matrix_path(&out_dir.join(WV_OUT), &run.w_v)?;
    if let Some(wk) = &run.w_k {
        save_matrix_path(&out_dir.join(WK_OUT), wk)?;
    }
    write_json_file(&out_dir.join(REPORT_OUT), &report)?;
    write_text_file(&out_dir.join(SUMMARY_OUT), &render_summary(&report))?;
    write_text_file(&out_dir.join(TRACE_OUT), &trace_text)?;

    if !run.converged {
        log::warn!(
            "debias did not converge within {} iterations; outputs and trace written anyway",
            cfg.max_iters
        );
        return Err(CliError::NonConvergence {
            max_iters: cfg.max_iters,
        });
    }
    log::info!(
        "debias converged after {} iteration(s), outputs in {}",
        run.state.iteration,
        out_dir.display()
    );
    Ok(())
}
