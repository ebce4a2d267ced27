//! `uce edit`: apply an erase or moderate spec to the matrices and write
//! the edited matrices plus a report.

use std::path::Path;

use uce_core::builders::{build_erase, build_moderate, EditMode};
use uce_core::catalog::{Concept, EmbeddingCatalog};
use uce_core::edit::{uce_solve, EditItem, EditPlan, PreserveItem};
use uce_core::metrics::edit_report;
use uce_core::Matrix;

use super::{load_inputs, prepare_out_dir, write_json_file, write_text_file};
use crate::error::CliError;
use crate::format::save_matrix_path;
use crate::report::{render_summary, MatrixReport, RunReport, REPORT_NOTE};
use crate::specfile::EditSpecFile;

pub(crate) const WV_OUT: &str = "wv_edited.ucemat";
pub(crate) const WK_OUT: &str = "wk_edited.ucemat";
pub(crate) const REPORT_OUT: &str = "report.json";
pub(crate) const SUMMARY_OUT: &str = "summary.txt";

pub(crate) fn mode_name(mode: EditMode) -> &'static str {
    match mode {
        EditMode::Erase => "erase",
        EditMode::Moderate => "moderate",
        EditMode::Debias => "debias",
    }
}

/// Builds the edit plan an erase/moderate spec describes, against one
/// matrix's pre-edit weights.
pub(crate) fn build_plan(
    spec: &EditSpecFile,
    catalog: &EmbeddingCatalog,
    w_old: &Matrix,
) -> Result<EditPlan, CliError> {
    let target_name = match spec.mode {
        EditMode::Erase => spec.anchor.as_ref(),
        EditMode::Moderate => spec.unconditional.as_ref(),
        EditMode::Debias => {
            return Err(CliError::Validation(
                "mode 'debias' is handled by the debias command".into(),
            ))
        }
    }
    .expect("spec validation requires the mode's target field");
    let target = catalog.require(target_name)?;
    let mut edits: Vec<EditItem> = Vec::new();
    for name in &spec.edit {
        let concept = catalog.require(name)?;
        let items = match spec.mode {
            EditMode::Erase => build_erase(w_old, concept, target)?,
            EditMode::Moderate => build_moderate(w_old, concept, target)?,
            EditMode::Debias => unreachable!(),
        };
        edits.extend(items);
    }
    Ok(EditPlan::new(
        edits,
        preserve_items(spec, catalog)?,
        spec.canon_reg(),
    ))
}

pub(crate) fn preserve_items(
    spec: &EditSpecFile,
    catalog: &EmbeddingCatalog,
) -> Result<Vec<PreserveItem>, CliError> {
    let mut items = Vec::new();
    for name in &spec.preserve {
        let concept = catalog.require(name)?;
        items.extend(concept.tokens.iter().map(|t| PreserveItem::new(t.clone())));
    }
    Ok(items)
}

pub(crate) fn holdout_concepts(
    spec: &EditSpecFile,
    catalog: &EmbeddingCatalog,
) -> Result<Vec<Concept>, CliError> {
    spec.holdout
        .iter()
        .map(|name| Ok(catalog.require(name)?.clone()))
        .collect()
}

pub fn cmd_edit(spec_path: &Path, catalog_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let inputs = load_inputs(spec_path, catalog_path)?;
    if inputs.spec.mode == EditMode::Debias {
        return Err(CliError::Validation(
            "mode 'debias' is handled by the debias command".into(),
        ));
    }
    let holdouts = holdout_concepts(&inputs.spec, &inputs.catalog)?;

    let plan_v = build_plan(&inputs.spec, &inputs.catalog, &inputs.wv)?;
    let wv_new = uce_solve(&plan_v, &inputs.wv)?;
    let wv_report = MatrixReport {
        path: WV_OUT.to_string(),
        report: edit_report(&inputs.wv, &wv_new, &plan_v, &holdouts)?,
    };

    let mut wk_new = None;
    let mut wk_report = None;
    if let Some(wk_old) = &inputs.wk {
        let plan_k = build_plan(&inputs.spec, &inputs.catalog, wk_old)?;
        let edited = uce_solve(&plan_k, wk_old)?;
        wk_report = Some(MatrixReport {
            path: WK_OUT.to_string(),
            report: edit_report(wk_old, &edited, &plan_k, &holdouts)?,
        });
        wk_new = Some(edited);
    }

    let report = RunReport {
        note: REPORT_NOTE.to_string(),
        mode: mode_name(inputs.spec.mode).to_string(),
        wv: wv_report,
        wk: wk_report,
        debias: None,
    };

    prepare_out_dir(out_dir)?;
    save_matrix_path(&out_dir.join(WV_OUT), &wv_new)?;
    if let Some(wk) = &wk_new {
        save_matrix_path(&out_dir.join(WK_OUT), wk)?;
    }
    write_json_file(&out_dir.join(REPORT_OUT), &report)?;
    write_text_file(&out_dir.join(SUMMARY_OUT), &render_summary(&report))?;
    log::info!(
        "edited {} concept(s), outputs in {}",
        inputs.spec.edit.len(),
        out_dir.display()
    );
    Ok(())
}
