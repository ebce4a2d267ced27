//! Run reports: the JSON document written next to edited matrices and the
//! fixed-width text summary rendered from it.
//!
//! Every report carries a `note` stating that the numbers are embedding-
//! space vector norms. Nothing here measures what a generative model would
//! actually produce, and the report should not be read as if it did.

use serde::{Deserialize, Serialize};
use uce_core::metrics::EditReport;

/// Scope disclaimer embedded in every report.
pub const REPORT_NOTE: &str =
    "all metrics are embedding-space vector norms; generative output is not measured";

/// Metrics for one edited matrix, tagged with the output file it refers to
/// (relative to the report's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub path: String,
    pub report: EditReport,
}

/// Final coefficients and measured ratios for one debiased concept.
///
/// `converged` means the loop's own criterion was met: the concept's
/// in-loop measurement fell within the threshold and it migrated to the
/// preserve list. `final_ratios` and `delta` come from one extra
/// measurement under the final matrices; because the loop freezes migrated
/// concepts instead of re-measuring them, later solves can push an
/// early-migrated concept's ratios back out of the threshold, and these
/// fields make that drift visible rather than hiding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasConceptOutcome {
    pub concept: String,
    /// Whether this concept migrated (its in-loop measurement was within
    /// the threshold).
    pub converged: bool,
    /// Post-run measurement under the final matrices, one share per
    /// attribute.
    pub final_ratios: Vec<f64>,
    /// Cumulative per-attribute shift coefficients.
    pub alphas: Vec<f64>,
    /// Worst per-attribute relative deviation of `final_ratios` from the
    /// desired shares.
    pub delta: f64,
}

/// Loop outcome attached to debias reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasSummary {
    pub converged: bool,
    pub iterations: usize,
    pub concepts: Vec<DebiasConceptOutcome>,
    /// Mean of the per-concept deltas.
    pub mean_delta: f64,
}

/// The `report.json` document for any run. `debias` is present only for
/// debias runs; its stored coefficients are what `verify` uses to rebuild
/// the final edit plan without replaying the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub note: String,
    pub mode: String,
    pub wv: MatrixReport,
    pub wk: Option<MatrixReport>,
    pub debias: Option<DebiasSummary>,
}

fn fmt_val(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_metric_rows(out: &mut String, kind: &str, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("  {kind:<9} {i:>4}  {:>24}\n", fmt_val(*v)));
    }
}

fn render_matrix_section(out: &mut String, label: &str, m: &MatrixReport) {
    out.push_str(&format!("[{label}] {}\n", m.path));
    out.push_str(&format!(
        "  objective before   {}\n",
        fmt_val(m.report.objective_before)
    ));
    out.push_str(&format!(
        "  objective after    {}\n",
        fmt_val(m.report.objective_after)
    ));
    out.push_str(&format!("  {:<9} {:>4}  {:>24}\n", "kind", "idx", "norm"));
    push_metric_rows(out, "edit", &m.report.edit_residuals);
    push_metric_rows(out, "preserve", &m.report.preserve_drifts);
    push_metric_rows(out, "holdout", &m.report.holdout_drifts);
}

fn join_fixed(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join("/")
}

/// Renders `summary.txt`.
pub fn render_summary(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} summary\n", report.mode));
    out.push_str(&format!("note: {}\n\n", report.note));
    if let Some(d) = &report.debias {
        out.push_str(&format!(
            "converged: {} after {} iteration{}\n",
            if d.converged { "yes" } else { "no" },
            d.iterations,
            if d.iterations == 1 { "" } else { "s" }
        ));
        out.push_str(&format!("mean delta: {}\n\n", fmt_val(d.mean_delta)));
        let name_w = d
            .concepts
            .iter()
            .map(|c| c.concept.len())
            .chain(["concept".len()])
            .max()
            .unwrap_or(7);
        out.push_str(&format!(
            "{:<name_w$}  {:<9}  {:>12}  ratios / alphas\n",
            "concept", "converged", "delta"
        ));
        for c in &d.concepts {
            out.push_str(&format!(
                "{:<name_w$}  {:<9}  {:>12.6e}  {}  /  {}\n",
                c.concept,
                if c.converged { "yes" } else { "no" },
                c.delta,
                join_fixed(&c.final_ratios),
                join_fixed(&c.alphas),
            ));
        }
        out.push('\n');
    }
    render_matrix_section(&mut out, "wv", &report.wv);
    if let Some(wk) = &report.wk {
        out.push('\n');
        render_matrix_section(&mut out, "wk", wk);
    }
    out
}
