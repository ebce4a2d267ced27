//! The JSON edit-spec document: which matrices to edit, which concepts to
//! touch, and every numeric knob.
//!
//! ```json
//! {
//!   "mode": "erase",
//!   "wv": "wv.ucemat",
//!   "wk": "wk.ucemat",
//!   "edit": ["car", "truck"],
//!   "preserve": ["road"],
//!   "holdout": ["bicycle"],
//!   "anchor": "vehicle",
//!   "canon_reg": 0.5
//! }
//! ```
//!
//! Matrix paths resolve relative to the spec file's directory. `wk` is
//! optional; without it only the value matrix is edited. Unknown fields are
//! rejected so a typo in a knob name cannot silently fall back to a
//! default. Debias specs use `attributes` (plus optional `desired_ratios`,
//! `eta`, `threshold`, `max_iters`, `n_samples`, `seed`) instead of
//! `anchor`/`unconditional`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use uce_core::builders::EditMode;
use uce_core::catalog::EmbeddingCatalog;
use uce_core::debias::DebiasConfig;
use uce_core::edit::DEFAULT_CANON_REG;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditSpecFile {
    pub mode: EditMode,
    /// Value projection matrix, resolved relative to the spec file.
    pub wv: PathBuf,
    /// Key projection matrix; editing it is skipped when absent.
    pub wk: Option<PathBuf>,
    /// Concepts whose outputs change.
    pub edit: Vec<String>,
    /// Concepts whose outputs are pinned.
    #[serde(default)]
    pub preserve: Vec<String>,
    /// Concepts measured for interference but not part of the solve.
    #[serde(default)]
    pub holdout: Vec<String>,
    /// Erase target; required for mode "erase".
    pub anchor: Option<String>,
    /// Moderation target; required for mode "moderate".
    pub unconditional: Option<String>,
    /// Attribute concepts; required non-empty for mode "debias".
    #[serde(default)]
    pub attributes: Vec<String>,
    /// Desired attribute distribution, one entry per attribute, strictly
    /// positive, summing to 1. Defaults to uniform.
    pub desired_ratios: Option<Vec<f64>>,
    pub canon_reg: Option<f64>,
    pub eta: Option<f64>,
    pub threshold: Option<f64>,
    pub max_iters: Option<usize>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
}

impl EditSpecFile {
    /// Parses and validates a spec, resolving matrix paths against the
    /// spec file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::input(path, e.to_string()))?;
        let mut spec: EditSpecFile = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::input(path, format!("invalid spec: {e}")))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        spec.wv = dir.join(&spec.wv);
        if let Some(wk) = spec.wk.take() {
            spec.wk = Some(dir.join(wk));
        }
        spec.validate().map_err(|msg| CliError::input(path, msg))?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), String> {
        if self.edit.is_empty() {
            return Err("field 'edit' must list at least one concept".into());
        }
        match self.mode {
            EditMode::Erase => {
                if self.anchor.is_none() {
                    return Err("mode 'erase' requires field 'anchor'".into());
                }
            }
            EditMode::Moderate => {
                if self.unconditional.is_none() {
                    return Err("mode 'moderate' requires field 'unconditional'".into());
                }
            }
            EditMode::Debias => {
                if self.attributes.is_empty() {
                    return Err("mode 'debias' requires non-empty 'attributes'".into());
                }
            }
        }
        if let Some(ratios) = &self.desired_ratios {
            if self.mode != EditMode::Debias {
                return Err("'desired_ratios' only applies to mode 'debias'".into());
            }
            if ratios.len() != self.attributes.len() {
                return Err(format!(
                    "'desired_ratios' has {} entries for {} attributes",
                    ratios.len(),
                    self.attributes.len()
                ));
            }
            // Zero desired shares are rejected: the bias deviation metric
            // divides by them, and "never generate this attribute" is an
            // erase, not a debias.
            if ratios.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
                return Err("'desired_ratios' entries must be positive".into());
            }
        }
        for (name, value) in [
            ("canon_reg", self.canon_reg),
            ("eta", self.eta),
            ("threshold", self.threshold),
        ] {
            if let Some(v) = value {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(format!("field '{name}' must be finite and non-negative"));
                }
            }
        }
        let mut seen = HashSet::new();
        for name in &self.edit {
            if !seen.insert(name.as_str()) {
                return Err(format!("concept '{name}' listed twice in 'edit'"));
            }
        }
        for name in &self.preserve {
            if seen.contains(name.as_str()) {
                return Err(format!(
                    "concept '{name}' appears in both 'edit' and 'preserve'"
                ));
            }
        }
        Ok(())
    }

    /// Every concept name the spec references, resolved against the
    /// catalog; the error names the first missing one.
    pub fn check_names(&self, catalog: &EmbeddingCatalog) -> Result<(), CliError> {
        let mut names: Vec<&String> = Vec::new();
        names.extend(&self.edit);
        names.extend(&self.preserve);
        names.extend(&self.holdout);
        names.extend(&self.anchor);
        names.extend(&self.unconditional);
        names.extend(&self.attributes);
        for name in names {
            catalog.require(name)?;
        }
        Ok(())
    }

    pub fn canon_reg(&self) -> f64 {
        self.canon_reg.unwrap_or(DEFAULT_CANON_REG)
    }

    /// Debias knobs with documented defaults; `seed_override` (the `--seed`
    /// flag) wins over the spec's value.
    pub fn debias_config(&self, seed_override: Option<u64>) -> DebiasConfig {
        let d = DebiasConfig::default();
        DebiasConfig {
            eta: self.eta.unwrap_or(d.eta),
            threshold: self.threshold.unwrap_or(d.threshold),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            seed: seed_override.or(self.seed).unwrap_or(d.seed),
            canon_reg: self.canon_reg(),
        }
    }
}
