//! Named collections of token embeddings.
//!
//! Concepts are opaque vector sequences; there is no tokenizer or text
//! encoder here. Catalogs come from JSON (see the companion CLI crate) or
//! from [`synth_catalog`], which draws deterministic unit vectors so the
//! whole pipeline runs with zero external data.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{validation, Result};
use crate::rng::GaussianSource;
use crate::tensor::Vector;

/// A named sequence of token embedding vectors, length at least one, all of
/// the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub name: String,
    pub tokens: Vec<Vector>,
}

impl Concept {
    pub fn new(name: impl Into<String>, tokens: Vec<Vector>) -> Result<Self> {
        let name = name.into();
        let Some(first) = tokens.first() else {
            return Err(validation(alloc::format!(
                "concept '{name}' must have at least one token"
            )));
        };
        let dim = first.dim();
        if tokens.iter().any(|t| t.dim() != dim) {
            return Err(validation(alloc::format!(
                "concept '{name}' has tokens of mixed dimension"
            )));
        }
        Ok(Self { name, tokens })
    }

    pub fn dim(&self) -> usize {
        self.tokens[0].dim()
    }

    pub fn last_token(&self) -> &Vector {
        self.tokens.last().expect("concepts are never empty")
    }
}

/// Ordered, name-unique collection of concepts sharing one embedding
/// dimension. Insertion order is preserved so downstream iteration (and
/// anything serialized from it) is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCatalog {
    dim: usize,
    concepts: Vec<Concept>,
}

impl EmbeddingCatalog {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(validation("catalog dimension must be at least 2"));
        }
        Ok(Self {
            dim,
            concepts: Vec::new(),
        })
    }

    pub fn from_parts(dim: usize, concepts: Vec<Concept>) -> Result<Self> {
        let mut cat = Self::new(dim)?;
        for c in concepts {
            cat.push(c)?;
        }
        Ok(cat)
    }

    pub fn push(&mut self, concept: Concept) -> Result<()> {
        if concept.dim() != self.dim {
            return Err(validation(alloc::format!(
                "concept '{}' has dimension {}, catalog expects {}",
                concept.name,
                concept.dim(),
                self.dim
            )));
        }
        if self.get(&concept.name).is_some() {
            return Err(validation(alloc::format!(
                "duplicate concept name '{}'",
                concept.name
            )));
        }
        self.concepts.push(concept);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn get(&self, name: &str) -> Option<&Concept> {
        self.concepts.iter().find(|c| c.name == name)
    }

    /// Like [`get`](Self::get) but fails with a named validation error,
    /// for resolving user-supplied references.
    pub fn require(&self, name: &str) -> Result<&Concept> {
        self.get(name)
            .ok_or_else(|| validation(alloc::format!("concept '{name}' not found in catalog")))
    }
}

/// Builds a deterministic catalog: one unit-norm token per name, drawn from
/// a single seeded standard-normal stream in name order. A pure function of
/// `(names, dim, seed)`.
pub fn synth_catalog<S: AsRef<str>>(
    names: &[S],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingCatalog> {
    if names.is_empty() {
        return Err(validation("synth_catalog needs at least one name"));
    }
    let mut cat = EmbeddingCatalog::new(dim)?;
    let mut gauss = GaussianSource::new(seed);
    for name in names {
        let mut raw = alloc::vec![0.0f64; dim];
        gauss.fill(&mut raw);
        let v = Vector::from_vec(raw).expect("dim >= 2 checked above");
        let norm = v.norm();
        if norm == 0.0 {
            // A 53-bit-uniform Box-Muller draw cannot produce an exact zero
            // vector; guard anyway so the contract is explicit.
            return Err(validation("degenerate zero sample"));
        }
        let token = v.scale(1.0 / norm);
        cat.push(Concept::new(name.as_ref(), alloc::vec![token])?)?;
    }
    Ok(cat)
}

/// Pairs tokens of two concepts from the end: last with last, second-last
/// with second-last, for `min(len, len)` pairs. Surplus leading tokens of
/// the longer concept are excluded; callers that want them pinned must add
/// them to the preserve set themselves.
pub fn align_tokens<'a>(
    source: &'a Concept,
    dest: &'a Concept,
) -> Result<Vec<(&'a Vector, &'a Vector)>> {
    if source.dim() != dest.dim() {
        return Err(validation(alloc::format!(
            "cannot align '{}' (dim {}) with '{}' (dim {})",
            source.name,
            source.dim(),
            dest.name,
            dest.dim()
        )));
    }
    let k = source.tokens.len().min(dest.tokens.len());
    let s_skip = source.tokens.len() - k;
    let d_skip = dest.tokens.len() - k;
    Ok(source.tokens[s_skip..]
        .iter()
        .zip(dest.tokens[d_skip..].iter())
        .collect())
}
