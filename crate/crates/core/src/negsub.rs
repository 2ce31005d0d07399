//! Negative embedding subtraction.
//!
//! A descriptor is pushed away from its nearest neighbors in a pool of known
//! non-matching descriptors: each of `n` rounds finds the `k` nearest negatives
//! of the current descriptor, subtracts `beta / k` times each of them and
//! renormalizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{normalize, Descriptor, EmbeddingSet};
use crate::error::{Error, Result};
use crate::knn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegSubConfig {
    /// Number of search-subtract-normalize rounds.
    pub n: usize,
    /// Negatives per round.
    pub k: usize,
    /// Subtraction factor.
    pub beta: f64,
}

impl Default for NegSubConfig {
    fn default() -> Self {
        NegSubConfig {
            n: 1,
            k: 10,
            beta: 0.35,
        }
    }
}

impl NegSubConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("negsub k must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "negsub beta must be finite and non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Applies the post-process to one descriptor against a fixed negative pool.
///
/// Neighbors are re-searched at the start of every round using the current
/// descriptor. When the pool holds fewer than `k` rows all of them are used,
/// still scaled by `beta / k`.
pub fn subtract_negatives(
    x: &Descriptor,
    negatives: &EmbeddingSet,
    cfg: &NegSubConfig,
) -> Result<Descriptor> {
    cfg.validate()?;
    if x.dim() != negatives.dim() {
        return Err(Error::DimMismatch {
            expected: negatives.dim(),
            found: x.dim(),
        });
    }
    if negatives.is_empty() {
        return Err(Error::InvalidConfig("negative pool is empty".into()));
    }
    let scale = cfg.beta / cfg.k as f64;
    let mut current = x.clone();
    for _ in 0..cfg.n {
        let neighbors = knn::topk(current.as_slice(), negatives, cfg.k)?;
        let mut v = current.into_vec();
        for nb in &neighbors {
            for (a, &b) in v.iter_mut().zip(negatives.row(nb.index)) {
                *a -= scale * b as f64;
            }
        }
        current = normalize(&v)?;
    }
    Ok(current)
}

/// Applies [`subtract_negatives`] to every target independently. Targets never
/// see each other; only `negatives` is consulted.
pub fn subtract_negatives_batch(
    targets: &EmbeddingSet,
    negatives: &EmbeddingSet,
    cfg: &NegSubConfig,
) -> Result<EmbeddingSet> {
    cfg.validate()?;
    if targets.dim() != negatives.dim() {
        return Err(Error::DimMismatch {
            expected: negatives.dim(),
            found: targets.dim(),
        });
    }
    let results: Vec<Result<Descriptor>> = (0..targets.len())
        .into_par_iter()
        .map(|i| subtract_negatives(&targets.descriptor(i), negatives, cfg))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        out.push(r.map_err(|e| Error::Target {
            id: targets.id(i).to_owned(),
            source: Box::new(e),
        })?);
    }
    EmbeddingSet::from_descriptors(targets.dim(), targets.ids().to_vec(), &out)
}
