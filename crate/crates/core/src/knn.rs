//! Exact top-k inner-product search over an [`EmbeddingSet`].
//!
//! Scores are inner products accumulated in 64-bit floats. For unit-norm rows
//! this is cosine similarity, and the ranking coincides with ascending
//! Euclidean distance. Ties are broken by ascending database index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::embedding::{dot_mixed, EmbeddingSet};
use crate::error::{Error, Result};

/// A database row returned by a search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Row index into the database set.
    pub index: usize,
    /// Inner product with the query.
    pub score: f64,
}

impl Neighbor {
    /// Ranking order: higher score first, then lower index.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.index.cmp(&other.index))
    }
}

// Max-heap entry whose top is the worst retained candidate.
struct Worst(Neighbor);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

fn check(query_dim: usize, db: &EmbeddingSet, k: usize) -> Result<()> {
    if query_dim != db.dim() {
        return Err(Error::DimMismatch {
            expected: db.dim(),
            found: query_dim,
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    Ok(())
}

/// The `min(k, db.len())` rows of `db` with the largest inner product with `query`,
/// best first.
pub fn topk(query: &[f64], db: &EmbeddingSet, k: usize) -> Result<Vec<Neighbor>> {
    check(query.len(), db, k)?;
    Ok(select(query, db, k))
}

fn select(query: &[f64], db: &EmbeddingSet, k: usize) -> Vec<Neighbor> {
    let k = k.min(db.len());
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
    for (index, row) in db.rows().enumerate() {
        let score = dot_mixed(query, row);
        if heap.len() < k {
            heap.push(Worst(Neighbor { index, score }));
        } else if let Some(mut top) = heap.peek_mut() {
            // rows arrive in index order, so an equal score never displaces
            if score > top.0.score {
                *top = Worst(Neighbor { index, score });
            }
        }
    }
    let mut out: Vec<Neighbor> = heap.into_iter().map(|w| w.0).collect();
    out.sort_by(Neighbor::rank_cmp);
    out
}

/// [`topk`] for every row of `queries`, in query order. Queries are spread over the
/// current rayon pool; output does not depend on the number of workers.
pub fn topk_batch(
    queries: &EmbeddingSet,
    db: &EmbeddingSet,
    k: usize,
) -> Result<Vec<Vec<Neighbor>>> {
    check(queries.dim(), db, k)?;
    Ok((0..queries.len())
        .into_par_iter()
        .map(|i| select(&queries.row_f64(i), db, k))
        .collect())
}
