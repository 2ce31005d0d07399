//! Micro-average precision and recall at fixed precision over one global
//! ranking of (query, reference) candidate pairs.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::knn::{topk_batch, Neighbor};

/// One scored candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub query_id: String,
    pub reference_id: String,
    pub score: f64,
}

fn global_order(a: &Match, b: &Match) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.query_id.cmp(&b.query_id))
        .then_with(|| a.reference_id.cmp(&b.reference_id))
}

/// Candidate pairs sorted by descending score, ties by `(query_id, reference_id)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedMatches {
    matches: Vec<Match>,
}

impl RankedMatches {
    /// Sorts `matches` into global order. Duplicate pairs are an error.
    pub fn new(mut matches: Vec<Match>) -> Result<Self> {
        if let Some(m) = matches.iter().find(|m| !m.score.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite score for pair ({}, {})",
                m.query_id, m.reference_id
            )));
        }
        matches.sort_by(global_order);
        let mut seen = HashSet::with_capacity(matches.len());
        for m in &matches {
            if !seen.insert((m.query_id.as_str(), m.reference_id.as_str())) {
                return Err(Error::DuplicateId(format!(
                    "{},{}",
                    m.query_id, m.reference_id
                )));
            }
        }
        Ok(RankedMatches { matches })
    }

    /// Like [`RankedMatches::new`] but keeps only the best score of a repeated pair.
    pub fn dedup_best(matches: Vec<Match>) -> Result<Self> {
        let mut best: HashMap<(String, String), f64> = HashMap::with_capacity(matches.len());
        for m in matches {
            let e = best
                .entry((m.query_id, m.reference_id))
                .or_insert(f64::NEG_INFINITY);
            if m.score > *e {
                *e = m.score;
            }
        }
        Self::new(
            best.into_iter()
                .map(|((query_id, reference_id), score)| Match {
                    query_id,
                    reference_id,
                    score,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }

    pub fn as_slice(&self) -> &[Match] {
        &self.matches
    }
}

/// Set of true (query, reference) pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pairs: HashSet<(String, String)>,
}

impl GroundTruth {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        GroundTruth {
            pairs: pairs.into_iter().collect(),
        }
    }

    /// Number of positive pairs.
    pub fn positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn contains(&self, query_id: &str, reference_id: &str) -> bool {
        // HashSet<(String, String)> cannot be probed with borrowed pairs
        self.pairs
            .contains(&(query_id.to_owned(), reference_id.to_owned()))
    }

    fn hits(&self, ranked: &RankedMatches) -> Vec<bool> {
        ranked
            .iter()
            .map(|m| self.contains(&m.query_id, &m.reference_id))
            .collect()
    }
}

/// Area under the micro precision-recall curve: the sum of precision at every
/// true-positive rank, divided by the total number of positives.
pub fn micro_ap(ranked: &RankedMatches, gt: &GroundTruth) -> Result<f64> {
    let p = gt.positives();
    if p == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (r, hit) in gt.hits(ranked).into_iter().enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// Largest recall over ranking cutoffs whose precision is at least `precision`;
/// 0 when no cutoff qualifies.
pub fn recall_at_precision(
    ranked: &RankedMatches,
    gt: &GroundTruth,
    precision: f64,
) -> Result<f64> {
    let p = gt.positives();
    if p == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    if !(precision > 0.0 && precision <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "precision threshold must lie in (0, 1], got {precision}"
        )));
    }
    let mut tp = 0usize;
    let mut best = 0usize;
    for (r, hit) in gt.hits(ranked).into_iter().enumerate() {
        if hit {
            tp += 1;
        }
        // compare tp/(r+1) >= precision without dividing
        if tp as f64 >= precision * (r + 1) as f64 - 1e-9 {
            best = best.max(tp);
        }
    }
    Ok(best as f64 / p as f64)
}

/// Top `per_query_k` references of every query, merged into one global ranking.
pub fn build_candidates(
    queries: &EmbeddingSet,
    references: &EmbeddingSet,
    per_query_k: usize,
) -> Result<RankedMatches> {
    let lists = topk_batch(queries, references, per_query_k)?;
    RankedMatches::new(neighbor_matches(queries, references, &lists))
}

/// Flattens per-query neighbor lists into matches, in query order.
pub fn neighbor_matches(
    queries: &EmbeddingSet,
    references: &EmbeddingSet,
    lists: &[Vec<Neighbor>],
) -> Vec<Match> {
    lists
        .iter()
        .enumerate()
        .flat_map(|(q, list)| {
            list.iter().map(move |n| Match {
                query_id: queries.id(q).to_owned(),
                reference_id: references.id(n.index).to_owned(),
                score: n.score,
            })
        })
        .collect()
}

/// Summary written by the `eval` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_ap: f64,
    pub recall_at_p90: f64,
    pub pairs: usize,
    pub positives: usize,
}

/// Both metrics at once; `precision` is the threshold reported as `recall_at_p90`.
pub fn evaluate(ranked: &RankedMatches, gt: &GroundTruth, precision: f64) -> Result<EvalReport> {
    Ok(EvalReport {
        micro_ap: micro_ap(ranked, gt)?,
        recall_at_p90: recall_at_precision(ranked, gt, precision)?,
        pairs: ranked.len(),
        positives: gt.positives(),
    })
}

/// Writes `query_id<TAB>reference_id<TAB>score` lines in the given order.
pub fn write_matches_tsv(matches: &[Match], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_matches(matches, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_matches(matches: &[Match], w: &mut impl Write) -> Result<()> {
    for m in matches {
        writeln!(w, "{}\t{}\t{}", m.query_id, m.reference_id, m.score)?;
    }
    Ok(())
}

pub fn read_matches_tsv(path: impl AsRef<Path>) -> Result<Vec<Match>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "matches line {}: expected 3 fields",
                n + 1
            )));
        }
        let score = fields[2]
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("matches line {}: {e}", n + 1)))?;
        out.push(Match {
            query_id: fields[0].to_owned(),
            reference_id: fields[1].to_owned(),
            score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(q: &str, r: &str, score: f64) -> Match {
        Match {
            query_id: q.into(),
            reference_id: r.into(),
            score,
        }
    }

    fn gt(pairs: &[(&str, &str)]) -> GroundTruth {
        GroundTruth::new(pairs.iter().map(|(q, r)| (q.to_string(), r.to_string())))
    }

    #[test]
    fn tp_fp_tp() {
        let ranked = RankedMatches::new(vec![
            m("q1", "r1", 0.9),
            m("q2", "r9", 0.8),
            m("q3", "r3", 0.7),
        ])
        .unwrap();
        let g = gt(&[("q1", "r1"), ("q3", "r3")]);
        let ap = micro_ap(&ranked, &g).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-9);
        assert!((ap - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn perfect_ranking() {
        let ranked =
            RankedMatches::new(vec![m("a", "x", 0.9), m("b", "y", 0.8), m("c", "z", 0.1)]).unwrap();
        let g = gt(&[("a", "x"), ("b", "y")]);
        assert_eq!(micro_ap(&ranked, &g).unwrap(), 1.0);
    }

    #[test]
    fn missing_positives_penalize() {
        let ranked = RankedMatches::new(vec![m("a", "x", 0.9)]).unwrap();
        let g = gt(&[("a", "x"), ("b", "y")]);
        assert_eq!(micro_ap(&ranked, &g).unwrap(), 0.5);
    }

    #[test]
    fn recall_nine_of_ten() {
        let mut v: Vec<Match> = (0..9)
            .map(|i| m(&format!("q{i}"), "r", 1.0 - i as f64 * 0.01))
            .collect();
        v.push(m("q9", "bad", 0.1));
        let g = GroundTruth::new((0..9).map(|i| (format!("q{i}"), "r".to_string())));
        let ranked = RankedMatches::new(v).unwrap();
        assert_eq!(recall_at_precision(&ranked, &g, 0.9).unwrap(), 1.0);
    }

    #[test]
    fn recall_empty_ranking() {
        let g = gt(&[("a", "x")]);
        assert_eq!(
            recall_at_precision(&RankedMatches::default(), &g, 0.9).unwrap(),
            0.0
        );
    }

    #[test]
    fn recall_never_precise_enough() {
        // precision sequence 0, 1/2, 2/3, 3/4, 4/5
        let ranked = RankedMatches::new(vec![
            m("q0", "no", 0.9),
            m("q1", "r1", 0.8),
            m("q2", "r2", 0.7),
            m("q3", "r3", 0.6),
            m("q4", "r4", 0.5),
        ])
        .unwrap();
        let g = gt(&[("q1", "r1"), ("q2", "r2"), ("q3", "r3"), ("q4", "r4")]);
        assert_eq!(recall_at_precision(&ranked, &g, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn empty_ground_truth() {
        let g = GroundTruth::default();
        assert!(matches!(
            micro_ap(&RankedMatches::default(), &g),
            Err(Error::EmptyGroundTruth)
        ));
        assert!(matches!(
            recall_at_precision(&RankedMatches::default(), &g, 0.9),
            Err(Error::EmptyGroundTruth)
        ));
    }

    #[test]
    fn ties_are_lexicographic() {
        let ranked =
            RankedMatches::new(vec![m("b", "x", 0.5), m("a", "y", 0.5), m("a", "x", 0.5)]).unwrap();
        let order: Vec<_> = ranked
            .iter()
            .map(|m| (m.query_id.as_str(), m.reference_id.as_str()))
            .collect();
        assert_eq!(order, vec![("a", "x"), ("a", "y"), ("b", "x")]);
    }

    #[test]
    fn duplicates_rejected_or_merged() {
        let v = vec![m("a", "x", 0.5), m("a", "x", 0.7)];
        assert!(RankedMatches::new(v.clone()).is_err());
        let r = RankedMatches::dedup_best(v).unwrap();
        assert_eq!(r.as_slice(), &[m("a", "x", 0.7)]);
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let v = vec![m("a", "x", 0.25), m("b", "y", -0.125)];
        write_matches_tsv(&v, &path).unwrap();
        assert_eq!(read_matches_tsv(&path).unwrap(), v);
        fs::write(&path, "a\tb\n").unwrap();
        assert!(matches!(read_matches_tsv(&path), Err(Error::Format(_))));
    }
}
