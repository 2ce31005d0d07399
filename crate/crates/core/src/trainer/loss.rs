//! Margin contrastive loss over in-batch pairs and batch-to-memory pairs.
//!
//! For Euclidean distance `d` between two unit descriptors, a positive pair
//! (same label) costs `max(0, d - pos_margin)` and a negative pair costs
//! `max(0, neg_margin - d)`. How the terms are averaged is set by
//! [`Reduction`]; the default averages positives and negatives separately over
//! the pairs whose hinge is active. Memory entries are constants: they receive
//! no gradient.

use serde::{Deserialize, Serialize};

use super::bank::{Label, MemoryBank};
use crate::embedding::Descriptor;
use crate::error::{Error, Result};

/// How pair terms are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// One mean over every counted pair.
    AllPairs,
    /// Mean over positive pairs plus mean over negative pairs.
    PerClass,
    /// Mean over active positive pairs plus mean over active negative pairs.
    PerClassNonZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub pos_margin: f64,
    pub neg_margin: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            pos_margin: 0.0,
            neg_margin: 1.0,
            reduction: Reduction::PerClassNonZero,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.pos_margin && self.pos_margin < self.neg_margin) {
            return Err(Error::InvalidConfig(format!(
                "margins must satisfy 0 <= pos ({}) < neg ({})",
                self.pos_margin, self.neg_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient of `loss` with respect to each batch descriptor.
    pub grads: Vec<Vec<f64>>,
    /// Number of pairs the mean runs over.
    pub pairs: usize,
    /// Pairs whose hinge is active.
    pub active: usize,
}

// Accumulates one pair's contribution (unscaled) and returns its hinge value.
fn pair_term(
    a: &[f64],
    b: &[f64],
    positive: bool,
    cfg: &LossConfig,
    diff: &mut [f64],
) -> (f64, Option<f64>) {
    let mut sq = 0.0;
    for ((d, x), y) in diff.iter_mut().zip(a).zip(b) {
        *d = x - y;
        sq += *d * *d;
    }
    let dist = sq.sqrt();
    // Returns (hinge, coefficient c) with d(hinge)/da = c * (a - b).
    if positive {
        let h = dist - cfg.pos_margin;
        if h > 0.0 {
            (h, (dist > 0.0).then(|| 1.0 / dist))
        } else {
            (0.0, None)
        }
    } else {
        let h = cfg.neg_margin - dist;
        if h > 0.0 {
            (h, (dist > 0.0).then(|| -1.0 / dist))
        } else {
            (0.0, None)
        }
    }
}

/// Loss and descriptor gradients for one batch against the memory bank.
pub fn contrastive_loss(
    batch: &[(Descriptor, Label)],
    bank: &MemoryBank,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let dim = batch[0].0.dim();
    if let Some((d, _)) = batch.iter().find(|(d, _)| d.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: d.dim(),
        });
    }
    // Positive and negative contributions are kept apart until the reduction.
    let n = batch.len();
    let mut pos_grads = vec![vec![0.0; dim]; n];
    let mut neg_grads = vec![vec![0.0; dim]; n];
    let mut diff = vec![0.0; dim];
    let (mut pos_sum, mut neg_sum) = (0.0, 0.0);
    let (mut pos_pairs, mut neg_pairs) = (0usize, 0usize);
    let (mut pos_active, mut neg_active) = (0usize, 0usize);

    for (i, (a, la)) in batch.iter().enumerate() {
        let la = *la;
        for (j, (b, lb)) in batch.iter().enumerate().skip(i + 1) {
            let lb = *lb;
            let positive = la == lb;
            let (h, coef) = pair_term(a.as_slice(), b.as_slice(), positive, cfg, &mut diff);
            let (sum, pairs, active, grads) = if positive {
                (
                    &mut pos_sum,
                    &mut pos_pairs,
                    &mut pos_active,
                    &mut pos_grads,
                )
            } else {
                (
                    &mut neg_sum,
                    &mut neg_pairs,
                    &mut neg_active,
                    &mut neg_grads,
                )
            };
            *pairs += 1;
            if h > 0.0 {
                *sum += h;
                *active += 1;
            }
            if let Some(c) = coef {
                let (head, tail) = grads.split_at_mut(j);
                for ((gi, gj), dv) in head[i].iter_mut().zip(tail[0].iter_mut()).zip(&diff) {
                    *gi += c * dv;
                    *gj -= c * dv;
                }
            }
        }
        for (m, lm) in bank.iter() {
            if m.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: m.len(),
                });
            }
            let positive = la == lm;
            let (h, coef) = pair_term(a.as_slice(), m, positive, cfg, &mut diff);
            let (sum, pairs, active, grads) = if positive {
                (
                    &mut pos_sum,
                    &mut pos_pairs,
                    &mut pos_active,
                    &mut pos_grads,
                )
            } else {
                (
                    &mut neg_sum,
                    &mut neg_pairs,
                    &mut neg_active,
                    &mut neg_grads,
                )
            };
            *pairs += 1;
            if h > 0.0 {
                *sum += h;
                *active += 1;
            }
            if let Some(c) = coef {
                for (g, dv) in grads[i].iter_mut().zip(&diff) {
                    *g += c * dv;
                }
            }
        }
    }

    let inv = |count: usize| if count == 0 { 0.0 } else { 1.0 / count as f64 };
    let (pos_scale, neg_scale) = match cfg.reduction {
        Reduction::AllPairs => {
            let s = inv(pos_pairs + neg_pairs);
            (s, s)
        }
        Reduction::PerClass => (inv(pos_pairs), inv(neg_pairs)),
        Reduction::PerClassNonZero => (inv(pos_active), inv(neg_active)),
    };
    let grads = pos_grads
        .into_iter()
        .zip(neg_grads)
        .map(|(p, q)| {
            p.iter()
                .zip(&q)
                .map(|(a, b)| a * pos_scale + b * neg_scale)
                .collect()
        })
        .collect();
    Ok(LossOutput {
        loss: pos_sum * pos_scale + neg_sum * neg_scale,
        grads,
        pairs: pos_pairs + neg_pairs,
        active: pos_active + neg_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::normalize;

    fn unit(v: &[f64]) -> Descriptor {
        normalize(v).unwrap()
    }

    fn all_pairs() -> LossConfig {
        LossConfig {
            reduction: Reduction::AllPairs,
            ..LossConfig::default()
        }
    }

    #[test]
    fn single_positive_pair() {
        // unit vectors at distance 0.5: angle with 2 sin(t/2) = 0.5
        let t = 2.0 * (0.25f64).asin();
        let batch = vec![(unit(&[1.0, 0.0]), 0), (unit(&[t.cos(), t.sin()]), 0)];
        let out = contrastive_loss(&batch, &MemoryBank::new(4), &all_pairs()).unwrap();
        assert!((out.loss - 0.5).abs() < 1e-12);
        assert_eq!(out.pairs, 1);
    }

    #[test]
    fn negative_beyond_margin_is_inactive() {
        // distance 1.2
        let t = 2.0 * (0.6f64).asin();
        let batch = vec![(unit(&[1.0, 0.0]), 0), (unit(&[t.cos(), t.sin()]), 1)];
        let out = contrastive_loss(&batch, &MemoryBank::new(4), &all_pairs()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.iter().flatten().all(|&g| g == 0.0));
        assert_eq!(out.active, 0);
    }

    #[test]
    fn bank_pairs_are_counted() {
        let mut bank = MemoryBank::new(4);
        bank.push(&unit(&[0.0, 1.0]), 5);
        bank.push(&unit(&[1.0, 0.1]), 0);
        let batch = vec![(unit(&[1.0, 0.0]), 0)];
        let out = contrastive_loss(&batch, &bank, &all_pairs()).unwrap();
        assert_eq!(out.pairs, 2);
        // orthogonal negative at sqrt(2) is inactive, same-label entry is a positive
        let d = {
            let b = unit(&[1.0, 0.1]);
            ((1.0 - b.as_slice()[0]).powi(2) + b.as_slice()[1].powi(2)).sqrt()
        };
        assert!((out.loss - d / 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            contrastive_loss(&[], &MemoryBank::new(1), &all_pairs()),
            Err(Error::EmptyBatch)
        ));
        let bad = LossConfig {
            pos_margin: 1.0,
            neg_margin: 0.5,
            ..all_pairs()
        };
        let batch = vec![(unit(&[1.0]), 0)];
        assert!(contrastive_loss(&batch, &MemoryBank::new(1), &bad).is_err());
    }

    #[test]
    fn zero_loss_when_margins_satisfied() {
        let batch = vec![
            (unit(&[1.0, 0.0, 0.0]), 0),
            (unit(&[1.0, 0.0, 0.0]), 0),
            (unit(&[0.0, 1.0, 0.0]), 1),
            (unit(&[0.0, 0.0, 1.0]), 2),
        ];
        let out = contrastive_loss(&batch, &MemoryBank::new(2), &all_pairs()).unwrap();
        assert_eq!(out.loss, 0.0);
    }
}
