//! Staged training: minibatches of augmented positive pairs, optional reference
//! negatives and ground-truth positives, trained against the memory bank.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::bank::{Label, MemoryBank};
use super::encoder::{Encoder, ForwardCache};
use super::loss::{contrastive_loss, LossConfig};
use super::optim::{sgd_momentum_step, MomentumState};
use crate::datagen::{augment_vector, SyntheticWorld, Tier};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Settings shared by every stage of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Source items per minibatch; each contributes two views.
    pub batch_size: usize,
    pub momentum: f64,
    pub loss: LossConfig,
    pub bank_capacity: usize,
    /// Unaugmented reference items added per batch when reference negatives are on.
    pub refs_per_batch: usize,
    /// Ground-truth (query, reference) pairs added per batch when enabled.
    pub gt_per_batch: usize,
    pub d_hidden: Option<usize>,
    pub d_out: usize,
    /// Whether bias vectors are updated; frozen biases stay at their initial zero.
    pub train_bias: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            batch_size: 32,
            momentum: 0.9,
            loss: LossConfig::default(),
            bank_capacity: 2048,
            refs_per_batch: 16,
            gt_per_batch: 8,
            d_hidden: None,
            d_out: 32,
            train_bias: false,
        }
    }
}

/// One step of the progressive schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: usize,
    pub tier: Tier,
    pub include_reference_negatives: bool,
    pub include_gt_positives: bool,
    pub epochs: usize,
    pub lr: f64,
}

/// Weak, intermediate, strong with reference negatives, then ground-truth pairs
/// without augmentation.
pub fn default_schedule() -> Vec<StageConfig> {
    let stage = |stage, tier, refs, gt, epochs, lr| StageConfig {
        stage,
        tier,
        include_reference_negatives: refs,
        include_gt_positives: gt,
        epochs,
        lr,
    };
    vec![
        stage(1, Tier::Weak, false, false, 1, 0.5),
        stage(2, Tier::Intermediate, false, false, 2, 0.3),
        stage(3, Tier::Strong, true, false, 3, 0.2),
        stage(4, Tier::Strong, true, true, 3, 0.03),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: usize,
    /// Mean loss over the steps of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Raw inputs seen by the trainer.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    pub training: &'a EmbeddingSet,
    pub reference: &'a EmbeddingSet,
    pub queries: &'a EmbeddingSet,
    /// (query index, reference index) pairs usable as positives.
    pub gt: Vec<(usize, usize)>,
}

impl<'a> TrainingData<'a> {
    /// Uses ground truth only for the listed queries.
    pub fn from_world(world: &'a SyntheticWorld, usable_queries: &[usize]) -> Self {
        let usable: std::collections::HashSet<usize> = usable_queries.iter().copied().collect();
        TrainingData {
            training: &world.training,
            reference: &world.reference,
            queries: &world.queries,
            gt: world
                .gt
                .iter()
                .copied()
                .filter(|(q, _)| usable.contains(q))
                .collect(),
        }
    }
}

/// Two views of one source: the first augmented at `tier`, the second with the
/// weak tier. Both are the source itself when `tier` is `None`.
pub fn make_positive_pair(source: &[f64], tier: Tier, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    if tier == Tier::None {
        return (source.to_vec(), source.to_vec());
    }
    let a = augment_vector(source, tier, rng);
    let b = augment_vector(source, Tier::Weak, rng);
    (a, b)
}

/// Trains `encoder` in place for `stage.epochs` epochs.
pub fn run_stage(
    encoder: &mut Encoder,
    data: &TrainingData<'_>,
    stage: &StageConfig,
    cfg: &TrainerConfig,
    bank: &mut MemoryBank,
    optimizer: &mut MomentumState,
    rng: &mut Rng,
) -> Result<StageMetrics> {
    cfg.loss.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    for set in [data.training, data.reference, data.queries] {
        if set.dim() != encoder.d_in() {
            return Err(Error::DimMismatch {
                expected: encoder.d_in(),
                found: set.dim(),
            });
        }
    }
    let n_train = data.training.len();
    let ref_label = |r: usize| (n_train + r) as Label;
    let mut metrics = StageMetrics {
        stage: stage.stage,
        epoch_losses: Vec::with_capacity(stage.epochs),
    };
    if stage.epochs == 0 || n_train == 0 {
        return Ok(metrics);
    }

    let use_refs =
        stage.include_reference_negatives && !data.reference.is_empty() && cfg.refs_per_batch > 0;
    let use_gt = stage.include_gt_positives && !data.gt.is_empty() && cfg.gt_per_batch > 0;
    let mut grad = vec![0.0; encoder.params().len()];

    for _ in 0..stage.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(rng);
        let mut ref_order: Vec<usize> = (0..data.reference.len()).collect();
        ref_order.shuffle(rng);
        let mut gt_order = data.gt.clone();
        gt_order.shuffle(rng);
        let (mut ref_cursor, mut gt_cursor) = (0, 0);

        let mut loss_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs: Vec<(Vec<f64>, Label)> = Vec::new();
            for &i in chunk {
                let (a, b) = make_positive_pair(&data.training.row_f64(i), stage.tier, rng);
                inputs.push((a, i as Label));
                inputs.push((b, i as Label));
            }
            if use_refs {
                for _ in 0..cfg.refs_per_batch {
                    let r = ref_order[ref_cursor % ref_order.len()];
                    ref_cursor += 1;
                    inputs.push((data.reference.row_f64(r), ref_label(r)));
                }
            }
            if use_gt {
                for _ in 0..cfg.gt_per_batch {
                    let (q, r) = gt_order[gt_cursor % gt_order.len()];
                    gt_cursor += 1;
                    inputs.push((data.queries.row_f64(q), ref_label(r)));
                    inputs.push((data.reference.row_f64(r), ref_label(r)));
                }
            }

            let caches: Vec<ForwardCache> = inputs
                .iter()
                .map(|(x, _)| encoder.forward_cached(x))
                .collect::<Result<_>>()?;
            let batch: Vec<_> = caches
                .iter()
                .zip(&inputs)
                .map(|(c, (_, l))| (c.output().clone(), *l))
                .collect();
            let out = contrastive_loss(&batch, bank, &cfg.loss)?;

            grad.iter_mut().for_each(|g| *g = 0.0);
            for (cache, g) in caches.iter().zip(&out.grads) {
                encoder.backward(cache, g, &mut grad);
            }
            if !cfg.train_bias {
                for range in encoder.bias_ranges() {
                    grad[range].iter_mut().for_each(|g| *g = 0.0);
                }
            }
            sgd_momentum_step(
                encoder.params_mut(),
                &grad,
                optimizer,
                stage.lr,
                cfg.momentum,
            )?;
            bank.push_batch(batch.iter().map(|(d, l)| (d, *l)));

            loss_sum += out.loss;
            steps += 1;
        }
        metrics.epoch_losses.push(loss_sum / steps as f64);
    }
    Ok(metrics)
}
