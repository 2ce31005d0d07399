//! End-to-end runs: generate a world, train through the stage schedule,
//! evaluate after every stage, then evaluate again after negative embedding
//! subtraction.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{gen_world, SyntheticWorld, Tier, WorldParams};
use crate::embedding::{write_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::{build_candidates, evaluate, EvalReport, GroundTruth};
use crate::negsub::{subtract_negatives_batch, NegSubConfig};
use crate::rng;
use crate::trainer::{
    default_schedule, run_stage, Encoder, MemoryBank, MomentumState, StageConfig, TrainerConfig,
    TrainingData,
};

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub world: WorldParams,
    pub trainer: TrainerConfig,
    pub stages: Vec<StageConfig>,
    pub negsub: NegSubConfig,
    /// Leading fraction of queries whose ground truth may be used for training.
    /// The remaining queries form the validation split.
    pub public_fraction: f64,
    /// Candidates kept per query before global ranking.
    pub per_query_k: usize,
    /// Precision threshold for the recall metric.
    pub precision: f64,
    /// Apply the post-process to reference descriptors as well as queries.
    pub postprocess_references: bool,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(seed: u64) -> Self {
        RunManifest {
            seed,
            world: WorldParams::default(),
            trainer: TrainerConfig::default(),
            stages: default_schedule(),
            negsub: NegSubConfig::default(),
            public_fraction: 0.5,
            per_query_k: 1,
            precision: 0.9,
            postprocess_references: true,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    /// Hex SHA-256 of the manifest's JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.negsub.validate()?;
        self.trainer.loss.validate()?;
        if self.per_query_k == 0 {
            return Err(Error::InvalidConfig(
                "per_query_k must be at least 1".into(),
            ));
        }
        if !(self.precision > 0.0 && self.precision <= 1.0) {
            return Err(Error::InvalidConfig("precision must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.public_fraction) {
            return Err(Error::InvalidConfig(
                "public_fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Metrics of one row of a trend report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub label: String,
    pub stage: Option<usize>,
    pub tier: Option<Tier>,
    pub reference_negatives: bool,
    pub gt_positives: bool,
    pub postprocess: bool,
    pub micro_ap: f64,
    pub recall_at_p90: f64,
    /// Mean loss of the stage's last epoch, when the row is a training stage.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub manifest_hash: String,
    pub manifest: RunManifest,
    /// Metrics of the freshly initialized encoder.
    pub untrained: EvalReport,
    pub rows: Vec<TrendRow>,
}

impl TrendReport {
    /// µAP after each training stage, in schedule order.
    pub fn stage_micro_ap(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| !r.postprocess)
            .map(|r| r.micro_ap)
            .collect()
    }

    /// µAP after the post-process.
    pub fn postprocess_micro_ap(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.postprocess).map(|r| r.micro_ap)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Plain-text table with one row per stage plus the post-process row.
    pub fn to_table(&self) -> String {
        let mark = |b: bool| if b { "x" } else { "" };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:<13} {:^9} {:^6} {:^12} {:>8} {:>10}",
            "stage", "augmentation", "w/ ref", "w/ GT", "post-process", "µAP", "R@P90"
        );
        for r in &self.rows {
            let tier = match (r.tier, r.postprocess) {
                (_, true) | (None, _) | (Some(Tier::None), _) => String::new(),
                (Some(t), false) => t.to_string(),
            };
            let _ = writeln!(
                s,
                "{:<8} {:<13} {:^9} {:^6} {:^12} {:>8.4} {:>10.4}",
                r.label,
                tier,
                mark(r.reference_negatives),
                mark(r.gt_positives),
                mark(r.postprocess),
                r.micro_ap,
                r.recall_at_p90
            );
        }
        s
    }
}

/// Encoded sets plus everything needed to evaluate them.
struct Context {
    world: SyntheticWorld,
    public: Vec<usize>,
    private: Vec<usize>,
}

impl Context {
    fn new(manifest: &RunManifest) -> Result<Self> {
        manifest.validate()?;
        let world = gen_world(manifest.seed, &manifest.world).map_err(|e| e.context("gen-data"))?;
        let (public, private) = world.split_queries(manifest.public_fraction);
        Ok(Context {
            world,
            public,
            private,
        })
    }

    fn private_gt(&self) -> GroundTruth {
        let private: std::collections::HashSet<usize> = self.private.iter().copied().collect();
        GroundTruth::new(
            self.world
                .gt
                .iter()
                .filter(|(q, _)| private.contains(q))
                .map(|&(q, r)| {
                    (
                        self.world.queries.id(q).to_owned(),
                        self.world.reference.id(r).to_owned(),
                    )
                }),
        )
    }
}

/// Descriptors produced by a trained encoder.
#[derive(Debug, Clone)]
pub struct EncodedSets {
    pub queries: EmbeddingSet,
    pub reference: EmbeddingSet,
    pub training: EmbeddingSet,
    pub holdout: EmbeddingSet,
}

fn encode(encoder: &Encoder, world: &SyntheticWorld, private: &[usize]) -> Result<EncodedSets> {
    Ok(EncodedSets {
        queries: encoder.encode_set(&world.queries.select(private))?,
        reference: encoder.encode_set(&world.reference)?,
        training: encoder.encode_set(&world.training)?,
        holdout: encoder.encode_set(&world.holdout)?,
    })
}

fn score(
    manifest: &RunManifest,
    queries: &EmbeddingSet,
    reference: &EmbeddingSet,
    gt: &GroundTruth,
) -> Result<EvalReport> {
    let ranked = build_candidates(queries, reference, manifest.per_query_k)?;
    evaluate(&ranked, gt, manifest.precision)
}

/// Applies the post-process with `negatives` as the pool and scores the result.
fn score_postprocessed(
    manifest: &RunManifest,
    sets: &EncodedSets,
    negatives: &EmbeddingSet,
    gt: &GroundTruth,
) -> Result<(EvalReport, EmbeddingSet, EmbeddingSet)> {
    let queries = subtract_negatives_batch(&sets.queries, negatives, &manifest.negsub)
        .map_err(|e| e.context("post-process queries"))?;
    let reference = if manifest.postprocess_references {
        subtract_negatives_batch(&sets.reference, negatives, &manifest.negsub)
            .map_err(|e| e.context("post-process references"))?
    } else {
        sets.reference.clone()
    };
    let report = score(manifest, &queries, &reference, gt)?;
    Ok((report, queries, reference))
}

struct Trained {
    encoder: Encoder,
    untrained: EvalReport,
    rows: Vec<TrendRow>,
}

fn train_and_track(manifest: &RunManifest, ctx: &Context, gt: &GroundTruth) -> Result<Trained> {
    let mut rng = rng::stream(manifest.seed, "train");
    let cfg = &manifest.trainer;
    let mut encoder = Encoder::new(manifest.world.d_in, cfg.d_hidden, cfg.d_out, &mut rng)?;
    let data = TrainingData::from_world(&ctx.world, &ctx.public);
    let untrained = {
        let sets = encode(&encoder, &ctx.world, &ctx.private)?;
        score(manifest, &sets.queries, &sets.reference, gt)?
    };
    let mut bank = MemoryBank::new(cfg.bank_capacity);
    let mut optimizer = MomentumState::new(encoder.params().len());
    let mut rows = Vec::with_capacity(manifest.stages.len() + 1);
    for stage in &manifest.stages {
        let metrics = run_stage(
            &mut encoder,
            &data,
            stage,
            cfg,
            &mut bank,
            &mut optimizer,
            &mut rng,
        )
        .map_err(|e| e.context(format!("stage {}", stage.stage)))?;
        let sets = encode(&encoder, &ctx.world, &ctx.private)?;
        let report = score(manifest, &sets.queries, &sets.reference, gt)?;
        rows.push(TrendRow {
            label: format!("stage {}", stage.stage),
            stage: Some(stage.stage),
            tier: Some(stage.tier),
            reference_negatives: stage.include_reference_negatives,
            gt_positives: stage.include_gt_positives,
            postprocess: false,
            micro_ap: report.micro_ap,
            recall_at_p90: report.recall_at_p90,
            final_loss: metrics.epoch_losses.last().copied(),
        });
    }
    Ok(Trained {
        encoder,
        untrained,
        rows,
    })
}

/// Runs the staged schedule and the post-process, writing artifacts to `out_dir`
/// when given.
pub fn reproduce_trend(manifest: &RunManifest, out_dir: Option<&Path>) -> Result<TrendReport> {
    let ctx = Context::new(manifest)?;
    let gt = ctx.private_gt();
    let trained = train_and_track(manifest, &ctx, &gt)?;
    let mut rows = trained.rows;
    let sets = encode(&trained.encoder, &ctx.world, &ctx.private)?;
    let (pp, pp_queries, pp_reference) = score_postprocessed(manifest, &sets, &sets.training, &gt)?;
    let last = manifest.stages.last();
    rows.push(TrendRow {
        label: "negsub".into(),
        stage: None,
        tier: None,
        reference_negatives: last.is_some_and(|s| s.include_reference_negatives),
        gt_positives: last.is_some_and(|s| s.include_gt_positives),
        postprocess: true,
        micro_ap: pp.micro_ap,
        recall_at_p90: pp.recall_at_p90,
        final_loss: None,
    });
    let report = TrendReport {
        manifest_hash: manifest.hash()?,
        manifest: manifest.clone(),
        untrained: trained.untrained,
        rows,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_manifest(manifest, dir)?;
        trained.encoder.save(dir.join("encoder.bin"))?;
        write_embeddings(&sets.queries, dir.join("queries.desc.emb"))?;
        write_embeddings(&sets.reference, dir.join("reference.desc.emb"))?;
        write_embeddings(&sets.training, dir.join("training.desc.emb"))?;
        write_embeddings(&pp_queries, dir.join("queries.negsub.emb"))?;
        write_embeddings(&pp_reference, dir.join("reference.negsub.emb"))?;
        fs::write(dir.join("report.json"), report.to_json()?)?;
        fs::write(dir.join("report.txt"), report.to_table())?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub manifest_hash: String,
    pub manifest: RunManifest,
    /// Final-stage metrics without post-process.
    pub baseline: EvalReport,
    /// Post-process with encoded training items as the negative pool.
    pub with_training: EvalReport,
    /// Post-process with the held-out twin pool.
    pub with_holdout: EvalReport,
    /// `with_holdout.micro_ap - with_training.micro_ap`.
    pub delta_micro_ap: f64,
    /// `with_training.micro_ap - baseline.micro_ap`.
    pub gain_micro_ap: f64,
}

impl SwapReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Trains once, then compares the post-process with two disjoint negative pools.
pub fn negative_swap(manifest: &RunManifest, out_dir: Option<&Path>) -> Result<SwapReport> {
    let ctx = Context::new(manifest)?;
    let gt = ctx.private_gt();
    let trained = train_and_track(manifest, &ctx, &gt)?;
    let sets = encode(&trained.encoder, &ctx.world, &ctx.private)?;
    let report = swap_with_pools(manifest, &sets, &sets.training, &sets.holdout, &gt)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_manifest(manifest, dir)?;
        write_embeddings(&sets.holdout, dir.join("holdout.desc.emb"))?;
        write_embeddings(&sets.training, dir.join("training.desc.emb"))?;
        fs::write(dir.join("swap.json"), report.to_json()?)?;
    }
    Ok(report)
}

fn swap_with_pools(
    manifest: &RunManifest,
    sets: &EncodedSets,
    first: &EmbeddingSet,
    second: &EmbeddingSet,
    gt: &GroundTruth,
) -> Result<SwapReport> {
    let baseline = score(manifest, &sets.queries, &sets.reference, gt)?;
    let (with_training, ..) = score_postprocessed(manifest, sets, first, gt)?;
    let (with_holdout, ..) = score_postprocessed(manifest, sets, second, gt)?;
    Ok(SwapReport {
        manifest_hash: manifest.hash()?,
        manifest: manifest.clone(),
        baseline,
        with_training,
        with_holdout,
        delta_micro_ap: with_holdout.micro_ap - with_training.micro_ap,
        gain_micro_ap: with_training.micro_ap - baseline.micro_ap,
    })
}

/// Negative swap where both pools are the training embeddings; the delta is zero.
pub fn negative_swap_identical_pools(manifest: &RunManifest) -> Result<SwapReport> {
    let ctx = Context::new(manifest)?;
    let gt = ctx.private_gt();
    let trained = train_and_track(manifest, &ctx, &gt)?;
    let sets = encode(&trained.encoder, &ctx.world, &ctx.private)?;
    swap_with_pools(manifest, &sets, &sets.training, &sets.training, &gt)
}

fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<()> {
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    Ok(())
}
