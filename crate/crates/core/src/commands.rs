//! File-level operations behind the `copydet` subcommands. Each function reads
//! its inputs from disk, runs one module and writes its outputs.

use std::fs;
use std::path::Path;

use crate::datagen::{gen_world, read_gt_csv, SyntheticWorld, WorldParams};
use crate::embedding::{read_embeddings, write_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, neighbor_matches, read_matches_tsv, EvalReport, GroundTruth, Match, RankedMatches,
};
use crate::knn::topk_batch;
use crate::negsub::{subtract_negatives_batch, NegSubConfig};
use crate::rng;
use crate::trainer::{
    run_stage, Encoder, MemoryBank, MomentumState, StageConfig, StageMetrics, TrainerConfig,
    TrainingData,
};

fn load(path: &Path) -> Result<EmbeddingSet> {
    read_embeddings(path).map_err(|e| e.context(path.display().to_string()))
}

/// Generates a world from `seed` and writes it to `out_dir`.
pub fn gen_data(
    seed: u64,
    params: &WorldParams,
    out_dir: impl AsRef<Path>,
) -> Result<SyntheticWorld> {
    let world = gen_world(seed, params)?;
    world.write(out_dir)?;
    Ok(world)
}

/// Reads a stage schedule: a JSON array of stage objects.
pub fn read_stages(path: impl AsRef<Path>) -> Result<Vec<StageConfig>> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let stages: Vec<StageConfig> = serde_json::from_str(&text)?;
    if stages.is_empty() {
        return Err(Error::InvalidConfig("stage schedule is empty".into()));
    }
    for s in &stages {
        if !(s.lr.is_finite() && s.lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stage {}: lr must be positive",
                s.stage
            )));
        }
    }
    Ok(stages)
}

/// Trains a fresh encoder on `world` through `stages`. Ground truth is used only
/// for the public query prefix selected by `public_fraction`.
pub fn train_encoder(
    world: &SyntheticWorld,
    stages: &[StageConfig],
    cfg: &TrainerConfig,
    seed: u64,
    public_fraction: f64,
) -> Result<(Encoder, Vec<StageMetrics>)> {
    let mut rng = rng::stream(seed, "train");
    let mut encoder = Encoder::new(world.training.dim(), cfg.d_hidden, cfg.d_out, &mut rng)?;
    let (public, _) = world.split_queries(public_fraction);
    let data = TrainingData::from_world(world, &public);
    let mut bank = MemoryBank::new(cfg.bank_capacity);
    let mut optimizer = MomentumState::new(encoder.params().len());
    let mut metrics = Vec::with_capacity(stages.len());
    for stage in stages {
        let m = run_stage(
            &mut encoder,
            &data,
            stage,
            cfg,
            &mut bank,
            &mut optimizer,
            &mut rng,
        )
        .map_err(|e| e.context(format!("stage {}", stage.stage)))?;
        metrics.push(m);
    }
    Ok((encoder, metrics))
}

/// Reads a world directory and a stage file, trains, and saves the checkpoint.
pub fn train(
    world_dir: impl AsRef<Path>,
    stages_path: impl AsRef<Path>,
    cfg: &TrainerConfig,
    seed: u64,
    public_fraction: f64,
    out: impl AsRef<Path>,
) -> Result<Vec<StageMetrics>> {
    let world_dir = world_dir.as_ref();
    let world =
        SyntheticWorld::read(world_dir).map_err(|e| e.context(world_dir.display().to_string()))?;
    let stages = read_stages(stages_path)?;
    let (encoder, metrics) = train_encoder(&world, &stages, cfg, seed, public_fraction)?;
    encoder.save(out)?;
    Ok(metrics)
}

/// Encodes a raw embedding file with a saved encoder.
pub fn embed(
    encoder_path: impl AsRef<Path>,
    input: impl AsRef<Path>,
    out: impl AsRef<Path>,
) -> Result<EmbeddingSet> {
    let encoder_path = encoder_path.as_ref();
    let encoder =
        Encoder::load(encoder_path).map_err(|e| e.context(encoder_path.display().to_string()))?;
    let raw = load(input.as_ref())?;
    let encoded = encoder.encode_set(&raw)?;
    write_embeddings(&encoded, out)?;
    Ok(encoded)
}

pub fn postprocess(
    negatives: impl AsRef<Path>,
    input: impl AsRef<Path>,
    out: impl AsRef<Path>,
    cfg: &NegSubConfig,
) -> Result<EmbeddingSet> {
    let negatives = load(negatives.as_ref())?;
    let targets = load(input.as_ref())?;
    let result = subtract_negatives_batch(&targets, &negatives, cfg)?;
    write_embeddings(&result, out)?;
    Ok(result)
}

/// Top-`k` references per query, in query order then score descending.
pub fn search(
    queries: impl AsRef<Path>,
    references: impl AsRef<Path>,
    k: usize,
) -> Result<Vec<Match>> {
    let queries = load(queries.as_ref())?;
    let references = load(references.as_ref())?;
    let lists = topk_batch(&queries, &references, k)?;
    Ok(neighbor_matches(&queries, &references, &lists))
}

pub fn eval(gt: impl AsRef<Path>, pred: impl AsRef<Path>, precision: f64) -> Result<EvalReport> {
    let gt = gt.as_ref();
    let gt = GroundTruth::new(read_gt_csv(gt).map_err(|e| e.context(gt.display().to_string()))?);
    let pred = pred.as_ref();
    let ranked = RankedMatches::new(
        read_matches_tsv(pred).map_err(|e| e.context(pred.display().to_string()))?,
    )?;
    evaluate(&ranked, &gt, precision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::default_schedule;

    fn tiny() -> WorldParams {
        WorldParams {
            n_training: 64,
            n_reference: 64,
            n_queries: 32,
            n_holdout: 64,
            d_in: 8,
            clusters: 4,
            ..WorldParams::default()
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let world_dir = dir.path().join("world");
        gen_data(3, &tiny(), &world_dir).unwrap();

        let stages: Vec<_> = default_schedule()
            .into_iter()
            .map(|s| StageConfig { epochs: 1, ..s })
            .collect();
        let stages_path = dir.path().join("stages.json");
        fs::write(&stages_path, serde_json::to_string(&stages).unwrap()).unwrap();
        let cfg = TrainerConfig {
            d_out: 4,
            ..TrainerConfig::default()
        };
        let enc = dir.path().join("encoder.bin");
        let metrics = train(&world_dir, &stages_path, &cfg, 3, 0.5, &enc).unwrap();
        assert_eq!(metrics.len(), 4);

        let q = embed(
            &enc,
            world_dir.join("queries.emb"),
            dir.path().join("q.emb"),
        )
        .unwrap();
        embed(
            &enc,
            world_dir.join("reference.emb"),
            dir.path().join("r.emb"),
        )
        .unwrap();
        embed(
            &enc,
            world_dir.join("training.emb"),
            dir.path().join("t.emb"),
        )
        .unwrap();
        assert_eq!(q.dim(), 4);
        let pq = postprocess(
            dir.path().join("t.emb"),
            dir.path().join("q.emb"),
            dir.path().join("q.neg.emb"),
            &NegSubConfig::default(),
        )
        .unwrap();
        assert_eq!(read_embeddings(dir.path().join("q.neg.emb")).unwrap(), pq);

        let matches = search(dir.path().join("q.neg.emb"), dir.path().join("r.emb"), 2).unwrap();
        assert_eq!(matches.len(), 64);
        let pred = dir.path().join("m.tsv");
        crate::eval::write_matches_tsv(&matches, &pred).unwrap();
        let report = eval(world_dir.join("gt.csv"), &pred, 0.9).unwrap();
        assert_eq!(report.pairs, 64);
        assert_eq!(report.positives, 8);
    }

    #[test]
    fn train_is_deterministic() {
        let world = gen_world(5, &tiny()).unwrap();
        let stages = [StageConfig {
            epochs: 1,
            ..default_schedule()[0]
        }];
        let cfg = TrainerConfig {
            d_out: 4,
            ..TrainerConfig::default()
        };
        let (a, _) = train_encoder(&world, &stages, &cfg, 9, 0.5).unwrap();
        let (b, _) = train_encoder(&world, &stages, &cfg, 9, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_schedule_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        fs::write(&p, "[]").unwrap();
        assert!(matches!(read_stages(&p), Err(Error::InvalidConfig(_))));
    }
}
