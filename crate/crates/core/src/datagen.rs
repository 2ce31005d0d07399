//! Synthetic copy-detection worlds.
//!
//! A world holds raw feature vectors for a training set, a reference set, a
//! query set and a held-out pool, all drawn i.i.d. from one base distribution
//! and mutually disjoint. A fraction of the queries are augmented copies of
//! reference items; the rest are fresh distractors.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{read_embeddings, write_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Augmentation magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    None,
    Weak,
    Intermediate,
    Strong,
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Tier::None),
            "weak" => Ok(Tier::Weak),
            "intermediate" => Ok(Tier::Intermediate),
            "strong" => Ok(Tier::Strong),
            other => Err(Error::InvalidConfig(format!("unknown tier {other:?}"))),
        }
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tier::None => "none",
            Tier::Weak => "weak",
            Tier::Intermediate => "intermediate",
            Tier::Strong => "strong",
        })
    }
}

/// Parameters of one augmentation tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Scale of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Bound on the angle of each random planar rotation, radians.
    pub max_angle: f64,
    /// Range of the convex mixing weight with a random distractor vector.
    pub mix: (f64, f64),
    /// Probability that a coordinate is zeroed.
    pub dropout: f64,
    /// Fraction of coordinates, counted from the last, that receive noise.
    pub noise_coverage: f64,
}

impl Tier {
    pub fn params(self) -> AugmentParams {
        use std::f64::consts::PI;
        match self {
            Tier::None => AugmentParams {
                noise_sigma: 0.0,
                max_angle: 0.0,
                mix: (0.0, 0.0),
                dropout: 0.0,
                noise_coverage: 0.0,
            },
            Tier::Weak => AugmentParams {
                noise_sigma: 0.1,
                max_angle: PI / 16.0,
                mix: (0.0, 0.0),
                dropout: 0.0,
                noise_coverage: COVERAGE_WEAK,
            },
            Tier::Intermediate => AugmentParams {
                noise_sigma: 0.3,
                max_angle: PI / 8.0,
                mix: (0.0, 0.2),
                dropout: 0.1,
                noise_coverage: COVERAGE_INTER,
            },
            Tier::Strong => AugmentParams {
                noise_sigma: 0.6,
                max_angle: PI / 4.0,
                mix: (0.1, 0.5),
                dropout: 0.2,
                noise_coverage: COVERAGE_STRONG,
            },
        }
    }
}

pub const COVERAGE_WEAK: f64 = 0.25;
pub const COVERAGE_INTER: f64 = 0.5;
pub const COVERAGE_STRONG: f64 = 0.75;

/// Whether coordinate `j` out of `dim` receives noise under `coverage`.
/// The trailing `ceil(coverage * dim)` coordinates are noised.
pub fn noised(j: usize, dim: usize, coverage: f64) -> bool {
    let covered = ((coverage * dim as f64).ceil() as usize).min(dim);
    j >= dim - covered
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Noise,
    Rotate,
    Mix,
    Dropout,
}

/// Applies the tier's augmentations to `v` in a freshly shuffled order and returns
/// the raw (unnormalized) result. `Tier::None` returns `v` and draws nothing.
pub fn augment_vector(v: &[f64], tier: Tier, rng: &mut Rng) -> Vec<f64> {
    if tier == Tier::None {
        return v.to_vec();
    }
    let p = tier.params();
    let dim = v.len();
    let mut out = v.to_vec();
    let mut ops = [Op::Noise, Op::Rotate, Op::Mix, Op::Dropout];
    ops.shuffle(rng);
    for op in ops {
        match op {
            Op::Noise => {
                for (j, x) in out.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(rng);
                    if noised(j, dim, p.noise_coverage) {
                        *x += p.noise_sigma * z;
                    }
                }
            }
            Op::Rotate => {
                if dim >= 2 {
                    for _ in 0..(dim / 4).max(1) {
                        let a = rng.random_range(0..dim);
                        let mut b = rng.random_range(0..dim - 1);
                        if b >= a {
                            b += 1;
                        }
                        let theta = p.max_angle * (2.0 * rng.random::<f64>() - 1.0);
                        let (s, c) = theta.sin_cos();
                        let (xa, xb) = (out[a], out[b]);
                        out[a] = c * xa - s * xb;
                        out[b] = s * xa + c * xb;
                    }
                }
            }
            Op::Mix => {
                let lambda = p.mix.0 + (p.mix.1 - p.mix.0) * rng.random::<f64>();
                for x in out.iter_mut() {
                    let u: f64 = StandardNormal.sample(rng);
                    *x = (1.0 - lambda) * *x + lambda * u;
                }
            }
            Op::Dropout => {
                for x in out.iter_mut() {
                    if rng.random::<f64>() < p.dropout {
                        *x = 0.0;
                    }
                }
            }
        }
    }
    out
}

/// Size and shape of a synthetic world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub n_training: usize,
    pub n_reference: usize,
    pub n_queries: usize,
    /// Size of the held-out pool, another twin of the reference set.
    pub n_holdout: usize,
    pub d_in: usize,
    /// Fraction of queries that are copies of a reference item.
    pub copy_rate: f64,
    /// Augmentation applied to produce copy queries.
    pub tier: Tier,
    /// Number of mixture components of the base distribution; 0 draws every
    /// coordinate from a standard Gaussian.
    pub clusters: usize,
    /// Share of each coordinate's unit variance carried by the cluster center;
    /// the rest is within-cluster spread.
    pub center_variance: f64,
    /// Number of hidden edit directions shared by every copy in the world.
    /// They stand for edits the training augmentations never produce; only
    /// ground-truth pairs reveal them.
    pub edit_rank: usize,
    /// Standard deviation of the per-copy gain along each edit direction.
    pub edit_scale: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            n_training: 4096,
            n_reference: 4096,
            n_queries: 2048,
            n_holdout: 4096,
            d_in: 64,
            copy_rate: 0.25,
            tier: Tier::Strong,
            clusters: 64,
            center_variance: 0.4,
            edit_rank: 8,
            edit_scale: 0.3,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_training == 0 || self.n_reference == 0 || self.n_queries == 0 || self.d_in == 0 {
            return Err(Error::InvalidConfig(
                "world counts and dim must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.center_variance) {
            return Err(Error::InvalidConfig(format!(
                "center_variance must lie in [0, 1), got {}",
                self.center_variance
            )));
        }
        if !(0.0..=1.0).contains(&self.copy_rate) {
            return Err(Error::InvalidConfig(format!(
                "copy_rate must lie in [0, 1], got {}",
                self.copy_rate
            )));
        }
        Ok(())
    }
}

/// Training, reference, query and held-out raw sets plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub params: WorldParams,
    pub training: EmbeddingSet,
    pub reference: EmbeddingSet,
    pub queries: EmbeddingSet,
    pub holdout: EmbeddingSet,
    /// (query index, reference index) of every copy query, in query order.
    pub gt: Vec<(usize, usize)>,
}

struct BaseDistribution {
    centers: Vec<Vec<f64>>,
    cumulative: Vec<f64>,
    spread: f64,
}

impl BaseDistribution {
    fn new(params: &WorldParams, rng: &mut Rng) -> Self {
        if params.clusters == 0 {
            return BaseDistribution {
                centers: Vec::new(),
                cumulative: Vec::new(),
                spread: 1.0,
            };
        }
        let center_scale = params.center_variance.sqrt();
        let centers = (0..params.clusters)
            .map(|_| {
                gaussian(params.d_in, rng)
                    .into_iter()
                    .map(|x| center_scale * x)
                    .collect()
            })
            .collect();
        // Zipf weights give a few dense regions and a long sparse tail
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = (0..params.clusters)
            .map(|m| {
                acc += 1.0 / (m as f64 + 1.0);
                acc
            })
            .collect();
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        BaseDistribution {
            centers,
            cumulative,
            spread: (1.0 - params.center_variance).sqrt(),
        }
    }

    fn sample(&self, dim: usize, rng: &mut Rng) -> Vec<f64> {
        let mut v = gaussian(dim, rng);
        if self.centers.is_empty() {
            return v;
        }
        let u: f64 = rng.random();
        let m = self
            .cumulative
            .partition_point(|&c| c < u)
            .min(self.centers.len() - 1);
        for (x, c) in v.iter_mut().zip(&self.centers[m]) {
            *x = c + self.spread * *x;
        }
        v
    }
}

fn gaussian(dim: usize, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn edit_directions(seed: u64, params: &WorldParams) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, "edits");
    (0..params.edit_rank)
        .map(|_| {
            let v = gaussian(params.d_in, &mut rng);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

// Copies at Tier::None stay exact duplicates.
fn apply_edits(v: &mut [f64], edits: &[Vec<f64>], params: &WorldParams, rng: &mut Rng) {
    if params.tier == Tier::None {
        return;
    }
    for e in edits {
        let g: f64 = StandardNormal.sample(rng);
        for (x, d) in v.iter_mut().zip(e) {
            *x += params.edit_scale * g * d;
        }
    }
}

fn id_list(prefix: char, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:06}")).collect()
}

fn draw_set(
    prefix: char,
    n: usize,
    base: &BaseDistribution,
    dim: usize,
    rng: &mut Rng,
) -> Result<EmbeddingSet> {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| base.sample(dim, rng)).collect();
    EmbeddingSet::from_raw_rows(dim, id_list(prefix, n), &rows)
}

/// Generates a world. Deterministic in `seed`.
pub fn gen_world(seed: u64, params: &WorldParams) -> Result<SyntheticWorld> {
    params.validate()?;
    let dim = params.d_in;
    let mut rng = rng::stream(seed, "world");
    let base = BaseDistribution::new(params, &mut rng);
    let edits = edit_directions(seed, params);
    let training = draw_set('T', params.n_training, &base, dim, &mut rng)?;
    let reference = draw_set('R', params.n_reference, &base, dim, &mut rng)?;
    let holdout = draw_set('H', params.n_holdout, &base, dim, &mut rng)?;

    let n_copies = (params.copy_rate * params.n_queries as f64).round() as usize;
    let mut positions: Vec<usize> = (0..params.n_queries).collect();
    positions.shuffle(&mut rng);
    let mut copy_positions = positions[..n_copies].to_vec();
    copy_positions.sort_unstable();

    let mut sources: Vec<usize> = (0..params.n_reference).collect();
    sources.shuffle(&mut rng);
    let source_of = |c: usize| sources[c % sources.len()];

    let mut rows = Vec::with_capacity(params.n_queries);
    let mut gt = Vec::with_capacity(n_copies);
    let mut next_copy = 0;
    for q in 0..params.n_queries {
        if next_copy < copy_positions.len() && copy_positions[next_copy] == q {
            let r = source_of(next_copy);
            let mut aug = rng::indexed_stream(seed, "copy", q as u64);
            let mut v = augment_vector(&reference.row_f64(r), params.tier, &mut aug);
            apply_edits(&mut v, &edits, params, &mut aug);
            rows.push(v);
            gt.push((q, r));
            next_copy += 1;
        } else {
            rows.push(base.sample(dim, &mut rng));
        }
    }
    let queries = EmbeddingSet::from_raw_rows(dim, id_list('Q', params.n_queries), &rows)?;
    Ok(SyntheticWorld {
        params: *params,
        training,
        reference,
        queries,
        holdout,
        gt,
    })
}

impl SyntheticWorld {
    /// Ground truth as `(query_id, reference_id)` pairs.
    pub fn gt_ids(&self) -> Vec<(String, String)> {
        self.gt
            .iter()
            .map(|&(q, r)| {
                (
                    self.queries.id(q).to_owned(),
                    self.reference.id(r).to_owned(),
                )
            })
            .collect()
    }

    /// Splits query indices into a public prefix (usable for training with ground
    /// truth) and a private remainder (used for evaluation).
    pub fn split_queries(&self, public_fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let n = self.queries.len();
        let cut = ((public_fraction.clamp(0.0, 1.0)) * n as f64).floor() as usize;
        ((0..cut).collect(), (cut..n).collect())
    }

    /// Writes the `.emb`/`.ids` pairs and `gt.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_embeddings(&self.training, dir.join("training.emb"))?;
        write_embeddings(&self.reference, dir.join("reference.emb"))?;
        write_embeddings(&self.queries, dir.join("queries.emb"))?;
        write_embeddings(&self.holdout, dir.join("holdout.emb"))?;
        write_gt_csv(&self.gt_ids(), dir.join("gt.csv"))?;
        fs::write(
            dir.join("world.json"),
            serde_json::to_string_pretty(&self.params)? + "\n",
        )?;
        Ok(())
    }

    /// Reads a world written by [`SyntheticWorld::write`].
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let params: WorldParams =
            serde_json::from_str(&fs::read_to_string(dir.join("world.json"))?)?;
        let training = read_embeddings(dir.join("training.emb"))?;
        let reference = read_embeddings(dir.join("reference.emb"))?;
        let queries = read_embeddings(dir.join("queries.emb"))?;
        let holdout = read_embeddings(dir.join("holdout.emb"))?;
        let pairs = read_gt_csv(dir.join("gt.csv"))?;
        let index = |set: &EmbeddingSet, id: &str| {
            set.ids()
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::Format(format!("gt id {id:?} not found")))
        };
        let mut gt = Vec::with_capacity(pairs.len());
        for (q, r) in &pairs {
            gt.push((index(&queries, q)?, index(&reference, r)?));
        }
        Ok(SyntheticWorld {
            params,
            training,
            reference,
            queries,
            holdout,
            gt,
        })
    }
}

/// Writes `query_id,reference_id` rows under a header line.
pub fn write_gt_csv(pairs: &[(String, String)], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "query_id,reference_id")?;
    for (q, r) in pairs {
        writeln!(w, "{q},{r}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gt_csv(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some("query_id,reference_id") {
        return Err(Error::Format(
            "gt.csv must start with header query_id,reference_id".into(),
        ));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (q, r) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("gt.csv line {}: expected two fields", n + 2)))?;
        out.push((q.trim().to_owned(), r.trim().to_owned()));
    }
    Ok(out)
}
