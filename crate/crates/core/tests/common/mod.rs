//! Reference implementations used to check the library. They favor the most
//! direct formulation over speed and share no code with the crate beyond types.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use copydet::embedding::EmbeddingSet;
use copydet::trainer::{contrastive_loss, Encoder, Label, LossConfig, MemoryBank};
use copydet::Descriptor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit_by_hand(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return unit_by_hand(&v);
        }
    }
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// A set of `n` random unit rows.
pub fn unit_set(rng: &mut ChaCha8Rng, prefix: &str, n: usize, dim: usize) -> EmbeddingSet {
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        data.extend(random_unit(rng, dim).iter().map(|&x| x as f32));
    }
    EmbeddingSet::new(dim, ids(prefix, n), data).unwrap()
}

pub fn rows(set: &EmbeddingSet) -> Vec<Vec<f64>> {
    (0..set.len())
        .map(|i| set.row(i).iter().map(|&x| x as f64).collect())
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scores every row, sorts everything, keeps the first `k`.
pub fn knn_oracle(query: &[f64], db: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = db
        .iter()
        .enumerate()
        .map(|(i, row)| (i, row.iter().zip(query).map(|(a, b)| a * b).sum()))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Step by step: search with the current vector, subtract each neighbor, normalize.
pub fn negsub_oracle(x: &[f64], negatives: &[Vec<f64>], n: usize, k: usize, beta: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    for _ in 0..n {
        let nn = knn_oracle(&x, negatives, k);
        for (idx, _) in nn {
            for d in 0..x.len() {
                x[d] -= beta / k as f64 * negatives[idx][d];
            }
        }
        x = unit_by_hand(&x);
    }
    x
}

/// Same as [`negsub_oracle`] but reuses the first round's neighbors; a known-wrong
/// variant used to show the re-search matters.
pub fn negsub_stale(x: &[f64], negatives: &[Vec<f64>], n: usize, k: usize, beta: f64) -> Vec<f64> {
    let nn = knn_oracle(x, negatives, k);
    let mut x = x.to_vec();
    for _ in 0..n {
        for &(idx, _) in &nn {
            for d in 0..x.len() {
                x[d] -= beta / k as f64 * negatives[idx][d];
            }
        }
        x = unit_by_hand(&x);
    }
    x
}

/// Micro-AP by recounting precision at every positive rank.
pub fn micro_ap_oracle(ranked_is_tp: &[bool], positives: usize) -> f64 {
    let mut sum = 0.0;
    for r in 0..ranked_is_tp.len() {
        if ranked_is_tp[r] {
            let tp = ranked_is_tp[..=r].iter().filter(|&&t| t).count();
            sum += tp as f64 / (r + 1) as f64;
        }
    }
    sum / positives as f64
}

pub fn recall_oracle(ranked_is_tp: &[bool], positives: usize, p: f64) -> f64 {
    let mut best = 0.0f64;
    for cut in 1..=ranked_is_tp.len() {
        let tp = ranked_is_tp[..cut].iter().filter(|&&t| t).count();
        let precision = tp as f64 / cut as f64;
        if precision >= p - 1e-12 {
            best = best.max(tp as f64 / positives as f64);
        }
    }
    best
}

/// Global order: score descending, then query id, then reference id.
pub fn sort_matches(mut m: Vec<(String, String, f64)>) -> Vec<(String, String, f64)> {
    m.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| a.1.cmp(&b.1))
    });
    m
}

/// Bounded FIFO with a deque; the front is the oldest entry.
pub struct RingOracle {
    pub capacity: usize,
    pub items: VecDeque<(Vec<f64>, Label)>,
}

impl RingOracle {
    pub fn new(capacity: usize) -> Self {
        RingOracle {
            capacity,
            items: VecDeque::new(),
        }
    }

    pub fn push(&mut self, v: Vec<f64>, l: Label) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back((v, l));
    }
}

pub fn bank_contents(bank: &MemoryBank) -> Vec<(Vec<f64>, Label)> {
    bank.iter().map(|(v, l)| (v.to_vec(), l)).collect()
}

/// Total loss of raw inputs pushed through `encoder`.
pub fn encoded_loss(
    encoder: &Encoder,
    inputs: &[(Vec<f64>, Label)],
    bank: &MemoryBank,
    cfg: &LossConfig,
) -> f64 {
    let batch: Vec<(Descriptor, Label)> = inputs
        .iter()
        .map(|(x, l)| (encoder.forward(x).unwrap(), *l))
        .collect();
    contrastive_loss(&batch, bank, cfg).unwrap().loss
}

/// Central differences of the encoded loss with respect to every parameter.
pub fn finite_difference(
    encoder: &Encoder,
    inputs: &[(Vec<f64>, Label)],
    bank: &MemoryBank,
    cfg: &LossConfig,
    step: f64,
) -> Vec<f64> {
    let mut probe = encoder.clone();
    (0..encoder.params().len())
        .map(|j| {
            let orig = probe.params()[j];
            probe.params_mut()[j] = orig + step;
            let up = encoded_loss(&probe, inputs, bank, cfg);
            probe.params_mut()[j] = orig - step;
            let down = encoded_loss(&probe, inputs, bank, cfg);
            probe.params_mut()[j] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Analytic parameter gradient of the encoded loss.
pub fn analytic_gradient(
    encoder: &Encoder,
    inputs: &[(Vec<f64>, Label)],
    bank: &MemoryBank,
    cfg: &LossConfig,
) -> Vec<f64> {
    let caches: Vec<_> = inputs
        .iter()
        .map(|(x, _)| encoder.forward_cached(x).unwrap())
        .collect();
    let batch: Vec<_> = caches
        .iter()
        .zip(inputs)
        .map(|(c, (_, l))| (c.output().clone(), *l))
        .collect();
    let out = contrastive_loss(&batch, bank, cfg).unwrap();
    let mut grad = vec![0.0; encoder.params().len()];
    for (c, g) in caches.iter().zip(&out.grads) {
        encoder.backward(c, g, &mut grad);
    }
    grad
}

/// Worst relative error over coordinates with |g| above `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs() > floor || n.abs() > floor)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}

/// Smallest gap between any pair distance and a hinge margin; finite differences
/// across a kink are meaningless, so callers resample when this is tiny.
pub fn margin_clearance(batch: &[(Descriptor, Label)], bank: &MemoryBank, cfg: &LossConfig) -> f64 {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut gap = f64::INFINITY;
    let mut visit = |d: f64, same: bool| {
        let m = if same { cfg.pos_margin } else { cfg.neg_margin };
        gap = gap.min((d - m).abs());
    };
    for i in 0..batch.len() {
        for j in i + 1..batch.len() {
            visit(
                dist(batch[i].0.as_slice(), batch[j].0.as_slice()),
                batch[i].1 == batch[j].1,
            );
        }
        for (v, l) in bank.iter() {
            visit(dist(batch[i].0.as_slice(), v), batch[i].1 == l);
        }
    }
    gap
}

/// Configuration for one gradient-check instance.
pub struct GradCase {
    pub encoder: Encoder,
    pub inputs: Vec<(Vec<f64>, Label)>,
    pub bank: MemoryBank,
    pub cfg: LossConfig,
}

/// Random encoder, batch and bank, resampled until every pair distance clears
/// the margins by 1e-3.
pub fn grad_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    loop {
        let d_in = r.random_range(2..=6);
        let d_out = r.random_range(2..=5);
        let d_hidden = if r.random_bool(0.5) {
            Some(r.random_range(2..=5))
        } else {
            None
        };
        let mut encoder =
            Encoder::new(d_in, d_hidden, d_out, &mut copydet::rng::stream(seed, "fd")).unwrap();
        // nonzero biases so their gradients are exercised too
        for range in encoder.bias_ranges() {
            for j in range {
                encoder.params_mut()[j] = 0.3 * r.sample::<f64, _>(StandardNormal);
            }
        }
        let labels = r.random_range(1..=4u64);
        let n = r.random_range(2..=8);
        let inputs: Vec<(Vec<f64>, Label)> = (0..n)
            .map(|_| (gaussian(&mut r, d_in), r.random_range(0..labels)))
            .collect();
        let mut bank = MemoryBank::new(r.random_range(0..=16));
        for _ in 0..r.random_range(0..=16) {
            bank.push(
                &copydet::normalize(&random_unit(&mut r, d_out)).unwrap(),
                r.random_range(0..labels + 2),
            );
        }
        let pos_margin = if r.random_bool(0.5) {
            0.0
        } else {
            r.random_range(0.0..0.8)
        };
        let neg_margin = pos_margin + r.random_range(0.2..1.6);
        let reduction = match r.random_range(0..3) {
            0 => copydet::trainer::Reduction::AllPairs,
            1 => copydet::trainer::Reduction::PerClass,
            _ => copydet::trainer::Reduction::PerClassNonZero,
        };
        let cfg = LossConfig {
            pos_margin,
            neg_margin,
            reduction,
        };
        let batch: Vec<_> = inputs
            .iter()
            .map(|(x, l)| (encoder.forward(x).unwrap(), *l))
            .collect();
        if margin_clearance(&batch, &bank, &cfg) > 1e-3 {
            return GradCase {
                encoder,
                inputs,
                bank,
                cfg,
            };
        }
    }
}

pub fn unique<T: std::hash::Hash + Eq>(items: impl IntoIterator<Item = T>) -> bool {
    let mut seen = HashSet::new();
    items.into_iter().all(|x| seen.insert(x))
}
