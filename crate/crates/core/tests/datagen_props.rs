mod common;

use std::collections::HashSet;

use copydet::datagen::{augment_vector, gen_world, SyntheticWorld, Tier, WorldParams};
use copydet::rng;
use copydet::EmbeddingSet;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn unit_rows(set: &EmbeddingSet) -> Vec<Vec<f64>> {
    (0..set.len())
        .map(|i| common::unit_by_hand(&set.row_f64(i)))
        .collect()
}

/// Mean cosine over all unordered pairs, via the norm of the sum.
fn mean_pair_cosine(rows: &[&Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mut sum = vec![0.0; dim];
    for r in rows {
        for (s, x) in sum.iter_mut().zip(r.iter()) {
            *s += x;
        }
    }
    let sq: f64 = sum.iter().map(|s| s * s).sum();
    (sq - n) / (n * (n - 1.0))
}

#[test]
fn training_and_reference_are_twins() {
    let params = WorldParams {
        n_queries: 64,
        n_holdout: 64,
        ..WorldParams::default()
    };
    for seed in 0..6 {
        let world = gen_world(seed, &params).unwrap();
        let train = unit_rows(&world.training);
        let refs = unit_rows(&world.reference);
        let stat = |a: &[&Vec<f64>], b: &[&Vec<f64>]| mean_pair_cosine(a) - mean_pair_cosine(b);
        let observed = stat(
            &train.iter().collect::<Vec<_>>(),
            &refs.iter().collect::<Vec<_>>(),
        );

        // null band: shuffle the pooled vectors into two sets of the same sizes
        let mut pooled: Vec<&Vec<f64>> = train.iter().chain(&refs).collect();
        let mut r = rng::stream(seed, "perm");
        let mut null: Vec<f64> = (0..200)
            .map(|_| {
                pooled.shuffle(&mut r);
                let (a, b) = pooled.split_at(train.len());
                stat(a, b).abs()
            })
            .collect();
        null.sort_by(f64::total_cmp);
        let band = null[(null.len() * 99) / 100];
        assert!(
            observed.abs() <= band,
            "seed {seed}: |{observed}| above band {band}"
        );
    }
}

fn mean_cosine(tier: Tier, samples: usize) -> f64 {
    let mut r = common::rng(17);
    let mut aug = rng::stream(17, "aug");
    let mut total = 0.0;
    for _ in 0..samples {
        let v = common::gaussian(&mut r, 64);
        let out = augment_vector(&v, tier, &mut aug);
        let dot: f64 = v.iter().zip(&out).map(|(a, b)| a * b).sum();
        total += dot / (common::norm(&v) * common::norm(&out));
    }
    total / samples as f64
}

#[test]
fn cosine_falls_with_tier() {
    let c: Vec<f64> = [Tier::None, Tier::Weak, Tier::Intermediate, Tier::Strong]
        .iter()
        .map(|&t| mean_cosine(t, 1000))
        .collect();
    assert!((c[0] - 1.0).abs() < 1e-12);
    assert!(c[0] > c[1] && c[1] > c[2] && c[2] > c[3], "{c:?}");
    assert!(c[3] < 0.8, "strong tier too mild: {}", c[3]);
}

#[test]
fn tier_magnitudes_increase() {
    let p: Vec<_> = [Tier::Weak, Tier::Intermediate, Tier::Strong]
        .iter()
        .map(|t| t.params())
        .collect();
    for w in p.windows(2) {
        assert!(w[0].noise_sigma < w[1].noise_sigma);
        assert!(w[0].max_angle < w[1].max_angle);
        assert!(w[0].mix.1 < w[1].mix.1);
        assert!(w[0].dropout < w[1].dropout);
    }
}

fn small(copy_rate: f64, tier: Tier) -> WorldParams {
    WorldParams {
        n_training: 128,
        n_reference: 128,
        n_queries: 64,
        n_holdout: 32,
        d_in: 16,
        copy_rate,
        tier,
        ..WorldParams::default()
    }
}

fn raw_rows(set: &EmbeddingSet) -> HashSet<Vec<u32>> {
    set.rows()
        .map(|r| r.iter().map(|x| x.to_bits()).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sets_are_disjoint(seed in any::<u64>()) {
        let w = gen_world(seed, &small(0.5, Tier::Strong)).unwrap();
        let (t, r, h) = (raw_rows(&w.training), raw_rows(&w.reference), raw_rows(&w.holdout));
        prop_assert!(t.is_disjoint(&r));
        prop_assert!(h.is_disjoint(&r) && h.is_disjoint(&t));
        let ids = w.training.ids().iter().chain(w.reference.ids()).chain(w.queries.ids()).chain(w.holdout.ids());
        prop_assert!(common::unique(ids));
    }

    #[test]
    fn gt_is_well_formed(seed in any::<u64>(), rate in 0.0f64..=1.0) {
        let w = gen_world(seed, &small(rate, Tier::Intermediate)).unwrap();
        prop_assert_eq!(w.gt.len(), (rate * 64.0).round() as usize);
        prop_assert!(common::unique(w.gt.iter().map(|g| g.0)));
        prop_assert!(common::unique(w.gt.iter().map(|g| g.1)));
        let refs = raw_rows(&w.reference);
        let copies: HashSet<usize> = w.gt.iter().map(|g| g.0).collect();
        for q in 0..w.queries.len() {
            if !copies.contains(&q) {
                let row: Vec<u32> = w.queries.row(q).iter().map(|x| x.to_bits()).collect();
                prop_assert!(!refs.contains(&row));
            }
        }
    }

    #[test]
    fn same_seed_same_world(seed in any::<u64>()) {
        let a = gen_world(seed, &small(0.25, Tier::Strong)).unwrap();
        let b = gen_world(seed, &small(0.25, Tier::Strong)).unwrap();
        prop_assert_eq!(a.training, b.training);
        prop_assert_eq!(a.queries, b.queries);
        prop_assert_eq!(a.gt, b.gt);
    }
}

#[test]
fn no_copies_without_copy_rate() {
    assert!(gen_world(1, &small(0.0, Tier::Strong))
        .unwrap()
        .gt
        .is_empty());
}

#[test]
fn untransformed_copies_equal_sources() {
    let w = gen_world(2, &small(1.0, Tier::None)).unwrap();
    assert_eq!(w.gt.len(), 64);
    for &(q, r) in &w.gt {
        assert_eq!(w.queries.row(q), w.reference.row(r));
    }
}

#[test]
fn world_directory_round_trip() {
    let w = gen_world(3, &small(0.5, Tier::Weak)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    w.write(dir.path()).unwrap();
    let back = SyntheticWorld::read(dir.path()).unwrap();
    assert_eq!(back.training, w.training);
    assert_eq!(back.reference, w.reference);
    assert_eq!(back.queries, w.queries);
    assert_eq!(back.holdout, w.holdout);
    assert_eq!(back.gt, w.gt);
    assert_eq!(back.params, w.params);
}
