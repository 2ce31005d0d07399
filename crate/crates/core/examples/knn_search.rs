//! Exact top-k inner-product search over random unit vectors.

use copydet::knn::{topk, topk_batch};
use copydet::rng;
use copydet::{normalize, EmbeddingSet};
use rand_distr::{Distribution, StandardNormal};

fn random_set(prefix: &str, n: usize, dim: usize, seed: u64) -> copydet::Result<EmbeddingSet> {
    let mut r = rng::stream(seed, prefix);
    let mut ds = Vec::with_capacity(n);
    for _ in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
        ds.push(normalize(&v)?);
    }
    EmbeddingSet::from_descriptors(
        dim,
        (0..n).map(|i| format!("{prefix}{i:05}")).collect(),
        &ds,
    )
}

fn main() -> copydet::Result<()> {
    let db = random_set("ref", 20_000, 64, 1)?;
    let queries = random_set("qry", 4, 64, 2)?;

    let start = std::time::Instant::now();
    let lists = topk_batch(&queries, &db, 5)?;
    println!(
        "searched {} queries over {} rows in {:?}",
        queries.len(),
        db.len(),
        start.elapsed()
    );
    for (q, list) in lists.iter().enumerate() {
        let shown: Vec<String> = list
            .iter()
            .map(|n| format!("{}:{:.3}", db.id(n.index), n.score))
            .collect();
        println!("{}  {}", queries.id(q), shown.join("  "));
    }

    // a stored row is its own best match
    let hit = topk(&db.row_f64(123), &db, 1)?;
    println!("row 123 -> {} ({:.6})", db.id(hit[0].index), hit[0].score);
    Ok(())
}
