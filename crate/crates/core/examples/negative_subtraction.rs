//! Push a descriptor away from its nearest negatives and watch the similarity
//! to those negatives drop.

use copydet::knn::topk;
use copydet::negsub::{subtract_negatives, NegSubConfig};
use copydet::{normalize, EmbeddingSet};

fn main() -> copydet::Result<()> {
    // two-dimensional hand case
    let negatives = EmbeddingSet::new(2, vec!["neg".into()], vec![0.0, 1.0])?;
    let x = normalize(&[1.0, 0.0])?;
    let y = subtract_negatives(
        &x,
        &negatives,
        &NegSubConfig {
            n: 1,
            k: 1,
            beta: 0.35,
        },
    )?;
    println!("[1, 0] -> [{:.5}, {:.5}]", y.as_slice()[0], y.as_slice()[1]);

    // a target sitting inside a tight group of negatives
    let dim = 8;
    let mut rows = Vec::new();
    for i in 0..40 {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v[1 + i % (dim - 1)] = 0.3 + 0.01 * i as f64;
        rows.push(normalize(&v)?);
    }
    let ids = (0..rows.len()).map(|i| format!("n{i}")).collect();
    let pool = EmbeddingSet::from_descriptors(dim, ids, &rows)?;
    let mut t = vec![0.1; dim];
    t[0] = 1.0;
    let target = normalize(&t)?;

    let cfg = NegSubConfig::default();
    let mean_sim = |d: &[f64]| -> copydet::Result<f64> {
        let nn = topk(d, &pool, cfg.k)?;
        Ok(nn.iter().map(|n| n.score).sum::<f64>() / nn.len() as f64)
    };
    let after = subtract_negatives(&target, &pool, &cfg)?;
    println!(
        "mean similarity to {} nearest negatives: {:.4} before, {:.4} after",
        cfg.k,
        mean_sim(target.as_slice())?,
        mean_sim(after.as_slice())?
    );
    Ok(())
}
