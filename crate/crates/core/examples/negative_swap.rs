//! Compare the post-process with the training pool against a disjoint twin pool.
//!
//! cargo run --release --example negative_swap -- [seeds]

use copydet::pipeline::{negative_swap, RunManifest};

fn main() -> copydet::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed count"))
        .unwrap_or(3);
    println!("seed  baseline  training  holdout   |delta|   gain");
    for seed in 0..seeds {
        let r = negative_swap(&RunManifest::new(seed), None)?;
        println!(
            "{seed:<5} {:.4}    {:.4}    {:.4}    {:.4}    {:.4}",
            r.baseline.micro_ap,
            r.with_training.micro_ap,
            r.with_holdout.micro_ap,
            r.delta_micro_ap.abs(),
            r.gain_micro_ap
        );
    }
    Ok(())
}
