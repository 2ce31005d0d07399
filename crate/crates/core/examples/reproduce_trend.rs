//! Staged training with evaluation after every stage, then the post-process.
//!
//! cargo run --release --example reproduce_trend -- [seed] [out-dir]

use copydet::pipeline::{reproduce_trend, RunManifest};

fn main() -> copydet::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(0);
    let out = args.next().map(std::path::PathBuf::from);

    let manifest = RunManifest::new(seed);
    let report = reproduce_trend(&manifest, out.as_deref())?;
    println!("manifest {}", &report.manifest_hash[..16]);
    println!("untrained µAP {:.4}", report.untrained.micro_ap);
    print!("{}", report.to_table());
    Ok(())
}
