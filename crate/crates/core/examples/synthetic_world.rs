//! Generate a small seeded world and look at how each augmentation tier moves a vector.

use copydet::datagen::{augment_vector, gen_world, Tier, WorldParams};
use copydet::rng;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

fn main() -> copydet::Result<()> {
    let params = WorldParams {
        n_training: 512,
        n_reference: 512,
        n_queries: 128,
        n_holdout: 512,
        ..WorldParams::default()
    };
    let world = gen_world(7, &params)?;
    println!(
        "training {} / reference {} / queries {} ({} copies) / holdout {}, dim {}",
        world.training.len(),
        world.reference.len(),
        world.queries.len(),
        world.gt.len(),
        world.holdout.len(),
        world.training.dim()
    );
    let (q, r) = world.gt[0];
    println!(
        "{} copies {}: cosine {:.3}",
        world.queries.id(q),
        world.reference.id(r),
        cosine(&world.queries.row_f64(q), &world.reference.row_f64(r))
    );

    let source = world.reference.row_f64(0);
    for tier in [Tier::None, Tier::Weak, Tier::Intermediate, Tier::Strong] {
        let mut stream = rng::stream(1, "demo");
        let mean: f64 = (0..200)
            .map(|_| cosine(&source, &augment_vector(&source, tier, &mut stream)))
            .sum::<f64>()
            / 200.0;
        println!("{tier:<12} mean cosine to source {mean:.3}");
    }

    let dir = std::env::temp_dir().join("copydet-world-example");
    world.write(&dir)?;
    println!("written to {}", dir.display());
    Ok(())
}
