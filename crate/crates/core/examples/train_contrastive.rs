//! Train an encoder stage by stage on a synthetic world and print the loss curve.

use copydet::datagen::{gen_world, WorldParams};
use copydet::eval::{build_candidates, evaluate, GroundTruth};
use copydet::rng;
use copydet::trainer::{
    default_schedule, run_stage, Encoder, MemoryBank, MomentumState, TrainerConfig, TrainingData,
};

fn main() -> copydet::Result<()> {
    let params = WorldParams {
        n_training: 2048,
        n_reference: 2048,
        n_queries: 1024,
        n_holdout: 16,
        ..WorldParams::default()
    };
    let world = gen_world(3, &params)?;
    let (public, private) = world.split_queries(0.5);
    let data = TrainingData::from_world(&world, &public);

    let gt = GroundTruth::new(world.gt.iter().filter(|(q, _)| *q >= public.len()).map(
        |&(q, r)| {
            (
                world.queries.id(q).to_owned(),
                world.reference.id(r).to_owned(),
            )
        },
    ));
    let queries = world.queries.select(&private);
    let score = |enc: &Encoder| -> copydet::Result<f64> {
        let ranked = build_candidates(
            &enc.encode_set(&queries)?,
            &enc.encode_set(&world.reference)?,
            1,
        )?;
        Ok(evaluate(&ranked, &gt, 0.9)?.micro_ap)
    };

    let cfg = TrainerConfig::default();
    let mut r = rng::stream(3, "train");
    let mut encoder = Encoder::new(params.d_in, cfg.d_hidden, cfg.d_out, &mut r)?;
    let mut bank = MemoryBank::new(cfg.bank_capacity);
    let mut optimizer = MomentumState::new(encoder.params().len());
    println!("untrained µAP {:.4}", score(&encoder)?);
    for stage in default_schedule() {
        let m = run_stage(
            &mut encoder,
            &data,
            &stage,
            &cfg,
            &mut bank,
            &mut optimizer,
            &mut r,
        )?;
        let losses: Vec<String> = m.epoch_losses.iter().map(|l| format!("{l:.4}")).collect();
        println!(
            "stage {} ({}) losses [{}]  µAP {:.4}  bank {}",
            stage.stage,
            stage.tier,
            losses.join(", "),
            score(&encoder)?,
            bank.len()
        );
    }
    Ok(())
}
