use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use copydet::commands;
use copydet::datagen::{Tier, WorldParams};
use copydet::eval::write_matches;
use copydet::negsub::NegSubConfig;
use copydet::pipeline::{negative_swap, reproduce_trend, RunManifest};
use copydet::trainer::TrainerConfig;
use copydet::{Error, Result};

#[derive(Parser)]
#[command(name = "copydet", version, about = "Copy-detection descriptor toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world: raw embedding sets plus gt.csv
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// JSON file with world parameters; flags below override it
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        n_training: Option<usize>,
        #[arg(long)]
        n_reference: Option<usize>,
        #[arg(long)]
        n_queries: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        copy_rate: Option<f64>,
        #[arg(long)]
        tier: Option<Tier>,
    },
    /// Train an encoder through a stage schedule
    Train {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        stages: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON file with trainer settings
        #[arg(long)]
        trainer: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        public_fraction: f64,
    },
    /// Encode raw vectors with a trained encoder
    Embed {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Negative embedding subtraction
    Postprocess {
        #[arg(long)]
        negatives: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0.35, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact top-k search, TSV output
    Search {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Write to this file instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a ranked match list against ground truth
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
    },
    /// Staged training, evaluation after every stage, then the post-process
    ReproduceTrend {
        #[arg(long)]
        seed: u64,
        /// Manifest JSON; its seed is replaced by --seed
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Post-process with training vs held-out negative pools
    NegativeSwap {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn load_manifest(seed: u64, path: Option<&Path>) -> Result<RunManifest> {
    let mut manifest = match path {
        Some(p) => read_json(p)?,
        None => RunManifest::new(seed),
    };
    manifest.seed = seed;
    Ok(manifest)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            seed,
            out_dir,
            params,
            n_training,
            n_reference,
            n_queries,
            dim,
            copy_rate,
            tier,
        } => {
            let mut p: WorldParams = match params {
                Some(path) => read_json(&path)?,
                None => WorldParams::default(),
            };
            p.n_training = n_training.unwrap_or(p.n_training);
            p.n_reference = n_reference.unwrap_or(p.n_reference);
            p.n_queries = n_queries.unwrap_or(p.n_queries);
            p.d_in = dim.unwrap_or(p.d_in);
            p.copy_rate = copy_rate.unwrap_or(p.copy_rate);
            p.tier = tier.unwrap_or(p.tier);
            let world = commands::gen_data(seed, &p, &out_dir)?;
            eprintln!(
                "wrote {} training, {} reference, {} queries ({} copies) to {}",
                world.training.len(),
                world.reference.len(),
                world.queries.len(),
                world.gt.len(),
                out_dir.display()
            );
        }
        Command::Train {
            world,
            stages,
            seed,
            out,
            trainer,
            public_fraction,
        } => {
            let cfg: TrainerConfig = match trainer {
                Some(path) => read_json(&path)?,
                None => TrainerConfig::default(),
            };
            let metrics = commands::train(&world, &stages, &cfg, seed, public_fraction, &out)?;
            print_json(&metrics)?;
        }
        Command::Embed {
            encoder,
            input,
            out,
        } => {
            commands::embed(&encoder, &input, &out)?;
        }
        Command::Postprocess {
            negatives,
            n,
            k,
            beta,
            input,
            out,
        } => {
            commands::postprocess(&negatives, &input, &out, &NegSubConfig { n, k, beta })?;
        }
        Command::Search {
            queries,
            references,
            k,
            out,
        } => {
            let matches = commands::search(&queries, &references, k)?;
            match out {
                Some(path) => copydet::eval::write_matches_tsv(&matches, path)?,
                None => {
                    let mut w = io::BufWriter::new(io::stdout().lock());
                    write_matches(&matches, &mut w)?;
                    w.flush()?;
                }
            }
        }
        Command::Eval { gt, pred, p } => {
            print_json(&commands::eval(&gt, &pred, p)?)?;
        }
        Command::ReproduceTrend {
            seed,
            manifest,
            out_dir,
        } => {
            let manifest = load_manifest(seed, manifest.as_deref())?;
            let report = reproduce_trend(&manifest, out_dir.as_deref())?;
            eprint!("{}", report.to_table());
            print!("{}", report.to_json()?);
        }
        Command::NegativeSwap {
            seed,
            manifest,
            out_dir,
        } => {
            let manifest = load_manifest(seed, manifest.as_deref())?;
            print!(
                "{}",
                negative_swap(&manifest, out_dir.as_deref())?.to_json()?
            );
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
