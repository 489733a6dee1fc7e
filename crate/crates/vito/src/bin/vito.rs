//! Command-line front end: dataset generation, training, evaluation,
//! prediction, and report aggregation.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use vito::cli::{self, RunConfig};

#[derive(Parser)]
#[command(name = "vito", version, about = "PDE inverse-problem operator learning")]
struct Cli {
    /// Worker thread count (falls back to VITO_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// key=value run configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Manufacture a coarse-observation / fine-target dataset.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Problem: wave | ns | darcy.
        #[arg(long)]
        problem: Option<String>,
        /// Fine-grid side length.
        #[arg(long)]
        fine: Option<usize>,
        /// Super-resolution factor s.
        #[arg(long)]
        sr: Option<usize>,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Generation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Solver final time override (wave, ns).
        #[arg(long)]
        t_final: Option<f64>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the operator network on a dataset.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Dataset directory from `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Noise level gamma applied to the inputs before training.
        #[arg(long)]
        noise: Option<f64>,
        /// Variable-grid augmentation ratio bound r (1 disables).
        #[arg(long)]
        augment_r: Option<usize>,
        /// Epoch budget.
        #[arg(long)]
        epochs: Option<usize>,
        /// Minibatch size.
        #[arg(long)]
        batch: Option<usize>,
        /// Initial learning rate.
        #[arg(long)]
        lr0: Option<f64>,
        /// Shuffling/augmentation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Weight-initialization seed.
        #[arg(long)]
        model_seed: Option<u64>,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one dataset split and write a report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Split: train | val | test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 25)]
        batch: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct individual samples to image + tensor files.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Sample indices (repeatable).
        #[arg(long = "index", required = true)]
        indices: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize several evaluation runs as one table.
    Report {
        /// Evaluation output directories (repeatable).
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Optional file for the rendered table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> vito::Result<()> {
    cli::setup_threads(cli.threads);
    match cli.command {
        Command::Generate {
            config,
            problem,
            fine,
            sr,
            n,
            seed,
            t_final,
            out,
        } => {
            let mut cfg = RunConfig::load(config.config.as_deref())?;
            if let Some(p) = problem {
                cfg.problem = p;
            }
            if let Some(v) = fine {
                cfg.fine_n = v;
            }
            if let Some(v) = sr {
                cfg.sr_factor = v;
            }
            if let Some(v) = n {
                cfg.n_samples = v;
            }
            if let Some(v) = seed {
                cfg.data_seed = v;
            }
            if t_final.is_some() {
                cfg.t_final = t_final;
            }
            cli::cmd_generate(&cfg, &out)
        }
        Command::Train {
            config,
            data,
            noise,
            augment_r,
            epochs,
            batch,
            lr0,
            seed,
            model_seed,
            out,
        } => {
            let mut cfg = RunConfig::load(config.config.as_deref())?;
            if let Some(v) = noise {
                cfg.noise_gamma = v;
            }
            if let Some(v) = augment_r {
                cfg.r_max = v;
            }
            if let Some(v) = epochs {
                cfg.max_epochs = v;
            }
            if let Some(v) = batch {
                cfg.batch_size = v;
            }
            if let Some(v) = lr0 {
                cfg.lr0 = v;
            }
            if let Some(v) = seed {
                cfg.train_seed = v;
            }
            if let Some(v) = model_seed {
                cfg.model_seed = v;
            }
            cli::cmd_train(&cfg, &data, &out)
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            batch,
            out,
        } => cli::cmd_eval(&checkpoint, &data, &split, batch, &out),
        Command::Predict {
            checkpoint,
            data,
            indices,
            out,
        } => cli::cmd_predict(&checkpoint, &data, &indices, &out),
        Command::Report { runs, out } => cli::cmd_report(&runs, out.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: category={} {}", e.category(), e);
        std::process::exit(1);
    }
}
