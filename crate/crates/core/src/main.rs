use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scar::cli::{self, Experiment, ExperimentConfig, Method};
use scar::{par, Error, Result};

#[derive(Parser)]
#[command(name = "scar", version, about = "Retain-free machine unlearning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the original model and store its class prototypes.
    Train(Common),
    /// Run the configured unlearning method over the run list.
    Unlearn(Common),
    /// Score unlearned models: accuracies, AUS, membership inference, KS test.
    Eval(Common),
    /// Render the markdown summary and charts from evaluation outputs.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training and unlearning seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured method.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated surrogate sizes, e.g. 500,2000,6000.
    #[arg(long, value_delimiter = ',')]
    sweep_surrogate_sizes: Option<Vec<usize>>,
}

fn open(c: &Common) -> Result<Experiment> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(m) = &c.method {
        cfg.method = Method::parse(m)?;
    }
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    if let Some(sizes) = &c.sweep_surrogate_sizes {
        cfg.sweep_surrogate_sizes = sizes.clone();
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set out_dir".into()))?;
    Experiment::open(cfg, out)
}

fn run(cli: Cli) -> Result<()> {
    let workers = par::init_worker_pool();
    match cli.command {
        Command::Train(c) => {
            let exp = open(&c)?;
            let o = cli::cmd_train(&exp)?;
            println!(
                "original model: train accuracy {:.4}, test accuracy {:.4} (worker threads: {workers})",
                o.train_accuracy, o.test_accuracy
            );
            println!("wrote {}", o.checkpoint.display());
            for p in &o.prototypes {
                println!("wrote {}", p.display());
            }
        }
        Command::Unlearn(c) => {
            let exp = open(&c)?;
            let o = cli::cmd_unlearn(&exp)?;
            println!("{}: {} runs executed, {} already complete", exp.config.method, o.executed.len(), o.skipped.len());
        }
        Command::Eval(c) => {
            let exp = open(&c)?;
            let o = cli::cmd_eval(&exp)?;
            for s in &o.summaries {
                let size = s.surrogate_size.map(|n| format!(" (surrogate {n})")).unwrap_or_default();
                match &s.aggregate {
                    Some(a) => println!(
                        "{}{size}: test {:.4} forget {:.4} AUS {:.3} ± {:.3} over {} runs; KS p {:.3e}",
                        s.method, a.test.mean, a.forget.mean, a.aus.mean, a.aus.std, a.runs, s.ks.p_value
                    ),
                    None => println!("{}{size}: curve {:?}", s.method, s.curve.as_deref().unwrap_or(&[])),
                }
            }
        }
        Command::Report(c) => {
            let exp = open(&c)?;
            let o = cli::cmd_report(&exp)?;
            println!("wrote {}", o.markdown.display());
            for p in &o.charts {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(cli::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
