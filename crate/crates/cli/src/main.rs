use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dan_lab::commands::{
    cmd_analyze, cmd_eval, cmd_train, output_root, resolve_config, run_sweep_file, CliError,
};

/// Desk-scale laboratory for distributional adversarial training.
#[derive(Parser)]
#[command(name = "dan-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment and write checkpoints plus a loss trace.
    Train {
        /// Built-in profile name (gauss8-gan, gauss8-dan-s, gauss8-dan-2s,
        /// bimodal-1d) or path to an experiment config.
        #[arg(long)]
        config: String,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root; defaults to $DAN_LAB_OUT, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a generator checkpoint against its config's target.
    Eval {
        /// Checkpoint file to evaluate.
        checkpoint: PathBuf,
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 10_000)]
        n_samples: usize,
    },
    /// Emit the 1-D gradient-weighting curve as CSV.
    Analyze {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a multi-seed sweep and aggregate the evaluations.
    Sweep {
        /// Path to a sweep spec file.
        #[arg(long)]
        config: PathBuf,
        /// Override the sweep file's parallelism limit.
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let (mut cfg, stem) = resolve_config(&config)?;
            if let Some(seed) = seed {
                cfg.train.seed = seed;
            }
            let root = output_root(out.as_deref());
            let artifacts = cmd_train(&cfg, &stem, &root)?;
            println!("run directory: {}", artifacts.run_dir.display());
            println!("trace: {}", artifacts.trace_path.display());
            println!(
                "snapshots: {} (final at iteration {})",
                artifacts.snapshot_paths.len(),
                artifacts.run.state.iteration()
            );
            Ok(())
        }
        Command::Eval {
            checkpoint,
            config,
            n_samples,
        } => {
            let (cfg, _) = resolve_config(&config)?;
            let (_, row) = cmd_eval(&checkpoint, &cfg, n_samples)?;
            println!("{}", dan_core::evaluation::EvalReport::csv_header());
            println!("{row}");
            Ok(())
        }
        Command::Analyze { config, out } => {
            let (cfg, stem) = resolve_config(&config)?;
            let root = output_root(out.as_deref());
            let (path, study) = cmd_analyze(&cfg, &stem, &root)?;
            let maxima = study.region_maxima(&study.curve()?);
            println!("curve: {}", path.display());
            println!(
                "max |weight| near covered-mode approach: {:.6}",
                maxima.approach_max
            );
            println!(
                "max |weight| within 3 sigma of missing mode: {:.3e}",
                maxima.missing_max
            );
            println!("ratio: {:.3e}", maxima.ratio);
            Ok(())
        }
        Command::Sweep {
            config,
            parallelism,
            out,
        } => {
            let root = output_root(out.as_deref());
            let outcome = run_sweep_file(&config, parallelism, &root)?;
            println!("sweep directory: {}", outcome.sweep_dir.display());
            println!("aggregate: {}", outcome.aggregate_path.display());
            for row in &outcome.rows {
                match &row.report {
                    Some(r) => println!(
                        "seed {:>4}: modes {}, entropy {:.4}, tv {:.4}, hq {:.4}, status {}",
                        row.seed, r.modes_captured, r.entropy, r.tv_to_target, r.hq_fraction,
                        row.status
                    ),
                    None => println!("seed {:>4}: {}", row.seed, row.status),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
