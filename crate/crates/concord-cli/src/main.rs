//! Command-line driver for the debate -> build -> train -> eval pipeline.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 stage failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use concord::pipeline::{PipelineError, Run, RunConfig};

#[derive(Parser)]
#[command(
    name = "concord",
    version,
    about = "Multi-round debate orchestration, consensus preference datasets, and majority-vote post-training for a toy policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run debates over the training prompts and write transcripts (JSONL).
    Debate,
    /// Partition transcripts by consensus and build the method's dataset.
    Build,
    /// Train the policy on the built dataset; writes checkpoint and curve.
    Train,
    /// Evaluate the latest checkpoint on the held-out prompts.
    Eval,
    /// Full loop: base eval, then debate/build/train/eval for L iterations.
    Iterate,
    /// Cross-eval reports: decomposition, correlations, pair selection.
    Report,
}

enum CliError {
    Usage(String),
    Stage(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Stage(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let mut run = Run::open(cfg)?;
    match cli.command {
        Command::Debate => {
            let path = run.cmd_debate(1)?;
            println!("transcripts written to {}", path.display());
        }
        Command::Build => {
            let files = run.cmd_build(1)?;
            for f in files {
                println!("dataset written to {}", f.display());
            }
        }
        Command::Train => {
            let ck = run.cmd_train(1)?;
            println!("checkpoint written to {}", ck.display());
        }
        Command::Eval => {
            let iteration = run.latest_iteration();
            let summary = run.cmd_eval(iteration)?;
            println!(
                "eval {}: mean s_{} = {:.4}, parseable rate = {:.4}, unanimous final = {:.4}",
                summary.label,
                summary.t_max,
                summary.mean_consistency,
                summary.parseable_rate,
                summary.unanimous_final
            );
        }
        Command::Iterate => {
            run.cmd_iterate()?;
            for rec in &run.manifest().iterations {
                println!(
                    "iteration {}: mean consistency {:.4}, unanimous {:.4}",
                    rec.index,
                    rec.mean_consistency.unwrap_or(f64::NAN),
                    rec.unanimous_fraction.unwrap_or(f64::NAN)
                );
            }
        }
        Command::Report => {
            let dir = run.cmd_report()?;
            println!("reports written to {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message (also covers --help/--version).
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Stage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
