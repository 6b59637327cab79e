use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sylgraph_harness::config::{ExperimentSpec, Kind, SpecError};
use sylgraph_harness::experiment::{self, describe_warnings, HarnessError};

#[derive(Parser)]
#[command(
    name = "sylgraph",
    version,
    about = "Sparse tensor graphical model experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write true factors and synthetic datasets as SYGT files.
    Gen(Common),
    /// Fit an external SYGT dataset (kind = fit_external).
    Fit(Common),
    /// Penalty sweep with support-recovery metrics (kind = lambda_sweep).
    Sweep(Common),
    /// Generator-mismatch study (kind = mismatch).
    Mismatch(Common),
    /// Per-sweep statistical and optimization errors (kind = convergence).
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment specification file.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; overrides the spec's `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this single seed instead of the spec's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn require(spec: &ExperimentSpec, kind: Kind) -> Result<(), SpecError> {
    if spec.kind == kind {
        Ok(())
    } else {
        Err(SpecError {
            line: None,
            message: format!(
                "this subcommand needs kind = {}, the spec has {}",
                kind.name(),
                spec.kind.name()
            ),
        })
    }
}

fn run(command: Command) -> Result<(), HarnessError> {
    let (common, kind) = match &command {
        Command::Gen(c) => (c, None),
        Command::Fit(c) => (c, Some(Kind::FitExternal)),
        Command::Sweep(c) => (c, Some(Kind::LambdaSweep)),
        Command::Mismatch(c) => (c, Some(Kind::Mismatch)),
        Command::Convergence(c) => (c, Some(Kind::Convergence)),
    };
    let mut spec = ExperimentSpec::load(&common.spec)?;
    match kind {
        Some(k) => require(&spec, k)?,
        None if spec.modes.is_empty() => {
            return Err(SpecError {
                line: None,
                message: "gen needs a `modes` entry".into(),
            }
            .into())
        }
        None => {}
    }
    if let Some(seed) = common.seed {
        spec.seeds = vec![seed];
    }
    let out = common.out.clone().unwrap_or_else(|| spec.output.clone());
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SpecError {
                line: None,
                message: format!("thread pool: {e}"),
            })?;
    }

    let hash = spec.hash();
    eprintln!("spec {} ({})", &hash[..12], spec.kind.name());
    let records = match command {
        Command::Gen(_) => {
            for path in experiment::generate(&spec, &out)? {
                eprintln!("wrote {}", path.display());
            }
            return Ok(());
        }
        Command::Fit(_) => {
            let fit = experiment::fit_external(&spec, &out)?;
            if !fit.constant.is_empty() {
                eprintln!("constant variables (centred only): {:?}", fit.constant);
            }
            for w in describe_warnings(&fit.report.warnings) {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} sweeps, converged: {}, edges per mode: {:?}",
                fit.report.sweeps,
                fit.report.converged,
                fit.supports
                    .iter()
                    .map(|s| s.edge_count())
                    .collect::<Vec<_>>()
            );
            return Ok(());
        }
        Command::Sweep(_) => experiment::run_lambda_sweep(&spec, &out)?,
        Command::Mismatch(_) => experiment::run_mismatch(&spec, &out)?,
        Command::Convergence(_) => experiment::run_convergence(&spec, &out)?
            .into_iter()
            .map(|r| r.record)
            .collect(),
    };
    for r in &records {
        let mcc: Vec<String> = r.modes.iter().map(|m| format!("{:.3}", m.mcc)).collect();
        eprintln!(
            "seed {} lambda {:e}: {} sweeps{}, mcc [{}], {:.2?}",
            r.seed,
            r.lambda,
            r.sweeps,
            if r.converged { "" } else { " (not converged)" },
            mcc.join(", "),
            r.wall_time
        );
    }
    eprintln!("results in {}", out.display());
    Ok(())
}
