use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spme_core::experiments::{emit_report, parse_config, run_experiment, run_solve_with_trajectory, ExperimentKind};
use spme_core::Error;

#[derive(Parser)]
#[command(name = "spme", version, about = "Porous-medium equations driven by rough signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single trajectory; writes states and a summary report.
    Solve(Common),
    /// Weighted L1 distance of two runs on one path.
    Contraction(Common),
    /// Cauchy differences along an (epsilon, eta) sequence.
    Convergence(Common),
    /// Restart mismatch with the shifted path.
    Cocycle(Common),
    /// Minimum of the solution over a run.
    Positivity(Common),
    /// Kinetic defect measures, moments and weak-form residuals.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERDICT: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    if e.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_CONFIG
    }
}

fn run(kind: ExperimentKind, args: &Common) -> Result<bool, Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| Error::Io {
        path: args.config.clone(),
        source,
    })?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let cfg = parse_config(&text)?.resolve_paths(base);
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(Error::Config {
                line: None,
                message: format!("config is for `{k}` but `{kind}` was requested"),
            });
        }
    }
    let out = args.out.clone().or_else(|| cfg.output.clone()).ok_or_else(|| Error::Config {
        line: None,
        message: "no output directory; pass --out or set `output`".into(),
    })?;
    let report = if kind == ExperimentKind::Solve {
        let (report, traj) = run_solve_with_trajectory(&cfg)?;
        traj.export(&out.join("states"), cfg.record_every)?;
        report
    } else {
        run_experiment(&cfg, kind, args.workers)?
    };
    emit_report(&report, &out)?;
    for v in &report.verdicts {
        let mark = if v.passed { "PASS" } else { "FAIL" };
        println!("{mark} {}: {:e} (threshold {:e})", v.name, v.measured, v.threshold);
    }
    println!("report written to {}", out.join("report.json").display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Solve(a) => (ExperimentKind::Solve, a),
        Command::Contraction(a) => (ExperimentKind::Contraction, a),
        Command::Convergence(a) => (ExperimentKind::Convergence, a),
        Command::Cocycle(a) => (ExperimentKind::Cocycle, a),
        Command::Positivity(a) => (ExperimentKind::Positivity, a),
        Command::Diagnose(a) => (ExperimentKind::Diagnose, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERDICT),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
