use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use shadowlp_core::harness::{self, ExperimentConfig};
use shadowlp_core::{solve, LpInstance, RngStream, SolveOutcome, SolverOptions};

const OUT_ENV: &str = "SHADOWLP_OUT";

#[derive(Parser)]
#[command(name = "shadowlp", version, about = "Shadow vertex simplex solver and smoothed-analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve max c^T x s.t. Ax <= b from an LP text file.
    Solve {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_restarts: Option<usize>,
    },
    /// Shadow-size sweep over a sigma grid.
    Experiment(RunArgs),
    /// Dense-set diameter construction.
    Lowerbound(RunArgs),
    /// Monte Carlo check of segment-versus-cone hitting probabilities.
    MontecarloCone(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; defaults to $SHADOWLP_OUT, then ./results.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), String> {
        let text = std::fs::read_to_string(&self.config).map_err(|e| format!("{}: {e}", self.config.display()))?;
        let cfg = ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", self.config.display()))?;
        let out = self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"));
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("shadowlp: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Solve { file, seed, max_restarts } => {
            let text = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let inst = LpInstance::parse(&text).map_err(|e| format!("{}: {e}", file.display()))?;
            let mut opts = SolverOptions::default();
            if let Some(r) = max_restarts {
                opts.max_restarts = r;
            }
            let mut rng = RngStream::new(seed, 0);
            let report = solve(&mut rng, &inst, &opts).map_err(|e| e.to_string())?;
            let pivots = json!({
                "phase1": report.pivots.phase1,
                "phase2": report.pivots.phase2,
                "phase3": report.pivots.phase3,
                "total": report.pivots.total(),
            });
            let (body, code) = match &report.outcome {
                SolveOutcome::Optimal { basis, x, value } => (
                    json!({"status": "optimal", "value": value, "x": x, "basis": basis}),
                    0,
                ),
                SolveOutcome::Infeasible { certificate } => {
                    (json!({"status": "infeasible", "certificate": certificate}), 2)
                }
                SolveOutcome::Unbounded { ray } => (json!({"status": "unbounded", "ray": ray}), 3),
            };
            let mut body = body;
            body["pivots"] = pivots;
            body["attempts"] = json!(report.attempts);
            body["seed"] = json!(seed);
            println!("{}", serde_json::to_string_pretty(&body).map_err(|e| e.to_string())?);
            Ok(ExitCode::from(code))
        }
        Command::Experiment(args) => {
            let (cfg, out) = args.load()?;
            let rows = harness::run_shadow_experiment(&cfg, args.jobs).map_err(|e| e.to_string())?;
            let paths = harness::write_shadow_outputs(&cfg, &rows, &out).map_err(|e| e.to_string())?;
            let failures = rows.iter().filter(|r| !r.ok()).count();
            report_paths(&paths, rows.len(), failures);
            Ok(ExitCode::SUCCESS)
        }
        Command::Lowerbound(args) => {
            let (cfg, out) = args.load()?;
            let rows = harness::run_lowerbound_experiment(&cfg, args.jobs).map_err(|e| e.to_string())?;
            let paths = harness::write_lowerbound_outputs(&cfg, &rows, &out).map_err(|e| e.to_string())?;
            let failures = rows.iter().filter(|r| r.result.is_err()).count();
            report_paths(&paths, rows.len(), failures);
            Ok(ExitCode::SUCCESS)
        }
        Command::MontecarloCone(args) => {
            let (cfg, out) = args.load()?;
            let rows = harness::run_cone_experiment(&cfg, args.jobs).map_err(|e| e.to_string())?;
            let paths = harness::write_cone_outputs(&cfg, &rows, &out).map_err(|e| e.to_string())?;
            report_paths(&paths, rows.len(), 0);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report_paths(paths: &[PathBuf], rows: usize, failures: usize) {
    println!("{rows} rows, {failures} failed trials");
    for p in paths {
        println!("wrote {}", p.display());
    }
}
