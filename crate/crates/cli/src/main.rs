use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pcrb_core::controller::Policy;
use pcrb_core::scenario::{load_scenario, Scenario};
use pcrb_tracker::output::print_table;
use pcrb_tracker::runner::{simulate_into, sweep_into, Batch, SolverChoice};
use pcrb_tracker::selftest::{self, Status};

const JOBS_ENV: &str = "PCRB_TRACKER_JOBS";

#[derive(Parser)]
#[command(name = "pcrb-tracker", version, about = "Energy-aware UAV tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials and write per-trial CSV logs plus summary.json.
    Simulate(RunArgs),
    /// Repeat `simulate` for each value of a scenario parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values, e.g. 1600,1800.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Cross-check every fast computation against its reference oracle.
    Selftest {
        /// Report the SDP checks as skipped.
        #[arg(long)]
        no_sdp: bool,
        /// Corrupt a₁ in the closed-form information terms (mutation test).
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario TOML; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Both)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 20)]
    trials: u64,
    /// Base seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (PCRB_TRACKER_JOBS takes precedence).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value_t = SolverArg::Sdp)]
    solver: SolverArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Proposed,
    Benchmark,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Sdp,
    Roots,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    #[value(name = "E_tot", alias = "e_tot")]
    ETot,
}

fn jobs(flag: Option<usize>) -> Result<usize> {
    if let Ok(raw) = std::env::var(JOBS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .with_context(|| format!("{JOBS_ENV}={raw:?} is not a count"))?;
        anyhow::ensure!(n > 0, "{JOBS_ENV} must be at least 1");
        return Ok(n);
    }
    Ok(flag
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1))
}

fn batch(args: &RunArgs) -> Result<Batch> {
    let mut scenario = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_scenario(&text).with_context(|| format!("loading {}", path.display()))?
        }
        None => Scenario::default(),
    };
    if let Some(seed) = args.seed {
        scenario.init.seed = seed;
    }
    let policies = match args.policy {
        PolicyArg::Proposed => vec![Policy::Proposed],
        PolicyArg::Benchmark => vec![Policy::Benchmark],
        PolicyArg::Both => vec![Policy::Proposed, Policy::Benchmark],
    };
    Ok(Batch {
        scenario,
        policies,
        trials: args.trials,
        solver: match args.solver {
            SolverArg::Sdp => SolverChoice::Sdp,
            SolverArg::Roots => SolverChoice::Roots,
        },
        jobs: jobs(args.jobs)?,
    })
}

fn run(cli: Cli) -> Result<bool> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Simulate(args) => {
            let b = batch(&args)?;
            let doc = simulate_into(&args.out, &b)?;
            print_table(&mut out, "simulate", &doc)?;
            Ok(true)
        }
        Command::Sweep { run, param, values } => {
            let SweepParam::ETot = param;
            let b = batch(&run)?;
            for (v, doc) in sweep_into(&run.out, &b, &values)? {
                print_table(&mut out, &format!("E_tot={v}"), &doc)?;
            }
            Ok(true)
        }
        Command::Selftest { no_sdp, inject_fault } => {
            let checks = selftest::run(selftest::Options { no_sdp, inject_fault });
            for c in &checks {
                writeln!(out, "{:<38} {}", c.name, c.status)?;
            }
            Ok(checks.iter().all(|c| !matches!(c.status, Status::Fail(_))))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
