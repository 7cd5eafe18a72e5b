use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use predcomp::experiments::{emit_report, run_check_suite, sweep_tau_max, CheckSuiteConfig, RunRecord, Scenario};
use predcomp::{Predictor, Result};

#[derive(Parser)]
#[command(name = "predcomp", version, about = "Delay-compensated networked control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write the report.
    Run(Common),
    /// Run a scenario once per tau_max value on a shared noise realization.
    Sweep(Common),
    /// Randomized consistency, bound and equivalence suite.
    Check {
        #[command(flatten)]
        common: Common,
        /// Number of random scenarios.
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// How many of them to replay as the auxiliary loop.
        #[arg(long, default_value_t = 20)]
        replays: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); defaults to the built-in circle-tracking MPC scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated tau_max values; `sweep` defaults to 0..=6.
    #[arg(long, value_delimiter = ',')]
    tau_max: Vec<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_parser = ["exact", "euler", "rk4"])]
    predictor: Option<String>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::circle_mpc(2),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(steps) = self.steps {
            s.steps = steps;
        }
        if let Some(p) = &self.predictor {
            s.plant.predictor = p.parse::<Predictor>()?;
        }
        Ok(s)
    }
}

fn all_passed(records: &[RunRecord]) -> bool {
    records.iter().all(RunRecord::passed)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(common) => {
            let mut scenario = common.scenario()?;
            if let Some(&tau) = common.tau_max.first() {
                scenario = scenario.with_tau_max(tau);
            }
            let record = predcomp::run_scenario(&scenario)?;
            let paths = emit_report(&common.out, std::slice::from_ref(&record), &[])?;
            print!("{}", std::fs::read_to_string(&paths.summary).unwrap_or_default());
            Ok(record.passed())
        }
        Command::Sweep(common) => {
            let scenario = common.scenario()?;
            let taus = if common.tau_max.is_empty() {
                (0..=6).collect()
            } else {
                common.tau_max.clone()
            };
            let (records, rows) = sweep_tau_max(&scenario, &taus)?;
            let paths = emit_report(&common.out, &records, &rows)?;
            print!("{}", std::fs::read_to_string(&paths.summary).unwrap_or_default());
            Ok(all_passed(&records))
        }
        Command::Check { common, runs, replays } => {
            let config = CheckSuiteConfig {
                runs,
                replays,
                seed: common.seed.unwrap_or(CheckSuiteConfig::default().seed),
                steps: common.steps.unwrap_or(CheckSuiteConfig::default().steps),
            };
            let summary = run_check_suite(&config)?;
            std::fs::create_dir_all(&common.out).map_err(|e| predcomp::Error::Io {
                path: common.out.clone(),
                source: e,
            })?;
            let path = common.out.join("check.json");
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            std::fs::write(&path, json).map_err(|e| predcomp::Error::Io { path, source: e })?;
            println!(
                "runs={} not_ok={} consistency_violations={} bound_failures={} replayed={} equivalence_failures={} elapsed={:.2}s",
                summary.outcomes.len(),
                summary.not_ok,
                summary.consistency_violations,
                summary.bound_failures,
                summary.replayed,
                summary.equivalence_failures,
                summary.elapsed.as_secs_f64()
            );
            Ok(summary.passed())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
