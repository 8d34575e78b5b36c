//! Command-line surface. The `mcg` binary is a thin wrapper around [`run`].

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::report::{read_csv, write_csv, TrajectorySummary, TrajectoryTable};
use crate::scenario::{parse_scenario, IntegratorOverrides, Scenario, ScenarioError};

#[derive(Debug, Parser)]
#[command(name = "mcg", version, about = "Distributed Nash equilibrium seeking for multi-cluster games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario without running anything.
    Validate {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Lyapunov certificates, gain bounds and certification.
    Gains {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Reference Nash equilibrium from the reduced system.
    SolveNe {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Integrate the closed loop; writes trajectory.csv and report.json.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
        /// Run this many consecutive seeds concurrently, one directory each.
        #[arg(long)]
        sweep: Option<u64>,
    },
    /// Recompute summary metrics from a trajectory CSV.
    Report {
        csv: PathBuf,
        /// Scenario used to recompute the reference equilibrium.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl RunFlags {
    fn overrides(&self) -> IntegratorOverrides {
        IntegratorOverrides {
            t_final: self.t_final,
            dt: self.dt,
            seed: self.seed,
            stop_tol: self.stop_tol,
            record_every: self.record_every,
        }
    }
}

fn load(path: &Path, flags: &RunFlags) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    let mut s = Scenario::from_json_unchecked(&text)?;
    s.apply(&flags.overrides());
    s.validate()?;
    Ok(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.display().to_string(), source }
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).expect("json");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Runs one scenario and writes its artifacts into `dir`.
pub fn simulate_into(scenario: &Scenario, dir: &Path) -> Result<Value, ScenarioError> {
    let (traj, report) = scenario.simulate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("trajectory.csv");
    let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(&TrajectoryTable::from_trajectory(&traj), BufWriter::new(file))?;
    let value = serde_json::to_value(&report).expect("report serializes");
    write_json(dir, "report.json", &value)?;
    Ok(value)
}

/// Executes a parsed command and returns its JSON output.
pub fn run(cli: Cli) -> Result<Value, ScenarioError> {
    match cli.command {
        Command::Validate { scenario, flags } => {
            let s = load(&scenario, &flags)?;
            Ok(json!({ "valid": true, "scenario": s.name, "config_hash": s.config_hash() }))
        }
        Command::Gains { scenario, flags } => {
            let s = load(&scenario, &flags)?;
            let value = serde_json::to_value(s.gains_report()?).expect("report serializes");
            if let Some(dir) = &flags.output_dir {
                write_json(dir, "gains.json", &value)?;
            }
            Ok(value)
        }
        Command::SolveNe { scenario, flags } => {
            let s = load(&scenario, &flags)?;
            let value = serde_json::to_value(s.solve_ne()?).expect("report serializes");
            if let Some(dir) = &flags.output_dir {
                write_json(dir, "ne.json", &value)?;
            }
            Ok(value)
        }
        Command::Simulate { scenario, flags, sweep } => {
            let s = load(&scenario, &flags)?;
            let out = flags.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            match sweep {
                None => simulate_into(&s, &out),
                Some(count) => {
                    let base = s.seed();
                    let results: Vec<Result<Value, ScenarioError>> = std::thread::scope(|scope| {
                        let handles: Vec<_> = (0..count)
                            .map(|k| {
                                let mut sk = s.clone();
                                sk.integrator.seed = base + k;
                                let dir = out.join(format!("seed-{}", base + k));
                                scope.spawn(move || simulate_into(&sk, &dir))
                            })
                            .collect();
                        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
                    });
                    let values = results.into_iter().collect::<Result<Vec<_>, _>>()?;
                    Ok(Value::Array(values))
                }
            }
        }
        Command::Report { csv, scenario } => {
            let file = File::open(&csv).map_err(io_err(&csv))?;
            let table = read_csv(std::io::BufReader::new(file))?;
            let reference = match scenario {
                Some(p) => Some(parse_scenario(&p)?.solve_ne()?.lifted),
                None => None,
            };
            let summary = TrajectorySummary::from_table(&table, reference.as_deref());
            Ok(serde_json::to_value(summary).expect("summary serializes"))
        }
    }
}

/// Machine-readable error payload.
pub fn error_json(err: &ScenarioError) -> Value {
    json!({ "ok": false, "exit_code": err.exit_code(), "errors": err.messages() })
}
