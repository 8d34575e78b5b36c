//! Scenario files and the pipelines the command line drives.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gains::{
    certify, gain_bounds, BoundInputs, CertificateSummary, CertificationReport, FeedbackGains, GainBounds,
    GainsError, LyapunovCertificates,
};
use crate::game::{GameSpec, MonotonicityEstimate};
use crate::graph::{spectral_norm, TopologySpec};
use crate::oracle::{solve_ne, solve_ne_multistart, NeMethod, NeSolution, OracleError, SolveOptions};
use crate::report::{CsvError, TrajectorySummary, TrajectoryTable};
use crate::sim::{simulate_from, stability_cap, IntegratorConfig, SimError, Trajectory};

/// The bundled three-cluster example.
pub const PAPER_EXAMPLE_JSON: &str = include_str!("../scenarios/paper-example.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gains(#[from] GainsError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

impl ScenarioError {
    /// Process exit code for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Schema { .. } | ScenarioError::Validation(_) => 2,
            ScenarioError::Oracle(OracleError::NoConvergence { .. }) => 3,
            ScenarioError::Sim(SimError::NonFiniteState { .. }) => 3,
            _ => 1,
        }
    }

    /// One entry per problem, for machine-readable output.
    pub fn messages(&self) -> Vec<String> {
        match self {
            ScenarioError::Validation(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

/// How the monotonicity and Lipschitz constants are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Per-coordinate box for sampling when either constant is not declared.
    #[serde(default = "default_sampling_box")]
    pub sampling_box: [f64; 2],
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_sampling_box() -> [f64; 2] {
    [-10.0, 10.0]
}
fn default_samples() -> usize {
    2000
}

impl Default for AssumptionSpec {
    fn default() -> Self {
        Self { omega: None, theta: None, sampling_box: default_sampling_box(), samples: default_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub game: GameSpec,
    pub topology: TopologySpec,
    pub gains: FeedbackGains,
    #[serde(default)]
    pub assumption: AssumptionSpec,
    /// Per-coordinate box on which cost-function domains are checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_box: Option<[f64; 2]>,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub omega: f64,
    pub theta: f64,
    /// `declared`, `sampled` or `mixed`.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled: Option<MonotonicityEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainsReport {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub constants: AssumptionConstants,
    pub certificates: CertificateSummary,
    pub inputs: BoundInputs,
    pub bounds: GainBounds,
    pub certification: CertificationReport,
    pub estimator_lambda_min: f64,
    pub estimator_lambda_max: f64,
    pub cluster_laplacian_norm: f64,
    pub stability_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub solution: NeSolution,
    /// Cross-check by the other method.
    pub fixed_point: NeSolution,
    /// Largest entry-wise gap between the two methods.
    pub method_gap: f64,
    pub restart_spread: f64,
    pub restarts: usize,
    /// Lifted player-level equilibrium.
    pub lifted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub t: f64,
    pub x: Vec<f64>,
    pub derivs: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub oracle_s: f64,
    pub simulate_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub certification: CertificationReport,
    pub oracle: NeSolution,
    pub summary: TrajectorySummary,
    pub final_state: FinalState,
    pub stopped_early: bool,
    pub timings: Timings,
}

/// Command-line overrides of the integrator block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegratorOverrides {
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub stop_tol: Option<f64>,
    pub record_every: Option<usize>,
}

impl Scenario {
    pub fn paper_example() -> Self {
        Self::from_json(PAPER_EXAMPLE_JSON).expect("bundled scenario is valid")
    }

    /// Parses without validating.
    pub fn from_json_unchecked(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s = Self::from_json_unchecked(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn apply(&mut self, o: &IntegratorOverrides) {
        let cfg = &mut self.integrator;
        if let Some(v) = o.t_final {
            cfg.t_final = v;
        }
        if let Some(v) = o.dt {
            cfg.dt = v;
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.stop_tol {
            cfg.stop_tol = Some(v);
        }
        if let Some(v) = o.record_every {
            cfg.record_every = v;
        }
    }

    pub fn seed(&self) -> u64 {
        self.integrator.seed
    }

    /// SHA-256 of the compact JSON form.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("scenario serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every problem found, in one pass.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let game_ok = match self.game.validate() {
            Ok(()) => true,
            Err(e) => {
                errs.push(e.to_string());
                false
            }
        };
        if game_ok {
            if let Some([lo, hi]) = self.operating_box {
                if !(hi > lo) {
                    errs.push(format!("operating box [{lo}, {hi}] is empty"));
                } else if let Err(e) = self.game.validate_operating_box(lo, hi) {
                    errs.push(e.to_string());
                }
            }
            let topo_errs = self.topology.validation_errors(&self.game.cluster_sizes());
            let topo_ok = topo_errs.is_empty();
            errs.extend(topo_errs);
            if topo_ok {
                if let Err(e) = self.topology.estimator_spectrum() {
                    errs.push(e.to_string());
                }
            }
            if let Err(e) = self.gains.validate(self.game.order_n) {
                errs.push(e.to_string());
            }
            let dim = self.game.stacked_dim();
            if let Some(x0) = &self.integrator.initial_x {
                if x0.len() != dim {
                    errs.push(format!("initial_x has length {}, expected {dim}", x0.len()));
                }
            }
            if let Some(y0) = &self.integrator.initial_y {
                if y0.len() != dim {
                    errs.push(format!("initial_y has length {}, expected {dim}", y0.len()));
                }
            }
            if errs.is_empty() {
                if let Ok(spec) = self.topology.estimator_spectrum() {
                    let a = crate::gains::companion_matrix(&self.gains.k);
                    let cap = stability_cap(&self.gains, spec.lambda_max, spectral_norm(&a));
                    if self.integrator.dt > cap {
                        errs.push(format!("dt = {:e} exceeds the stability cap {cap:e}", self.integrator.dt));
                    }
                }
            }
        }
        errs.extend(self.integrator.validation_errors());
        for (name, v) in [("omega", self.assumption.omega), ("theta", self.assumption.theta)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    errs.push(format!("declared {name} must be positive, got {v}"));
                }
            }
        }
        let [lo, hi] = self.assumption.sampling_box;
        if !(hi > lo) {
            errs.push(format!("sampling box [{lo}, {hi}] is empty"));
        }
        if self.assumption.samples < 2 {
            errs.push("assumption.samples must be at least 2".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(errs))
        }
    }

    /// Declared `(ω, θ)`, falling back to sampling on the assumption box.
    pub fn assumption_constants(&self) -> Result<AssumptionConstants, ScenarioError> {
        let a = &self.assumption;
        if let (Some(omega), Some(theta)) = (a.omega, a.theta) {
            return Ok(AssumptionConstants { omega, theta, source: "declared".into(), sampled: None });
        }
        let dim = self.game.stacked_dim();
        let lo = vec![a.sampling_box[0]; dim];
        let hi = vec![a.sampling_box[1]; dim];
        let est = self
            .game
            .estimate_monotonicity_lipschitz(&lo, &hi, a.samples, self.seed())
            .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;
        let source = if a.omega.is_some() || a.theta.is_some() { "mixed" } else { "sampled" };
        Ok(AssumptionConstants {
            omega: a.omega.unwrap_or(est.omega),
            theta: a.theta.unwrap_or(est.theta),
            source: source.into(),
            sampled: Some(est),
        })
    }

    pub fn gains_report(&self) -> Result<GainsReport, ScenarioError> {
        let spectrum = self
            .topology
            .estimator_spectrum()
            .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;
        let certs = LyapunovCertificates::build(&self.gains.k, &spectrum)?;
        let constants = self.assumption_constants()?;
        let l_norm = spectral_norm(&self.topology.block_cluster_laplacian());
        let inputs = BoundInputs {
            omega: constants.omega,
            theta: constants.theta,
            order_n: self.game.order_n,
            a_bar1: certs.a_bar1,
            lambda_min_q: certs.lambda_min_q,
            lambda_max_p2: certs.lambda_max_p2,
            l_norm,
        };
        let bounds = gain_bounds(&inputs, &self.gains)?;
        let certification = certify(&self.gains, &bounds);
        if !certification.certified {
            log::warn!("gains are {}; simulating anyway", certification.verdict);
        }
        Ok(GainsReport {
            scenario: self.name.clone(),
            seed: self.seed(),
            config_hash: self.config_hash(),
            constants,
            certificates: certs.summary(),
            inputs,
            bounds,
            certification,
            estimator_lambda_min: spectrum.lambda_min,
            estimator_lambda_max: spectrum.lambda_max,
            cluster_laplacian_norm: l_norm,
            stability_cap: stability_cap(&self.gains, spectrum.lambda_max, certs.companion_norm),
        })
    }

    pub fn solve_ne(&self) -> Result<OracleReport, ScenarioError> {
        let multi = solve_ne_multistart(&self.game, 5, 20.0, self.seed())?;
        let z0 = vec![0.0; multi.solution.z.len()];
        let fixed = solve_ne(&self.game, &z0, NeMethod::FixedPoint, &SolveOptions::for_method(NeMethod::FixedPoint))?;
        let gap = multi
            .solution
            .z
            .iter()
            .zip(&fixed.z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(OracleReport {
            scenario: self.name.clone(),
            seed: self.seed(),
            config_hash: self.config_hash(),
            lifted: multi.solution.lifted(&self.game),
            solution: multi.solution,
            fixed_point: fixed,
            method_gap: gap,
            restart_spread: multi.restart_spread,
            restarts: multi.restarts,
        })
    }

    /// Oracle, certification and simulation in one go.
    pub fn simulate(&self) -> Result<(Trajectory, RunReport), ScenarioError> {
        self.validate()?;
        let certification = self.gains_report()?.certification;
        let t0 = Instant::now();
        let oracle = solve_ne_multistart(&self.game, 5, 20.0, self.seed())?.solution;
        let oracle_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let initial = self.integrator.initial_state(&self.game)?;
        let traj = simulate_from(&self.game, &self.topology, &self.gains, &self.integrator, initial)?;
        let simulate_s = t1.elapsed().as_secs_f64();
        let reference = oracle.lifted(&self.game);
        let summary = TrajectorySummary::from_table(&TrajectoryTable::from_trajectory(&traj), Some(&reference));
        let last = traj.last_state();
        let report = RunReport {
            scenario: self.name.clone(),
            seed: self.seed(),
            config_hash: self.config_hash(),
            certification,
            oracle,
            summary,
            final_state: FinalState {
                t: *traj.times.last().expect("non-empty"),
                x: last.x().to_vec(),
                derivs: (1..self.game.order_n).map(|l| last.deriv(l).to_vec()).collect(),
                y: last.y().to_vec(),
            },
            stopped_early: traj.stopped_early,
            timings: Timings { oracle_s, simulate_s },
        };
        Ok((traj, report))
    }
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::from_json(&text)
}
