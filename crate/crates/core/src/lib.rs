//! Distributed Nash equilibrium seeking for multi-cluster games whose players
//! are high-order integrators.
//!
//! Players inside a cluster cooperate on a common decision while clusters
//! compete. Each player only talks to graph neighbors: it stabilizes its own
//! integrator chain, integrates intra-cluster disagreement into a consensus
//! variable, and keeps a running estimate of every other player's decision.
//!
//! * [`game`]: cost functions, pseudo-gradients, sampled monotonicity constants
//! * [`graph`]: Laplacians, connectivity, the estimator operator
//! * [`gains`]: companion matrix, Lyapunov certificates, gain bounds
//! * [`sim`]: closed-loop right-hand side, RK4 integration, residuals, rate fits
//! * [`oracle`]: independent equilibrium solver on the consensus-reduced system
//! * [`scenario`] / [`report`]: JSON scenarios, trajectory CSV, run reports

pub mod cli;
pub mod gains;
pub mod game;
pub mod graph;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod sim;

pub use gains::{CertificationReport, FeedbackGains, GainBounds};
pub use game::{ClusterSpec, CostFunction, GameSpec, PlayerId, RatioTerm};
pub use graph::{TopologySpec, UndirectedGraph};
pub use oracle::{NeMethod, NeSolution};
pub use scenario::{parse_scenario, RunReport, Scenario, ScenarioError};
pub use sim::{IntegratorConfig, SystemState, Trajectory};
