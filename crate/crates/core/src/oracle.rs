//! Reference Nash equilibrium from the reduced, consensus-imposed system.
//!
//! With every player of cluster `j` sharing one decision `z^j`, a profile is a
//! Nash equilibrium iff `G_j(z) = Σ_i ∇_{x_i^j} f_i^j(z^j, z^{−j}) = 0` for all
//! clusters. This module solves that `N·q`-dimensional system directly and
//! never touches the closed-loop dynamics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameError, GameSpec};

pub const DEFAULT_TOL: f64 = 1e-10;
/// Central-difference step for the Newton Jacobian.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { best: Vec<f64>, residual: f64, iterations: usize },
    #[error("finite-difference Jacobian is singular")]
    SingularJacobian,
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeMethod {
    DampedNewton,
    FixedPoint,
}

impl std::str::FromStr for NeMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "damped-newton" | "newton" => Ok(Self::DampedNewton),
            "fixed-point" => Ok(Self::FixedPoint),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed-point step; defaults to `1/θ̂` of the reduced map.
    pub step: Option<f64>,
}

impl SolveOptions {
    pub fn for_method(method: NeMethod) -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: match method {
                NeMethod::DampedNewton => 100,
                NeMethod::FixedPoint => 200_000,
            },
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeSolution {
    /// One decision per cluster, stacked.
    pub z: Vec<f64>,
    /// `‖G(z)‖₂`
    pub residual: f64,
    pub iterations: usize,
    pub method: NeMethod,
}

impl NeSolution {
    /// Player-level profile with every cluster member at its cluster's decision.
    pub fn lifted(&self, game: &GameSpec) -> Vec<f64> {
        lift(game, &self.z)
    }
}

pub fn lift(game: &GameSpec, z: &[f64]) -> Vec<f64> {
    let q = game.q;
    let mut x = Vec::with_capacity(game.stacked_dim());
    for (j, size) in game.cluster_sizes().into_iter().enumerate() {
        for _ in 0..size {
            x.extend_from_slice(&z[j * q..(j + 1) * q]);
        }
    }
    x
}

/// `G(z)`, one `q`-block per cluster.
pub fn reduced_gradient(game: &GameSpec, z: &[f64]) -> Result<Vec<f64>, GameError> {
    let q = game.q;
    let expected = game.cluster_count() * q;
    if z.len() != expected {
        return Err(GameError::DimensionMismatch { what: "z", got: z.len(), expected });
    }
    let f = game.pseudo_gradient(&lift(game, z))?;
    let mut g = vec![0.0; expected];
    for (p, id) in game.players().enumerate() {
        for c in 0..q {
            g[id.cluster * q + c] += f[p * q + c];
        }
    }
    Ok(g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Central-difference Jacobian of `G`.
pub fn reduced_jacobian(game: &GameSpec, z: &[f64]) -> Result<DMatrix<f64>, GameError> {
    let m = z.len();
    let mut jac = DMatrix::zeros(m, m);
    let mut zp = z.to_vec();
    for c in 0..m {
        let h = FD_STEP * z[c].abs().max(1.0);
        zp[c] = z[c] + h;
        let gp = reduced_gradient(game, &zp)?;
        zp[c] = z[c] - h;
        let gm = reduced_gradient(game, &zp)?;
        zp[c] = z[c];
        for r in 0..m {
            jac[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Sampled Lipschitz constant of `G` on `z₀ ± radius`, floored by `‖J(z₀)‖₂`.
pub fn reduced_lipschitz(game: &GameSpec, z0: &[f64], radius: f64, samples: usize, seed: u64) -> Result<f64, GameError> {
    let mut theta = crate::graph::spectral_norm(&reduced_jacobian(game, z0)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a: Vec<f64> = z0.iter().map(|&c| c + rng.random_range(-radius..radius)).collect();
        let b: Vec<f64> = z0.iter().map(|&c| c + rng.random_range(-radius..radius)).collect();
        let (Ok(ga), Ok(gb)) = (reduced_gradient(game, &a), reduced_gradient(game, &b)) else {
            continue;
        };
        let dz: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        let dg: Vec<f64> = ga.iter().zip(&gb).map(|(u, v)| u - v).collect();
        let nz = norm(&dz);
        if nz > 0.0 {
            theta = theta.max(norm(&dg) / nz);
        }
    }
    Ok(theta)
}

pub fn solve_ne(game: &GameSpec, z0: &[f64], method: NeMethod, opts: &SolveOptions) -> Result<NeSolution, OracleError> {
    match method {
        NeMethod::DampedNewton => match damped_newton(game, z0, opts) {
            Err(OracleError::SingularJacobian) => {
                log::warn!("singular Jacobian in Newton solve; falling back to fixed-point iteration");
                fixed_point(game, z0, &SolveOptions::for_method(NeMethod::FixedPoint))
            }
            other => other,
        },
        NeMethod::FixedPoint => fixed_point(game, z0, opts),
    }
}

fn damped_newton(game: &GameSpec, z0: &[f64], opts: &SolveOptions) -> Result<NeSolution, OracleError> {
    let mut z = z0.to_vec();
    let mut g = reduced_gradient(game, &z)?;
    let mut res = norm(&g);
    for iter in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(NeSolution { z, residual: res, iterations: iter, method: NeMethod::DampedNewton });
        }
        let jac = reduced_jacobian(game, &z)?;
        let step = jac
            .lu()
            .solve(&DVector::from_iterator(g.len(), g.iter().map(|v| -v)))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(OracleError::SingularJacobian)?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            // Points outside the cost domain count as a failed trial.
            if let Ok(gt) = reduced_gradient(game, &trial) {
                let rt = norm(&gt);
                if rt <= (1.0 - 1e-4 * alpha) * res || (rt < res && alpha < 1e-3) {
                    z = trial;
                    g = gt;
                    res = rt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                if res <= opts.tol * 10.0 {
                    // Roundoff floor; accept.
                    return Ok(NeSolution { z, residual: res, iterations: iter, method: NeMethod::DampedNewton });
                }
                return Err(OracleError::NoConvergence { best: z, residual: res, iterations: iter });
            }
        }
    }
    if res <= opts.tol {
        return Ok(NeSolution { z, residual: res, iterations: opts.max_iter, method: NeMethod::DampedNewton });
    }
    Err(OracleError::NoConvergence { best: z, residual: res, iterations: opts.max_iter })
}

fn fixed_point(game: &GameSpec, z0: &[f64], opts: &SolveOptions) -> Result<NeSolution, OracleError> {
    let mut gamma = match opts.step {
        Some(s) => s,
        None => match reduced_lipschitz(game, z0, 10.0, 64, 0)? {
            theta if theta > 0.0 => 1.0 / theta,
            _ => 1.0,
        },
    };
    let mut z = z0.to_vec();
    let mut g = reduced_gradient(game, &z)?;
    let mut res = norm(&g);
    for iter in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(NeSolution { z, residual: res, iterations: iter, method: NeMethod::FixedPoint });
        }
        let trial: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - gamma * b).collect();
        match reduced_gradient(game, &trial) {
            Ok(gt) if norm(&gt) <= res * (1.0 + 1e-12) || norm(&gt) < opts.tol => {
                res = norm(&gt);
                z = trial;
                g = gt;
            }
            _ => {
                gamma *= 0.5;
                if gamma < 1e-14 {
                    return Err(OracleError::NoConvergence { best: z, residual: res, iterations: iter });
                }
            }
        }
    }
    if res <= opts.tol {
        return Ok(NeSolution { z, residual: res, iterations: opts.max_iter, method: NeMethod::FixedPoint });
    }
    Err(OracleError::NoConvergence { best: z, residual: res, iterations: opts.max_iter })
}

/// Newton solve from zero plus seeded restarts; agreement is measured, not assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartSolution {
    pub solution: NeSolution,
    /// Largest distance between a restart's answer and the primary answer.
    pub restart_spread: f64,
    pub restarts: usize,
}

pub fn solve_ne_multistart(
    game: &GameSpec,
    restarts: usize,
    radius: f64,
    seed: u64,
) -> Result<MultiStartSolution, OracleError> {
    let m = game.cluster_count() * game.q;
    let opts = SolveOptions::for_method(NeMethod::DampedNewton);
    let primary = solve_ne(game, &vec![0.0; m], NeMethod::DampedNewton, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spread = 0.0_f64;
    for _ in 0..restarts {
        let z0: Vec<f64> = (0..m).map(|_| rng.random_range(-radius..radius)).collect();
        match solve_ne(game, &z0, NeMethod::DampedNewton, &opts) {
            Ok(s) => {
                let d = s.z.iter().zip(&primary.z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                spread = spread.max(d);
            }
            Err(e) => log::warn!("restart from {z0:?} failed: {e}"),
        }
    }
    if spread > 1e-8 {
        log::warn!("restarts disagree by {spread:e}; equilibrium may not be unique");
    }
    Ok(MultiStartSolution { solution: primary, restart_spread: spread, restarts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ClusterSpec, CostFunction, PlayerId};

    fn single(cost: CostFunction) -> ClusterSpec {
        ClusterSpec { label: String::new(), players: vec![cost] }
    }

    #[test]
    fn shifted_quadratic() {
        // (x − 3)² = x² − 6x + 9
        let g = GameSpec::new(1, 1, vec![single(CostFunction::quadratic(1.0, vec![-6.0], 9.0))]).unwrap();
        for method in [NeMethod::DampedNewton, NeMethod::FixedPoint] {
            let s = solve_ne(&g, &[0.0], method, &SolveOptions::for_method(method)).unwrap();
            assert!((s.z[0] - 3.0).abs() < 1e-10, "{method:?}: {:?}", s.z);
        }
    }

    #[test]
    fn two_cluster_linear() {
        let g = GameSpec::new(
            1,
            1,
            vec![
                single(CostFunction::quadratic(1.0, vec![0.0], 0.0).with_coupling(PlayerId::new(1, 0), 1.0)),
                single(CostFunction::quadratic(1.0, vec![2.0], 0.0)),
            ],
        )
        .unwrap();
        let s = solve_ne(&g, &[0.0, 0.0], NeMethod::DampedNewton, &SolveOptions::for_method(NeMethod::DampedNewton))
            .unwrap();
        assert!((s.z[0] - 0.5).abs() < 1e-10);
        assert!((s.z[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn decoupled_reduced_gradient() {
        let g = GameSpec::new(
            1,
            1,
            vec![
                ClusterSpec { label: String::new(), players: vec![CostFunction::quadratic(1.0, vec![0.0], 0.0); 3] },
                single(CostFunction::quadratic(1.0, vec![0.0], 0.0)),
            ],
        )
        .unwrap();
        assert_eq!(reduced_gradient(&g, &[1.5, -2.0]).unwrap(), vec![2.0 * 3.0 * 1.5, -4.0]);
    }

    #[test]
    fn method_names() {
        assert_eq!("damped-newton".parse::<NeMethod>().unwrap(), NeMethod::DampedNewton);
        assert_eq!("fixed-point".parse::<NeMethod>().unwrap(), NeMethod::FixedPoint);
        assert!("bisection".parse::<NeMethod>().is_err());
    }
}
