//! Multi-cluster game model.
//!
//! A game is a list of clusters, each a list of players. Player `(j, i)` owns a
//! decision `x_i^j ∈ R^q` and a cost `f_i^j(x_i^j, x^{-j})` that may depend on
//! decisions of players in *other* clusters through bilinear couplings.
//!
//! Decisions are stacked cluster-major then player-major; player `(j, i)` has
//! global index `Σ_{p<j} n_p + i` and occupies `x[g*q .. (g+1)*q]`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Log arguments must stay at or above this on the operating box.
pub const LOG_ARGUMENT_FLOOR: f64 = 1.0 + 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("player ({cluster}, {player}) needs the decision of ({target_cluster}, {target_player}), which was not supplied")]
    MissingCouplingValue {
        cluster: usize,
        player: usize,
        target_cluster: usize,
        target_player: usize,
    },
    #[error("player ({cluster}, {player}): {reason}")]
    DomainViolation {
        cluster: usize,
        player: usize,
        reason: String,
    },
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid game: {0}")]
    Invalid(String),
}

/// `(cluster, player)` address, both zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlayerId {
    pub cluster: usize,
    pub player: usize,
}

impl PlayerId {
    pub fn new(cluster: usize, player: usize) -> Self {
        Self { cluster, player }
    }
}

/// `a·‖x‖² + ⟨b, x⟩ + c`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

/// Rational term in `‖x‖²`.
///
/// * `Sqrt`: `α‖x‖² / (β·√(γ‖x‖² + δ))`
/// * `Log`:  `α‖x‖² / (β·ln(γ‖x‖² + δ))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RatioTerm {
    Sqrt { alpha: f64, beta: f64, gamma: f64, delta: f64 },
    Log { alpha: f64, beta: f64, gamma: f64, delta: f64 },
}

impl RatioTerm {
    fn params(&self) -> (f64, f64, f64, f64) {
        match *self {
            RatioTerm::Sqrt { alpha, beta, gamma, delta } | RatioTerm::Log { alpha, beta, gamma, delta } => {
                (alpha, beta, gamma, delta)
            }
        }
    }

    /// Inner argument `γr + δ` for `r = ‖x‖²`.
    fn argument(&self, r: f64) -> f64 {
        let (_, _, gamma, delta) = self.params();
        gamma * r + delta
    }

    /// Value and derivative with respect to `r = ‖x‖²`.
    fn value_and_slope(&self, r: f64) -> Result<(f64, f64), String> {
        let (alpha, beta, gamma, _) = self.params();
        let arg = self.argument(r);
        let scale = alpha / beta;
        match self {
            RatioTerm::Sqrt { .. } => {
                if arg <= 0.0 {
                    return Err(format!("sqrt argument {arg} is not positive"));
                }
                let s = arg.sqrt();
                let value = scale * r / s;
                let slope = scale * (1.0 / s - 0.5 * gamma * r / (s * arg));
                Ok((value, slope))
            }
            RatioTerm::Log { .. } => {
                if arg <= 1.0 {
                    return Err(format!("log argument {arg} does not exceed 1"));
                }
                let l = arg.ln();
                let value = scale * r / l;
                let slope = scale * (1.0 / l - gamma * r / (arg * l * l));
                Ok((value, slope))
            }
        }
    }
}

/// Bilinear coupling `coeff·⟨x_target, x⟩` with a player of another cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub target: PlayerId,
    pub coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostForm {
    Quadratic,
    RatioSqrt,
    RatioLog,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub quadratic: Quadratic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<Coupling>,
}

impl CostFunction {
    pub fn quadratic(a: f64, b: Vec<f64>, c: f64) -> Self {
        Self {
            quadratic: Quadratic { a, b, c },
            ratio: None,
            couplings: Vec::new(),
        }
    }

    pub fn with_ratio(mut self, ratio: RatioTerm) -> Self {
        self.ratio = Some(ratio);
        self
    }

    pub fn with_coupling(mut self, target: PlayerId, coeff: f64) -> Self {
        self.couplings.push(Coupling { target, coeff });
        self
    }

    pub fn form(&self) -> CostForm {
        let has_quadratic = self.quadratic.a != 0.0 || self.quadratic.b.iter().any(|&b| b != 0.0);
        match (self.ratio, has_quadratic) {
            (None, _) => CostForm::Quadratic,
            (Some(_), true) => CostForm::Composite,
            (Some(RatioTerm::Sqrt { .. }), false) => CostForm::RatioSqrt,
            (Some(RatioTerm::Log { .. }), false) => CostForm::RatioLog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    #[serde(default)]
    pub label: String,
    pub players: Vec<CostFunction>,
}

/// Source of other players' decisions, indexed by global player index.
pub trait DecisionLookup {
    fn decision(&self, id: PlayerId, global: usize) -> Option<&[f64]>;
}

impl DecisionLookup for HashMap<PlayerId, Vec<f64>> {
    fn decision(&self, id: PlayerId, _global: usize) -> Option<&[f64]> {
        self.get(&id).map(Vec::as_slice)
    }
}

/// A stacked vector of `q`-blocks, one per global player.
#[derive(Debug, Clone, Copy)]
pub struct Stacked<'a> {
    pub data: &'a [f64],
    pub q: usize,
}

impl DecisionLookup for Stacked<'_> {
    fn decision(&self, _id: PlayerId, global: usize) -> Option<&[f64]> {
        self.data.get(global * self.q..(global + 1) * self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub q: usize,
    pub order_n: usize,
    pub clusters: Vec<ClusterSpec>,
}

impl GameSpec {
    /// Builds and validates a game.
    pub fn new(q: usize, order_n: usize, clusters: Vec<ClusterSpec>) -> Result<Self, GameError> {
        let spec = Self { q, order_n, clusters };
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks: sizes, coupling targets, vector lengths.
    pub fn validate(&self) -> Result<(), GameError> {
        if self.clusters.is_empty() {
            return Err(GameError::Invalid("a game needs at least one cluster".into()));
        }
        if self.q == 0 {
            return Err(GameError::Invalid("decision dimension q must be at least 1".into()));
        }
        if self.order_n == 0 {
            return Err(GameError::Invalid("dynamics order n must be at least 1".into()));
        }
        for (j, cluster) in self.clusters.iter().enumerate() {
            if cluster.players.is_empty() {
                return Err(GameError::Invalid(format!("cluster {j} has no players")));
            }
            for (i, cost) in cluster.players.iter().enumerate() {
                if cost.quadratic.b.len() != self.q {
                    return Err(GameError::Invalid(format!(
                        "player ({j}, {i}): linear term has length {}, expected q = {}",
                        cost.quadratic.b.len(),
                        self.q
                    )));
                }
                if let Some(ratio) = cost.ratio {
                    let (_, beta, _, delta) = ratio.params();
                    if beta == 0.0 {
                        return Err(GameError::Invalid(format!("player ({j}, {i}): ratio β must be nonzero")));
                    }
                    if matches!(ratio, RatioTerm::Sqrt { .. }) && delta <= 0.0 {
                        return Err(GameError::Invalid(format!("player ({j}, {i}): ratio_sqrt needs δ > 0")));
                    }
                }
                for c in &cost.couplings {
                    if c.target.cluster == j {
                        return Err(GameError::Invalid(format!(
                            "player ({j}, {i}) couples to ({}, {}) inside its own cluster",
                            c.target.cluster, c.target.player
                        )));
                    }
                    let ok = self
                        .clusters
                        .get(c.target.cluster)
                        .is_some_and(|cl| c.target.player < cl.players.len());
                    if !ok {
                        return Err(GameError::Invalid(format!(
                            "player ({j}, {i}) couples to nonexistent player ({}, {})",
                            c.target.cluster, c.target.player
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks the log-argument floor on the box `[lo, hi]^q` for every ratio_log player.
    pub fn validate_operating_box(&self, lo: f64, hi: f64) -> Result<(), GameError> {
        let (r_min, r_max) = squared_norm_range(lo, hi, self.q);
        for id in self.players() {
            let cost = self.cost(id);
            if let Some(ratio @ RatioTerm::Log { .. }) = cost.ratio {
                let worst = ratio.argument(r_min).min(ratio.argument(r_max));
                if worst < LOG_ARGUMENT_FLOOR {
                    return Err(GameError::DomainViolation {
                        cluster: id.cluster,
                        player: id.player,
                        reason: format!(
                            "log argument falls to {worst} on the operating box [{lo}, {hi}]; needs ≥ {LOG_ARGUMENT_FLOOR}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.players.len()).collect()
    }

    /// N̄
    pub fn player_count(&self) -> usize {
        self.clusters.iter().map(|c| c.players.len()).sum()
    }

    /// q̄ = q·N̄
    pub fn stacked_dim(&self) -> usize {
        self.q * self.player_count()
    }

    pub fn cluster_offset(&self, cluster: usize) -> usize {
        self.clusters[..cluster].iter().map(|c| c.players.len()).sum()
    }

    pub fn global_index(&self, id: PlayerId) -> usize {
        self.cluster_offset(id.cluster) + id.player
    }

    pub fn player_id(&self, global: usize) -> PlayerId {
        let mut rest = global;
        for (j, c) in self.clusters.iter().enumerate() {
            if rest < c.players.len() {
                return PlayerId::new(j, rest);
            }
            rest -= c.players.len();
        }
        panic!("global index {global} out of range");
    }

    /// All players in stacking order.
    pub fn players(&self) -> impl Iterator<Item = PlayerId> + '_ {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(j, c)| (0..c.players.len()).map(move |i| PlayerId::new(j, i)))
    }

    pub fn cost(&self, id: PlayerId) -> &CostFunction {
        &self.clusters[id.cluster].players[id.player]
    }

    pub fn eval_cost<D: DecisionLookup + ?Sized>(
        &self,
        id: PlayerId,
        x_own: &[f64],
        others: &D,
    ) -> Result<f64, GameError> {
        self.check_own(x_own)?;
        let cost = self.cost(id);
        let r = dot(x_own, x_own);
        let mut value = cost.quadratic.a * r + dot(&cost.quadratic.b, x_own) + cost.quadratic.c;
        if let Some(ratio) = cost.ratio {
            let (v, _) = ratio.value_and_slope(r).map_err(|reason| domain(id, reason))?;
            value += v;
        }
        for c in &cost.couplings {
            let other = self.lookup(id, c.target, others)?;
            value += c.coeff * dot(other, x_own);
        }
        Ok(value)
    }

    /// Analytic `∇_{x_i^j} f_i^j`, written into `out`.
    pub fn grad_own_into<D: DecisionLookup + ?Sized>(
        &self,
        id: PlayerId,
        x_own: &[f64],
        others: &D,
        out: &mut [f64],
    ) -> Result<(), GameError> {
        let cost = self.cost(id);
        let r = dot(x_own, x_own);
        let mut radial = 2.0 * cost.quadratic.a;
        if let Some(ratio) = cost.ratio {
            let (_, slope) = ratio.value_and_slope(r).map_err(|reason| domain(id, reason))?;
            radial += 2.0 * slope;
        }
        for ((o, &x), &b) in out.iter_mut().zip(x_own).zip(&cost.quadratic.b) {
            *o = radial * x + b;
        }
        for c in &cost.couplings {
            let other = self.lookup(id, c.target, others)?;
            for (o, &v) in out.iter_mut().zip(other) {
                *o += c.coeff * v;
            }
        }
        Ok(())
    }

    pub fn grad_own<D: DecisionLookup + ?Sized>(
        &self,
        id: PlayerId,
        x_own: &[f64],
        others: &D,
    ) -> Result<Vec<f64>, GameError> {
        self.check_own(x_own)?;
        let mut out = vec![0.0; self.q];
        self.grad_own_into(id, x_own, others, &mut out)?;
        Ok(out)
    }

    /// Full-information pseudo-gradient `F(x)`.
    pub fn pseudo_gradient(&self, x: &[f64]) -> Result<Vec<f64>, GameError> {
        self.check_len("x", x.len(), self.stacked_dim())?;
        let mut out = vec![0.0; x.len()];
        self.pseudo_gradient_into(x, &mut out)?;
        Ok(out)
    }

    pub fn pseudo_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), GameError> {
        let q = self.q;
        let view = Stacked { data: x, q };
        for (g, id) in self.players().enumerate() {
            let range = g * q..(g + 1) * q;
            self.grad_own_into(id, &x[range.clone()], &view, &mut out[range])?;
        }
        Ok(())
    }

    /// `F(x̂)`: each player uses its own decision and its own row of the
    /// estimate stack for everyone else.
    pub fn pseudo_gradient_estimated(&self, x: &[f64], estimates: &[f64]) -> Result<Vec<f64>, GameError> {
        let dim = self.stacked_dim();
        self.check_len("x", x.len(), dim)?;
        self.check_len("estimates", estimates.len(), dim * self.player_count())?;
        let mut out = vec![0.0; dim];
        self.pseudo_gradient_estimated_into(x, estimates, &mut out)?;
        Ok(out)
    }

    pub fn pseudo_gradient_estimated_into(
        &self,
        x: &[f64],
        estimates: &[f64],
        out: &mut [f64],
    ) -> Result<(), GameError> {
        let q = self.q;
        let dim = self.stacked_dim();
        for (g, id) in self.players().enumerate() {
            let row = Stacked { data: &estimates[g * dim..(g + 1) * dim], q };
            let range = g * q..(g + 1) * q;
            self.grad_own_into(id, &x[range.clone()], &row, &mut out[range])?;
        }
        Ok(())
    }

    /// Splits a stacked vector into per-cluster, per-player blocks.
    pub fn unstack(&self, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let q = self.q;
        let mut it = x.chunks(q);
        self.clusters
            .iter()
            .map(|c| c.players.iter().map(|_| it.next().unwrap_or(&[]).to_vec()).collect())
            .collect()
    }

    pub fn stack(&self, blocks: &[Vec<Vec<f64>>]) -> Vec<f64> {
        blocks.iter().flatten().flatten().copied().collect()
    }

    /// Sampled stand-ins for the strong-monotonicity and Lipschitz constants of `F` on a box.
    pub fn estimate_monotonicity_lipschitz(
        &self,
        lo: &[f64],
        hi: &[f64],
        samples: usize,
        seed: u64,
    ) -> Result<MonotonicityEstimate, GameError> {
        let dim = self.stacked_dim();
        self.check_len("box lower corner", lo.len(), dim)?;
        self.check_len("box upper corner", hi.len(), dim)?;
        if samples < 2 {
            return Err(GameError::Invalid("need at least 2 samples".into()));
        }
        if lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
            return Err(GameError::Invalid("sampling box is degenerate".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            lo.iter().zip(hi).map(|(&l, &h)| rng.random_range(l..h)).collect()
        };
        let mut omega = f64::INFINITY;
        let mut theta = 0.0_f64;
        for _ in 0..samples {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let fa = self.pseudo_gradient(&a)?;
            let fb = self.pseudo_gradient(&b)?;
            let dx: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
            let df: Vec<f64> = fa.iter().zip(&fb).map(|(u, v)| u - v).collect();
            let nx2 = dot(&dx, &dx);
            if nx2 == 0.0 {
                continue;
            }
            omega = omega.min(dot(&dx, &df) / nx2);
            theta = theta.max((dot(&df, &df) / nx2).sqrt());
        }
        let non_monotone = omega <= 0.0;
        if non_monotone {
            log::warn!("sampled monotonicity constant {omega} is not positive; strong monotonicity fails on this box");
        }
        Ok(MonotonicityEstimate { omega, theta, non_monotone })
    }

    fn lookup<'d, D: DecisionLookup + ?Sized>(
        &self,
        owner: PlayerId,
        target: PlayerId,
        others: &'d D,
    ) -> Result<&'d [f64], GameError> {
        let global = self.global_index(target);
        match others.decision(target, global) {
            Some(v) if v.len() == self.q => Ok(v),
            _ => Err(GameError::MissingCouplingValue {
                cluster: owner.cluster,
                player: owner.player,
                target_cluster: target.cluster,
                target_player: target.player,
            }),
        }
    }

    fn check_own(&self, x_own: &[f64]) -> Result<(), GameError> {
        self.check_len("own decision", x_own.len(), self.q)
    }

    fn check_len(&self, what: &'static str, got: usize, expected: usize) -> Result<(), GameError> {
        if got == expected {
            Ok(())
        } else {
            Err(GameError::DimensionMismatch { what, got, expected })
        }
    }
}

/// Result of [`GameSpec::estimate_monotonicity_lipschitz`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityEstimate {
    pub omega: f64,
    pub theta: f64,
    /// Set when some sampled pair had `⟨x−y, F(x)−F(y)⟩ ≤ 0`.
    pub non_monotone: bool,
}

fn domain(id: PlayerId, reason: String) -> GameError {
    GameError::DomainViolation {
        cluster: id.cluster,
        player: id.player,
        reason,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Range of `‖x‖²` for `x ∈ [lo, hi]^q`.
fn squared_norm_range(lo: f64, hi: f64, q: usize) -> (f64, f64) {
    let nearest = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
    let farthest = lo.abs().max(hi.abs());
    (q as f64 * nearest * nearest, q as f64 * farthest * farthest)
}
