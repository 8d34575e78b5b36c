//! Closed-loop simulation of the seeking dynamics.
//!
//! Every player is an `n`-th order integrator driven by
//!
//! ```text
//! u = −Σ_l ε^{n−l} k_l x^{(l)} − y − ∇f(x, x̂)
//! ẏ = κ₁ Σ_k a_ik (x_i − x_k)                       (cluster graph)
//! x̂̇ = −κ₂ (Σ_v a_iv (x̂^i − x̂^v) + a_in (x̂^i_n − x_n))   (global graph)
//! ```
//!
//! The flat state vector is laid out as
//! `[x, x^{(1)}, …, x^{(n−1)}, y, x̂]`, with `x̂` observer-major.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gains::FeedbackGains;
use crate::game::{GameError, GameSpec};
use crate::graph::TopologySpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state became non-finite at t = {time}")]
    NonFiniteState { time: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("step size {dt:e} exceeds the stability cap {cap:e}")]
    StepTooLarge { dt: f64, cap: f64 },
    #[error("invalid integrator config: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),
}

/// Offsets into the flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    /// q̄
    pub dim: usize,
    pub order_n: usize,
    /// N̄
    pub players: usize,
    pub q: usize,
}

impl StateLayout {
    pub fn for_game(game: &GameSpec) -> Self {
        Self {
            dim: game.stacked_dim(),
            order_n: game.order_n,
            players: game.player_count(),
            q: game.q,
        }
    }

    pub fn len(&self) -> usize {
        (self.order_n + 1 + self.players) * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `x^{(level)}`; level 0 is the decision itself.
    pub fn chain(&self, level: usize) -> std::ops::Range<usize> {
        level * self.dim..(level + 1) * self.dim
    }

    pub fn y(&self) -> std::ops::Range<usize> {
        self.order_n * self.dim..(self.order_n + 1) * self.dim
    }

    pub fn estimates(&self) -> std::ops::Range<usize> {
        (self.order_n + 1) * self.dim..self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub layout: StateLayout,
    pub data: Vec<f64>,
}

impl SystemState {
    /// Algorithm initialization: decisions given, derivatives, `y` and estimates zero.
    pub fn initial(game: &GameSpec, x0: &[f64]) -> Result<Self, SimError> {
        let layout = StateLayout::for_game(game);
        if x0.len() != layout.dim {
            return Err(SimError::State(format!("x(0) has length {}, expected {}", x0.len(), layout.dim)));
        }
        let mut data = vec![0.0; layout.len()];
        data[layout.chain(0)].copy_from_slice(x0);
        Ok(Self { layout, data })
    }

    /// Decisions drawn uniformly from `[lo, hi]` with the given seed.
    pub fn random_initial(game: &GameSpec, lo: f64, hi: f64, seed: u64) -> Result<Self, SimError> {
        if !(hi > lo) {
            return Err(SimError::Config(format!("initial box [{lo}, {hi}] is empty")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0: Vec<f64> = (0..game.stacked_dim()).map(|_| rng.random_range(lo..hi)).collect();
        Self::initial(game, &x0)
    }

    /// Arbitrary state; `derivs` holds `x^{(1)}, …, x^{(n−1)}`.
    pub fn from_parts(
        game: &GameSpec,
        x: &[f64],
        derivs: &[Vec<f64>],
        y: &[f64],
        estimates: &[f64],
    ) -> Result<Self, SimError> {
        let layout = StateLayout::for_game(game);
        let d = layout.dim;
        if x.len() != d || y.len() != d || estimates.len() != d * layout.players {
            return Err(SimError::State("component lengths do not match the game".into()));
        }
        if derivs.len() + 1 != layout.order_n || derivs.iter().any(|v| v.len() != d) {
            return Err(SimError::State(format!("expected {} derivative blocks of length {d}", layout.order_n - 1)));
        }
        let mut data = Vec::with_capacity(layout.len());
        data.extend_from_slice(x);
        for v in derivs {
            data.extend_from_slice(v);
        }
        data.extend_from_slice(y);
        data.extend_from_slice(estimates);
        Ok(Self { layout, data })
    }

    /// Equilibrium built from a Nash equilibrium `x*`: derivatives zero,
    /// `x̂ = 1 ⊗ x*`, `y = −F(x̂)`.
    pub fn equilibrium(game: &GameSpec, x_star: &[f64]) -> Result<Self, SimError> {
        let layout = StateLayout::for_game(game);
        let estimates: Vec<f64> = x_star.iter().copied().cycle().take(layout.dim * layout.players).collect();
        let f = game.pseudo_gradient_estimated(x_star, &estimates)?;
        let y: Vec<f64> = f.iter().map(|v| -v).collect();
        let derivs = vec![vec![0.0; layout.dim]; layout.order_n - 1];
        Self::from_parts(game, x_star, &derivs, &y, &estimates)
    }

    pub fn x(&self) -> &[f64] {
        &self.data[self.layout.chain(0)]
    }

    pub fn deriv(&self, level: usize) -> &[f64] {
        &self.data[self.layout.chain(level)]
    }

    pub fn y(&self) -> &[f64] {
        &self.data[self.layout.y()]
    }

    pub fn estimates(&self) -> &[f64] {
        &self.data[self.layout.estimates()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Precomputed right-hand side of the stacked closed loop.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    game: &'a GameSpec,
    layout: StateLayout,
    /// `ε^{n−l} k_l` for `l = 1..n−1`.
    feedback: Vec<f64>,
    kappa1: f64,
    kappa2: f64,
    /// Cluster-graph neighbors in global indices.
    cluster_nbrs: Vec<Vec<(usize, f64)>>,
    global_nbrs: Vec<Vec<(usize, f64)>>,
    frozen_decisions: bool,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(game: &'a GameSpec, topo: &TopologySpec, gains: &FeedbackGains) -> Self {
        let layout = StateLayout::for_game(game);
        let n = game.order_n as i32;
        let feedback = gains
            .k
            .iter()
            .enumerate()
            .map(|(idx, &k)| gains.epsilon.powi(n - (idx as i32 + 1)) * k)
            .collect();
        let mut cluster_nbrs = vec![Vec::new(); layout.players];
        for (g, offset) in topo.clusters.iter().zip(topo.cluster_offsets()) {
            for (local, list) in g.neighbors().into_iter().enumerate() {
                cluster_nbrs[offset + local] = list.into_iter().map(|(v, w)| (offset + v, w)).collect();
            }
        }
        Self {
            game,
            layout,
            feedback,
            kappa1: gains.kappa1,
            kappa2: gains.kappa2,
            cluster_nbrs,
            global_nbrs: topo.global.neighbors(),
            frozen_decisions: false,
        }
    }

    /// Pins decisions, derivatives and `y`; only the estimator evolves.
    pub fn with_frozen_decisions(mut self) -> Self {
        self.frozen_decisions = true;
        self
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn rhs(&self, state: &[f64], out: &mut [f64]) -> Result<(), GameError> {
        let lay = self.layout;
        let d = lay.dim;
        let q = lay.q;
        let n = lay.order_n;
        let x = &state[lay.chain(0)];
        let est = &state[lay.estimates()];

        if self.frozen_decisions {
            out[..lay.estimates().start].fill(0.0);
        } else {
            // Integrator chain.
            out[..(n - 1) * d].copy_from_slice(&state[d..n * d]);
            let u = &mut out[lay.chain(n - 1)];
            self.game.pseudo_gradient_estimated_into(x, est, u)?;
            let y = &state[lay.y()];
            for (idx, ui) in u.iter_mut().enumerate() {
                let mut acc = -*ui - y[idx];
                for (l, c) in self.feedback.iter().enumerate() {
                    acc -= c * state[(l + 1) * d + idx];
                }
                *ui = acc;
            }
            // Consensus integrator.
            let dy = &mut out[lay.y()];
            for (p, nbrs) in self.cluster_nbrs.iter().enumerate() {
                for c in 0..q {
                    let xp = x[p * q + c];
                    let s: f64 = nbrs.iter().map(|&(k, w)| w * (xp - x[k * q + c])).sum();
                    dy[p * q + c] = self.kappa1 * s;
                }
            }
        }

        // Estimator.
        let dest = &mut out[lay.estimates()];
        for (o, nbrs) in self.global_nbrs.iter().enumerate() {
            let row = &est[o * d..(o + 1) * d];
            let drow = &mut dest[o * d..(o + 1) * d];
            drow.fill(0.0);
            for &(v, w) in nbrs {
                let other = &est[v * d..(v + 1) * d];
                for ((dr, &a), &b) in drow.iter_mut().zip(row).zip(other) {
                    *dr += w * (a - b);
                }
                // Direct observation of neighbor v's decision.
                for c in 0..q {
                    let slot = v * q + c;
                    drow[slot] += w * (row[slot] - x[slot]);
                }
            }
            for dr in drow.iter_mut() {
                *dr *= -self.kappa2;
            }
        }
        Ok(())
    }

    pub fn rhs_state(&self, state: &SystemState) -> Result<SystemState, GameError> {
        let mut out = vec![0.0; state.data.len()];
        self.rhs(&state.data, &mut out)?;
        Ok(SystemState { layout: state.layout, data: out })
    }
}

/// Classical fourth-order Runge–Kutta with reusable scratch space.
#[derive(Debug, Clone, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    /// Advances `y` in place by one step of size `dt`.
    pub fn step<F, E>(&mut self, y: &mut [f64], dt: f64, mut f: F) -> Result<(), E>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    {
        let n = y.len();
        if self.k1.len() != n {
            *self = Self::new(n);
        }
        let h2 = 0.5 * dt;
        f(y, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h2 * self.k1[i];
        }
        f(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h2 * self.k2[i];
        }
        f(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4)?;
        let h6 = dt / 6.0;
        for i in 0..n {
            y[i] += h6 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// One RK4 step; fails if the result is not finite.
pub fn step_rk4<F>(state: &[f64], dt: f64, f: F) -> Result<Vec<f64>, SimError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), SimError>,
{
    let mut y = state.to_vec();
    Rk4::new(y.len()).step(&mut y, dt, f)?;
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(SimError::NonFiniteState { time: dt })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Record every this many steps.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Stop once the Nash residual stays below this for `stop_window` samples.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: Option<f64>,
    #[serde(default = "default_stop_window")]
    pub stop_window: usize,
    #[serde(default)]
    pub seed: u64,
    /// Box for uniformly drawn `x(0)`.
    #[serde(default = "default_init_box")]
    pub init_box: [f64; 2],
    /// Explicit `x(0)`; overrides `init_box`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_x: Option<Vec<f64>>,
    /// Must be absent or all zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_y: Option<Vec<f64>>,
}

fn default_record_every() -> usize {
    100
}
fn default_stop_tol() -> Option<f64> {
    Some(1e-8)
}
fn default_stop_window() -> usize {
    100
}
fn default_init_box() -> [f64; 2] {
    [-5.0, 5.0]
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 2e-4,
            t_final: 60.0,
            record_every: default_record_every(),
            stop_tol: default_stop_tol(),
            stop_window: default_stop_window(),
            seed: 0,
            init_box: default_init_box(),
            initial_x: None,
            initial_y: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            errs.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= self.dt) {
            errs.push(format!("t_final ({}) must be at least dt ({})", self.t_final, self.dt));
        }
        if self.record_every == 0 {
            errs.push("record_every must be at least 1".into());
        }
        if !(self.init_box[1] > self.init_box[0]) {
            errs.push(format!("init_box [{}, {}] is empty", self.init_box[0], self.init_box[1]));
        }
        if let Some(y) = &self.initial_y {
            if y.iter().any(|&v| v != 0.0) {
                errs.push("initial_y must be zero: the consensus variable starts at y(0) = 0".into());
            }
        }
        errs
    }

    pub fn initial_state(&self, game: &GameSpec) -> Result<SystemState, SimError> {
        match &self.initial_x {
            Some(x0) => SystemState::initial(game, x0),
            None => SystemState::random_initial(game, self.init_box[0], self.init_box[1], self.seed),
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// `0.5 / (κ₂·λ_max(S) + ε·max(1, ‖A‖) + 1)`
pub fn stability_cap(gains: &FeedbackGains, lambda_max_s: f64, companion_norm: f64) -> f64 {
    0.5 / (gains.kappa2 * lambda_max_s + gains.epsilon * companion_norm.max(1.0) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub ne_residual: f64,
    pub consensus_err: f64,
    pub est_err: f64,
}

/// Shape information needed to label and reinterpret recorded states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryShape {
    pub q: usize,
    pub order_n: usize,
    pub cluster_sizes: Vec<usize>,
}

impl TrajectoryShape {
    pub fn for_game(game: &GameSpec) -> Self {
        Self { q: game.q, order_n: game.order_n, cluster_sizes: game.cluster_sizes() }
    }

    pub fn dim(&self) -> usize {
        self.q * self.cluster_sizes.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub shape: TrajectoryShape,
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub metrics: Vec<SampleMetrics>,
    /// Set when the run ended on the Nash-residual criterion.
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn last_state(&self) -> &SystemState {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// `‖x(t) − x_ref‖₂` per sample.
    pub fn decision_errors(&self, x_ref: &[f64]) -> Vec<f64> {
        self.states.iter().map(|s| distance(s.x(), x_ref)).collect()
    }
}

/// Max over clusters of `‖Σ_i ∇f_i^j‖` plus the largest intra-cluster spread.
pub fn ne_residual(game: &GameSpec, x: &[f64]) -> Result<f64, GameError> {
    let f = game.pseudo_gradient(x)?;
    let q = game.q;
    let mut worst = 0.0_f64;
    let mut offset = 0;
    for size in game.cluster_sizes() {
        let mut sum = vec![0.0; q];
        for p in offset..offset + size {
            for c in 0..q {
                sum[c] += f[p * q + c];
            }
        }
        worst = worst.max(norm(&sum));
        offset += size;
    }
    Ok(worst + consensus_error(&game.cluster_sizes(), q, x))
}

/// Largest pairwise decision distance inside any cluster.
pub fn consensus_error(cluster_sizes: &[usize], q: usize, x: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    let mut offset = 0;
    for &size in cluster_sizes {
        for a in offset..offset + size {
            for b in a + 1..offset + size {
                worst = worst.max(distance(&x[a * q..(a + 1) * q], &x[b * q..(b + 1) * q]));
            }
        }
        offset += size;
    }
    worst
}

/// `‖x̂ − 1 ⊗ x‖₂`
pub fn estimation_error(x: &[f64], estimates: &[f64]) -> f64 {
    estimates
        .chunks(x.len())
        .map(|row| row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Largest `‖Σ_i y_i^j‖` over clusters.
pub fn cluster_y_sum(cluster_sizes: &[usize], q: usize, y: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    let mut offset = 0;
    for &size in cluster_sizes {
        let mut sum = vec![0.0; q];
        for p in offset..offset + size {
            for c in 0..q {
                sum[c] += y[p * q + c];
            }
        }
        worst = worst.max(norm(&sum));
        offset += size;
    }
    worst
}

pub fn sample_metrics(game: &GameSpec, state: &SystemState) -> Result<SampleMetrics, GameError> {
    Ok(SampleMetrics {
        ne_residual: ne_residual(game, state.x())?,
        consensus_err: consensus_error(&game.cluster_sizes(), game.q, state.x()),
        est_err: estimation_error(state.x(), state.estimates()),
    })
}

/// Norm of the stacked equilibrium conditions
/// `(x^{(1)}, …, x^{(n−1)}, −Σε^{n−l}k_l x^{(l)} − y − F(x̂), (𝐋⊗I)x, −(S x̂ − (M⊗I)(1⊗x)))`,
/// assembled from dense operators.
pub fn equilibrium_residual(
    game: &GameSpec,
    topo: &TopologySpec,
    gains: &FeedbackGains,
    state: &SystemState,
) -> Result<f64, GameError> {
    let lay = state.layout;
    let d = lay.dim;
    let q = lay.q;
    let n = lay.order_n;
    let np = lay.players;
    let mut sq = 0.0;
    for level in 1..n {
        sq += state.deriv(level).iter().map(|v| v * v).sum::<f64>();
    }
    let f = game.pseudo_gradient_estimated(state.x(), state.estimates())?;
    for idx in 0..d {
        let mut v = -state.y()[idx] - f[idx];
        for (l, &k) in gains.k.iter().enumerate() {
            v -= gains.epsilon.powi((n - (l + 1)) as i32) * k * state.deriv(l + 1)[idx];
        }
        sq += v * v;
    }
    let lq = kron_identity(&topo.block_cluster_laplacian(), q);
    let x = DVector::from_column_slice(state.x());
    sq += (&lq * &x).norm_squared();

    let s = kron_identity(&topo.estimator_operator(), q);
    let adj = topo.global.adjacency();
    let est = DVector::from_column_slice(state.estimates());
    let mut observed = DVector::zeros(np * d);
    for o in 0..np {
        for t in 0..np {
            for c in 0..q {
                observed[o * d + t * q + c] = adj[(o, t)] * state.x()[t * q + c];
            }
        }
    }
    sq += (s * est - observed).norm_squared();
    Ok(sq.sqrt())
}

fn kron_identity(m: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    if q == 1 {
        m.clone()
    } else {
        m.kronecker(&DMatrix::<f64>::identity(q, q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of `ln(error)` against time.
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares slope of `ln(error)` over samples with `t ∈ [t1, t2]`.
pub fn rate_fit(times: &[f64], errors: &[f64], window: (f64, f64)) -> Result<RateFit, SimError> {
    let (t1, t2) = window;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors)
        .filter(|(&t, _)| t >= t1 && t <= t2)
        .map(|(&t, &e)| (t, e))
        .collect();
    if pts.len() < 2 {
        return Err(SimError::DegenerateWindow(format!("only {} samples in [{t1}, {t2}]", pts.len())));
    }
    if let Some(&(t, e)) = pts.iter().find(|(_, e)| !(*e >= 1e-12)) {
        return Err(SimError::DegenerateWindow(format!("error {e:e} at t = {t} is below 1e-12")));
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_l = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for &(t, e) in &pts {
        let dt = t - mean_t;
        let dl = e.ln() - mean_l;
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    if stt == 0.0 {
        return Err(SimError::DegenerateWindow("all samples share one time".into()));
    }
    let rate = stl / stt;
    let ss_res = (sll - rate * stl).max(0.0);
    let r_squared = if sll == 0.0 { 1.0 } else { 1.0 - ss_res / sll };
    Ok(RateFit { rate, r_squared, samples: pts.len() })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Runs the closed loop from `initial` under `config`.
///
/// The state must have zero per-cluster `y` sums; that sum is conserved and
/// equilibria only exist on that subspace.
pub fn simulate_from(
    game: &GameSpec,
    topo: &TopologySpec,
    gains: &FeedbackGains,
    config: &IntegratorConfig,
    initial: SystemState,
) -> Result<Trajectory, SimError> {
    let errs = config.validation_errors();
    if !errs.is_empty() {
        return Err(SimError::Config(errs.join("; ")));
    }
    if initial.layout != StateLayout::for_game(game) {
        return Err(SimError::State("initial state does not match the game".into()));
    }
    let ysum = cluster_y_sum(&game.cluster_sizes(), game.q, initial.y());
    if ysum > 1e-9 {
        return Err(SimError::State(format!("initial per-cluster y sum is {ysum:e}, must be zero")));
    }
    let spectrum = topo
        .estimator_spectrum()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let companion = crate::gains::companion_matrix(&gains.k);
    let cap = stability_cap(gains, spectrum.lambda_max, crate::graph::spectral_norm(&companion));
    if config.dt > cap {
        return Err(SimError::StepTooLarge { dt: config.dt, cap });
    }
    let system = ClosedLoop::new(game, topo, gains);
    run(game, &system, config, initial)
}

/// Integrates an already-built closed loop without the stability-cap check.
pub fn run(
    game: &GameSpec,
    system: &ClosedLoop<'_>,
    config: &IntegratorConfig,
    initial: SystemState,
) -> Result<Trajectory, SimError> {
    let steps = config.steps();
    let layout = initial.layout;
    let mut y = initial.data;
    let mut rk = Rk4::new(y.len());
    let shape = TrajectoryShape::for_game(game);
    let mut traj = Trajectory {
        shape,
        times: Vec::new(),
        states: Vec::new(),
        metrics: Vec::new(),
        stopped_early: false,
    };
    let mut below = 0usize;
    let mut record = |step: usize, data: &[f64], traj: &mut Trajectory| -> Result<bool, SimError> {
        let state = SystemState { layout, data: data.to_vec() };
        let m = sample_metrics(game, &state)?;
        traj.times.push(step as f64 * config.dt);
        traj.states.push(state);
        traj.metrics.push(m);
        match config.stop_tol {
            Some(tol) if m.ne_residual < tol => below += 1,
            _ => below = 0,
        }
        Ok(config.stop_tol.is_some() && below >= config.stop_window)
    };
    record(0, &y, &mut traj)?;
    for step in 1..=steps {
        rk.step(&mut y, config.dt, |s, out| system.rhs(s, out))?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFiniteState { time: step as f64 * config.dt });
        }
        if step % config.record_every == 0 || step == steps {
            if record(step, &y, &mut traj)? {
                traj.stopped_early = step != steps;
                break;
            }
        }
    }
    Ok(traj)
}

pub fn simulate(
    game: &GameSpec,
    topo: &TopologySpec,
    gains: &FeedbackGains,
    config: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    let initial = config.initial_state(game)?;
    simulate_from(game, topo, gains, config, initial)
}
