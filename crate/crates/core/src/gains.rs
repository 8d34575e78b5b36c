//! Feedback gains, Lyapunov certificates and the admissible-gain bounds.
//!
//! The state-feedback coefficients `k = (k₁, …, k_{n−1})` define the companion
//! matrix `A`. A symmetric `P₁ ≻ 0` with `P₁A + AᵀP₁ = −I` exists iff `A` is
//! Hurwitz; together with `(P₂, Q)` for the estimator operator `S` it feeds
//! the sufficient conditions on `ε`, `μ`, `κ₁` and `κ₂`.
//!
//! Certification is advisory. The conditions are sufficient, not necessary,
//! so a failed line is reported and the simulation still runs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{sorted_eigenvalues, spectral_norm, EstimatorSpectrum};

/// Residual tolerance for both Lyapunov equations.
pub const LYAPUNOV_TOL: f64 = 1e-8;
/// Hurwitz margin on the largest real part.
pub const HURWITZ_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainsError {
    #[error("companion matrix is not Hurwitz (max real part {0:e})")]
    NotHurwitz(f64),
    #[error("estimator operator is singular (λ_min = {0:e})")]
    SingularOperator(f64),
    #[error("Lyapunov solve failed: {0}")]
    Lyapunov(String),
    #[error("bound `{term}` has a non-positive denominator ({value:e})")]
    NonPositiveBound { term: &'static str, value: f64 },
    #[error("invalid gains: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackGains {
    /// `(k₁, …, k_{n−1})`; empty for first-order players.
    pub k: Vec<f64>,
    pub epsilon: f64,
    /// Analysis-only parameter; chosen just above its lower bound when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl FeedbackGains {
    pub fn validate(&self, order_n: usize) -> Result<(), GainsError> {
        if self.k.len() + 1 != order_n {
            return Err(GainsError::Invalid(format!(
                "order n = {order_n} needs {} feedback coefficients, got {}",
                order_n.saturating_sub(1),
                self.k.len()
            )));
        }
        for (name, v) in [("epsilon", self.epsilon), ("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GainsError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(GainsError::Invalid(format!("mu must be positive, got {mu}")));
            }
        }
        let a = companion_matrix(&self.k);
        if !is_hurwitz(&a) {
            return Err(GainsError::NotHurwitz(max_real_part(&a)));
        }
        Ok(())
    }

    /// `k_max = max{1, k₂, …, k_{n−1}}`
    pub fn k_max(&self) -> f64 {
        self.k.iter().skip(1).copied().fold(1.0, f64::max)
    }

    /// `k₁`, or 0 for first-order players.
    pub fn k1(&self) -> f64 {
        self.k.first().copied().unwrap_or(0.0)
    }
}

/// Companion matrix: `[0 | I]` on top, `(−k₁, …, −k_{n−1})` as the last row.
pub fn companion_matrix(k: &[f64]) -> DMatrix<f64> {
    let m = k.len();
    let mut a = DMatrix::zeros(m, m);
    for r in 0..m.saturating_sub(1) {
        a[(r, r + 1)] = 1.0;
    }
    if m > 0 {
        for (c, &kc) in k.iter().enumerate() {
            a[(m - 1, c)] = -kc;
        }
    }
    a
}

fn max_real_part(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// All eigenvalues strictly in the left half plane; vacuous for an empty matrix.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    max_real_part(a) < -HURWITZ_TOL
}

/// Solves `P₁A + AᵀP₁ = −I` through the Kronecker-vectorized linear system.
pub fn solve_p1(a: &DMatrix<f64>) -> Result<DMatrix<f64>, GainsError> {
    if !is_hurwitz(a) {
        return Err(GainsError::NotHurwitz(max_real_part(a)));
    }
    let m = a.nrows();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(m, m);
    // vec(AᵀP) = (I⊗Aᵀ)vec(P), vec(PA) = (Aᵀ⊗I)vec(P) for column-major vec.
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::<f64>::identity(m, m);
    let rhs = nalgebra::DVector::from_column_slice(rhs.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GainsError::Lyapunov("vectorized system is singular".into()))?;
    let p = DMatrix::from_column_slice(m, m, sol.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    let residual = lyapunov_residual_p1(&p, a);
    if residual > LYAPUNOV_TOL {
        return Err(GainsError::Lyapunov(format!("residual {residual:e} exceeds {LYAPUNOV_TOL:e}")));
    }
    let lmin = sorted_eigenvalues(&p)[0];
    if lmin <= 0.0 {
        return Err(GainsError::Lyapunov(format!("P₁ is not positive definite (λ_min = {lmin:e})")));
    }
    Ok(p)
}

/// `‖P₁A + AᵀP₁ + I‖_F`
pub fn lyapunov_residual_p1(p: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let m = a.nrows();
    (p * a + a.transpose() * p + DMatrix::<f64>::identity(m, m)).norm()
}

/// `P₂ = ½I`, `Q = S`. Both are SPD whenever `S` is.
pub fn solve_p2(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), GainsError> {
    let lmin = sorted_eigenvalues(s).first().copied().unwrap_or(0.0);
    if lmin <= crate::graph::CONNECTIVITY_TOL {
        return Err(GainsError::SingularOperator(lmin));
    }
    let n = s.nrows();
    Ok((DMatrix::identity(n, n) * 0.5, s.clone()))
}

/// `‖P₂S + SᵀP₂ − Q‖_F`
pub fn lyapunov_residual_p2(p2: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (p2 * s + s.transpose() * p2 - q).norm()
}

/// `ā₁ = max{(2p_{l,n−1} + k_{l+1})², …, (2p_{n−1,n−1} + 1)²}`; zero for first-order players.
pub fn compute_a_bar1(p1: &DMatrix<f64>, k: &[f64]) -> f64 {
    let m = k.len();
    if m == 0 {
        return 0.0;
    }
    let last = m - 1;
    let mut best = (2.0 * p1[(last, last)] + 1.0).powi(2);
    for l in 0..last {
        best = best.max((2.0 * p1[(l, last)] + k[l + 1]).powi(2));
    }
    best
}

/// Everything the bounds need besides the gains themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub omega: f64,
    pub theta: f64,
    pub order_n: usize,
    pub a_bar1: f64,
    pub lambda_min_q: f64,
    pub lambda_max_p2: f64,
    /// Spectral norm of the block cluster Laplacian.
    pub l_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub epsilon_min: f64,
    pub mu_min: f64,
    /// Evaluated at the chosen `ε` and `μ`.
    pub kappa1_max: f64,
    /// The three terms whose minimum is `kappa1_max`.
    pub kappa1_terms: [f64; 3],
    /// Evaluated at the chosen `ε` and `μ`.
    pub kappa2_min: f64,
    /// `μ` the bounds were evaluated at.
    pub mu: f64,
}

/// Picks `μ` a hair above its lower bound, where `κ₁_max` is largest and `κ₂_min` smallest.
pub fn default_mu(mu_min: f64) -> f64 {
    mu_min * (1.0 + 1e-6)
}

pub fn mu_min(omega: f64, order_n: usize, k1: f64) -> f64 {
    k1 / omega + (2.0 * order_n as f64 - 1.0) / 4.0
}

pub fn gain_bounds(inp: &BoundInputs, gains: &FeedbackGains) -> Result<GainBounds, GainsError> {
    let BoundInputs { omega, theta, order_n, a_bar1, lambda_min_q, lambda_max_p2, l_norm } = *inp;
    if !(omega > 0.0) || !(theta > 0.0) {
        return Err(GainsError::Invalid(format!("need ω > 0 and θ > 0, got ω = {omega}, θ = {theta}")));
    }
    let n = order_n as f64;
    let eps = gains.epsilon;
    let k1 = gains.k1();
    let k_max = gains.k_max();

    let epsilon_min = (0.75 * (theta * a_bar1 + a_bar1)).powf(1.0 / n);
    let mu_min = mu_min(omega, order_n, k1);
    let mu = gains.mu.unwrap_or_else(|| default_mu(mu_min));

    let k2_den = 2.0 * omega * eps.powf(n - 1.0) * lambda_min_q;
    let k2_num = 12.0 * omega * eps.powf(n) * lambda_max_p2.powi(2)
        + theta * theta * k1
        + 2.0 * omega * mu * mu * theta * theta
        + omega * theta * (n - 1.0);
    let kappa2_min = ratio("kappa2", k2_num, k2_den)?;

    let t1 = ratio(
        "kappa1[1]",
        omega * k1,
        2.0 * eps.powf(n - 2.0) * (3.0 * n + eps * mu * mu + 2.0 * eps * mu * k1 * l_norm - 3.0),
    )?;
    let t2 = ratio("kappa1[2]", 1.0, l_norm * l_norm * mu * mu * k_max * k_max)?;
    let t3 = ratio(
        "kappa1[3]",
        4.0 * omega * mu + 2.0 * omega * n + 4.0 * k1 - omega,
        2.0 * omega * l_norm * l_norm * mu * mu * eps.powf(n - 1.0),
    )?;
    Ok(GainBounds {
        epsilon_min,
        mu_min,
        kappa1_max: t1.min(t2).min(t3),
        kappa1_terms: [t1, t2, t3],
        kappa2_min,
        mu,
    })
}

/// A zero denominator over a positive numerator leaves the term unconstrained.
fn ratio(term: &'static str, num: f64, den: f64) -> Result<f64, GainsError> {
    if den < 0.0 || (den == 0.0 && num <= 0.0) {
        return Err(GainsError::NonPositiveBound { term, value: den });
    }
    Ok(if den == 0.0 { f64::INFINITY } else { num / den })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationLine {
    pub name: String,
    pub condition: String,
    pub value: f64,
    pub bound: f64,
    /// Positive when the condition holds.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub lines: Vec<CertificationLine>,
    pub certified: bool,
    pub verdict: String,
}

pub fn certify(gains: &FeedbackGains, bounds: &GainBounds) -> CertificationReport {
    let hurwitz = is_hurwitz(&companion_matrix(&gains.k));
    let line = |name: &str, condition: &str, value: f64, bound: f64, margin: f64| CertificationLine {
        name: name.into(),
        condition: condition.into(),
        value,
        bound,
        margin,
        pass: margin > 0.0,
    };
    let mut lines = vec![
        CertificationLine {
            name: "hurwitz".into(),
            condition: "companion matrix Hurwitz".into(),
            value: if hurwitz { 1.0 } else { 0.0 },
            bound: 1.0,
            margin: if hurwitz { 1.0 } else { -1.0 },
            pass: hurwitz,
        },
        line("epsilon", "epsilon > epsilon_min", gains.epsilon, bounds.epsilon_min, gains.epsilon - bounds.epsilon_min),
        line("mu", "mu > mu_min", bounds.mu, bounds.mu_min, bounds.mu - bounds.mu_min),
        line("kappa1", "0 < kappa1 < kappa1_max", gains.kappa1, bounds.kappa1_max, bounds.kappa1_max - gains.kappa1),
        line("kappa2", "kappa2 > kappa2_min", gains.kappa2, bounds.kappa2_min, gains.kappa2 - bounds.kappa2_min),
    ];
    for l in &mut lines {
        if l.margin.is_nan() {
            l.pass = false;
        }
    }
    let certified = lines.iter().all(|l| l.pass);
    let verdict = if certified {
        "certified".to_string()
    } else {
        let failed: Vec<_> = lines.iter().filter(|l| !l.pass).map(|l| l.name.as_str()).collect();
        format!("not certified (failed: {})", failed.join(", "))
    };
    CertificationReport { lines, certified, verdict }
}

/// Lyapunov certificates plus the scalars derived from them.
#[derive(Debug, Clone)]
pub struct LyapunovCertificates {
    pub companion: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub p1_residual: f64,
    pub a_bar1: f64,
    pub p2: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p2_residual: f64,
    pub lambda_min_q: f64,
    pub lambda_max_p2: f64,
    pub companion_norm: f64,
}

impl LyapunovCertificates {
    pub fn build(k: &[f64], estimator: &EstimatorSpectrum) -> Result<Self, GainsError> {
        let companion = companion_matrix(k);
        let p1 = solve_p1(&companion)?;
        let p1_residual = lyapunov_residual_p1(&p1, &companion);
        let a_bar1 = compute_a_bar1(&p1, k);
        let (p2, q) = solve_p2(&estimator.operator)?;
        let p2_residual = lyapunov_residual_p2(&p2, &estimator.operator, &q);
        Ok(Self {
            companion_norm: spectral_norm(&companion),
            companion,
            p1,
            p1_residual,
            a_bar1,
            p2,
            q,
            p2_residual,
            lambda_min_q: estimator.lambda_min,
            lambda_max_p2: 0.5,
        })
    }

    pub fn summary(&self) -> CertificateSummary {
        let m = self.p1.nrows();
        CertificateSummary {
            companion: (0..m).map(|r| self.companion.row(r).iter().copied().collect()).collect(),
            p1: (0..m).map(|r| self.p1.row(r).iter().copied().collect()).collect(),
            p1_residual: self.p1_residual,
            a_bar1: self.a_bar1,
            p2_residual: self.p2_residual,
            lambda_min_q: self.lambda_min_q,
            lambda_max_p2: self.lambda_max_p2,
            estimator_dim: self.q.nrows(),
        }
    }
}

/// Serializable view of [`LyapunovCertificates`] without the large estimator matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub companion: Vec<Vec<f64>>,
    pub p1: Vec<Vec<f64>>,
    pub p1_residual: f64,
    pub a_bar1: f64,
    pub p2_residual: f64,
    pub lambda_min_q: f64,
    pub lambda_max_p2: f64,
    pub estimator_dim: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_for_121() {
        let a = companion_matrix(&[1.0, 2.0, 1.0]);
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, -2.0, -1.0]);
        assert_eq!(a, want);
    }

    #[test]
    fn companion_scalar_and_empty() {
        assert_eq!(companion_matrix(&[3.0]), DMatrix::from_element(1, 1, -3.0));
        let e = companion_matrix(&[]);
        assert_eq!(e.shape(), (0, 0));
        assert!(is_hurwitz(&e));
        assert_eq!(solve_p1(&e).unwrap().shape(), (0, 0));
        assert_eq!(compute_a_bar1(&e, &[]), 0.0);
    }

    #[test]
    fn unstable_scalar() {
        let a = DMatrix::from_element(1, 1, 1.0);
        assert!(!is_hurwitz(&a));
        assert!(matches!(solve_p1(&a), Err(GainsError::NotHurwitz(_))));
    }

    #[test]
    fn scalar_p1() {
        let p = solve_p1(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(compute_a_bar1(&p, &[1.0]), 4.0);
    }

    #[test]
    fn a_bar1_three_terms() {
        // n = 3: terms (2p₁₂ + k₂)² and (2p₂₂ + 1)².
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.25, 0.25, 1.0]);
        let got = compute_a_bar1(&p, &[1.0, 3.0]);
        assert_eq!(got, (2.0_f64 * 0.25 + 3.0).powi(2).max(9.0));
        assert_eq!(got, 12.25);
    }

    #[test]
    fn p2_for_scaled_identity() {
        let s = DMatrix::<f64>::identity(5, 5) * 2.0;
        let (p2, q) = solve_p2(&s).unwrap();
        assert_eq!(p2, DMatrix::<f64>::identity(5, 5) * 0.5);
        assert_eq!(q, s);
        assert!(lyapunov_residual_p2(&p2, &s, &q) < 1e-15);
        assert!(solve_p2(&DMatrix::zeros(2, 2)).is_err());
    }

    fn inputs() -> BoundInputs {
        BoundInputs {
            omega: 1.0,
            theta: 1.0,
            order_n: 2,
            a_bar1: 4.0,
            lambda_min_q: 1.0,
            lambda_max_p2: 0.5,
            l_norm: 2.0,
        }
    }

    fn gains() -> FeedbackGains {
        FeedbackGains { k: vec![1.0], epsilon: 3.0, mu: None, kappa1: 0.01, kappa2: 100.0 }
    }

    #[test]
    fn epsilon_min_closed_form() {
        let b = gain_bounds(&inputs(), &gains()).unwrap();
        assert!((b.epsilon_min - 6.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn mu_min_large_omega_limit() {
        let big = mu_min(1e12, 4, 1.0);
        assert!((big - 7.0 / 4.0).abs() < 1e-10);
    }

    #[test]
    fn certify_flags_small_epsilon() {
        let mut g = gains();
        g.epsilon = 1.0;
        let b = gain_bounds(&inputs(), &g).unwrap();
        let r = certify(&g, &b);
        let eps = r.lines.iter().find(|l| l.name == "epsilon").unwrap();
        assert!(!eps.pass);
        assert!(!r.certified);
        assert!(r.verdict.contains("epsilon"));
    }

    #[test]
    fn certify_all_margins_positive() {
        let g = FeedbackGains { k: vec![1.0], epsilon: 3.0, mu: None, kappa1: 1e-4, kappa2: 1e4 };
        let b = gain_bounds(&inputs(), &g).unwrap();
        let r = certify(&g, &b);
        assert!(r.certified, "{r:?}");
        assert_eq!(r.verdict, "certified");
    }

    #[test]
    fn zero_laplacian_leaves_terms_unconstrained() {
        let mut inp = inputs();
        inp.l_norm = 0.0;
        let b = gain_bounds(&inp, &gains()).unwrap();
        assert!(b.kappa1_terms[1].is_infinite());
        assert!(b.kappa1_terms[2].is_infinite());
        assert!(b.kappa1_max.is_finite());
    }

    #[test]
    fn gains_validation() {
        assert!(gains().validate(2).is_ok());
        assert!(gains().validate(3).is_err());
        let mut g = gains();
        g.k = vec![-1.0];
        assert!(matches!(g.validate(2), Err(GainsError::NotHurwitz(_))));
    }
}
