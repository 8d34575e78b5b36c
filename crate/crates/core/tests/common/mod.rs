#![allow(dead_code)]

use mcg_nash::game::{ClusterSpec, CostFunction, GameSpec, PlayerId, Stacked};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scalar_cluster(costs: Vec<CostFunction>) -> ClusterSpec {
    ClusterSpec { label: String::new(), players: costs }
}

/// Central difference of `f_i^j` in its own decision, built from `eval_cost` only.
pub fn fd_grad(game: &GameSpec, id: PlayerId, x: &[f64], h: f64) -> Vec<f64> {
    let q = game.q;
    let g = game.global_index(id);
    let own = &x[g * q..(g + 1) * q];
    let view = Stacked { data: x, q };
    (0..q)
        .map(|c| {
            let mut plus = own.to_vec();
            let mut minus = own.to_vec();
            plus[c] += h;
            minus[c] -= h;
            let fp = game.eval_cost(id, &plus, &view).unwrap();
            let fm = game.eval_cost(id, &minus, &view).unwrap();
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Random quadratic multi-cluster game with `q = 1`. Couplings are kept small
/// relative to the diagonal so the reduced map stays strongly monotone.
pub fn random_quadratic_game(rng: &mut ChaCha8Rng, clusters: usize, order_n: usize) -> GameSpec {
    let sizes: Vec<usize> = (0..clusters).map(|_| rng.random_range(1..=4)).collect();
    let mut out = Vec::new();
    for (j, &size) in sizes.iter().enumerate() {
        let mut players = Vec::new();
        for _ in 0..size {
            let a = rng.random_range(0.5..3.0);
            let b = rng.random_range(-20.0..20.0);
            let mut cost = CostFunction::quadratic(a, vec![b], rng.random_range(-5.0..5.0));
            if clusters > 1 && rng.random_bool(0.6) {
                let mut k = rng.random_range(0..clusters - 1);
                if k >= j {
                    k += 1;
                }
                let target = PlayerId::new(k, rng.random_range(0..sizes[k]));
                cost = cost.with_coupling(target, rng.random_range(-0.4..0.4));
            }
            players.push(cost);
        }
        out.push(scalar_cluster(players));
    }
    GameSpec::new(1, order_n, out).unwrap()
}

/// NE of a `q = 1` quadratic game from the linear system
/// `Σ_i (2a_i^j z_j + b_i^j + Σ c·z_k) = 0`.
pub fn quadratic_ne_linear(game: &GameSpec) -> Vec<f64> {
    let n = game.clusters.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (j, cluster) in game.clusters.iter().enumerate() {
        for cost in &cluster.players {
            assert!(cost.ratio.is_none());
            h[(j, j)] += 2.0 * cost.quadratic.a;
            rhs[j] -= cost.quadratic.b[0];
            for c in &cost.couplings {
                h[(j, c.target.cluster)] += c.coeff;
            }
        }
    }
    h.lu().solve(&rhs).expect("nonsingular").iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph on `n` vertices with edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> mcg_nash::UndirectedGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push(mcg_nash::graph::Edge { i, j, w: rng.random_range(0.1..3.0) });
            }
        }
    }
    mcg_nash::UndirectedGraph::new(n, edges).unwrap()
}

/// Expands `∏ (s − r)` for stable roots and returns `(k₁, …, k_m)`.
pub fn random_hurwitz_k(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    // Coefficients in ascending powers.
    let mut poly = vec![1.0];
    let mut left = m;
    let mul = |poly: &[f64], factor: &[f64]| {
        let mut out = vec![0.0; poly.len() + factor.len() - 1];
        for (i, a) in poly.iter().enumerate() {
            for (j, b) in factor.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    while left > 0 {
        let re = -r.random_range(0.2..3.0);
        if left >= 2 && r.random_bool(0.5) {
            let im = r.random_range(0.1..3.0);
            poly = mul(&poly, &[re * re + im * im, -2.0 * re, 1.0]);
            left -= 2;
        } else {
            poly = mul(&poly, &[-re, 1.0]);
            left -= 1;
        }
    }
    poly[..m].to_vec()
}
