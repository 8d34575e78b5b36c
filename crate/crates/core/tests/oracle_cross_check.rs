mod common;

use common::{max_abs_diff, quadratic_ne_linear, random_quadratic_game, rng, scalar_cluster};
use mcg_nash::oracle::{reduced_gradient, solve_ne, solve_ne_multistart, SolveOptions};
use mcg_nash::sim::ne_residual;
use mcg_nash::{CostFunction, GameSpec, NeMethod, PlayerId, Scenario};

fn solve(game: &GameSpec, method: NeMethod) -> Vec<f64> {
    let z0 = vec![0.0; game.clusters.len() * game.q];
    solve_ne(game, &z0, method, &SolveOptions::for_method(method)).unwrap().z
}

#[test]
fn reduced_gradient_of_the_example_at_zero() {
    let game = Scenario::paper_example().game;
    let g = reduced_gradient(&game, &[0.0; 3]).unwrap();
    assert_eq!(g, vec![-238.0, -187.0, -153.0]);
}

#[test]
fn methods_agree_on_the_example() {
    let game = Scenario::paper_example().game;
    let newton = solve(&game, NeMethod::DampedNewton);
    let fixed = solve(&game, NeMethod::FixedPoint);
    assert!(max_abs_diff(&newton, &fixed) <= 1e-8, "{newton:?} vs {fixed:?}");
    let lifted = mcg_nash::oracle::lift(&game, &newton);
    assert!(ne_residual(&game, &lifted).unwrap() <= 1e-8);
}

#[test]
fn restarts_land_on_one_equilibrium() {
    let game = Scenario::paper_example().game;
    let multi = solve_ne_multistart(&game, 5, 20.0, 1).unwrap();
    assert!(multi.restart_spread <= 1e-8);
}

#[test]
fn small_linear_example() {
    // f¹ = (x¹)² + x¹x², f² = (x²)² + 2x²
    let game = GameSpec::new(
        1,
        1,
        vec![
            scalar_cluster(vec![CostFunction::quadratic(1.0, vec![0.0], 0.0).with_coupling(PlayerId::new(1, 0), 1.0)]),
            scalar_cluster(vec![CostFunction::quadratic(1.0, vec![2.0], 0.0)]),
        ],
    )
    .unwrap();
    for method in [NeMethod::DampedNewton, NeMethod::FixedPoint] {
        let z = solve(&game, method);
        assert!(max_abs_diff(&z, &[0.5, -1.0]) <= 1e-10, "{method:?}: {z:?}");
    }
}

#[test]
fn random_quadratic_games_match_the_linear_solve() {
    let mut r = rng(31);
    for _ in 0..10 {
        let game = random_quadratic_game(&mut r, 3, 1);
        let exact = quadratic_ne_linear(&game);
        let newton = solve(&game, NeMethod::DampedNewton);
        let fixed = solve(&game, NeMethod::FixedPoint);
        assert!(max_abs_diff(&newton, &fixed) <= 1e-8);
        assert!(max_abs_diff(&newton, &exact) <= 1e-10, "{newton:?} vs {exact:?}");
    }
}

#[test]
fn permuting_players_inside_a_cluster_keeps_the_equilibrium() {
    let base = Scenario::paper_example().game;
    let reference = solve(&base, NeMethod::DampedNewton);
    // Reverse every cluster and remap coupling targets to the new positions.
    let mut permuted = base.clone();
    for c in &mut permuted.clusters {
        c.players.reverse();
    }
    let sizes = base.cluster_sizes();
    for c in &mut permuted.clusters {
        for p in &mut c.players {
            for cp in &mut p.couplings {
                cp.target.player = sizes[cp.target.cluster] - 1 - cp.target.player;
            }
        }
    }
    permuted.validate().unwrap();
    let z = solve(&permuted, NeMethod::DampedNewton);
    assert!(max_abs_diff(&z, &reference) <= 1e-8);
}
