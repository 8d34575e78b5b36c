mod common;

use common::{rng, scalar_cluster};
use mcg_nash::graph::sorted_eigenvalues;
use mcg_nash::oracle::lift;
use mcg_nash::sim::{
    cluster_y_sum, equilibrium_residual, estimation_error, ne_residual, rate_fit, run, simulate_from, step_rk4,
    ClosedLoop, SimError,
};
use mcg_nash::{CostFunction, FeedbackGains, GameSpec, IntegratorConfig, Scenario, SystemState, TopologySpec, UndirectedGraph};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn paper_equilibrium() -> (Scenario, SystemState) {
    let s = Scenario::paper_example();
    let z = s.solve_ne().unwrap().solution.z;
    let state = SystemState::equilibrium(&s.game, &lift(&s.game, &z)).unwrap();
    (s, state)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[test]
fn rhs_vanishes_at_the_constructed_equilibrium() {
    let (s, state) = paper_equilibrium();
    let system = ClosedLoop::new(&s.game, &s.topology, &s.gains);
    let d = system.rhs_state(&state).unwrap();
    assert!(norm(&d.data) <= 1e-8, "{}", norm(&d.data));
    assert!(equilibrium_residual(&s.game, &s.topology, &s.gains, &state).unwrap() <= 1e-8);
    // y* = −F(x̂*) is the sign that makes the input vanish.
    let f = s.game.pseudo_gradient(state.x()).unwrap();
    assert!(state.y().iter().zip(&f).all(|(y, g)| (y + g).abs() < 1e-15));
}

#[test]
fn gradient_flow_of_a_lone_square() {
    let game = GameSpec::new(1, 1, vec![scalar_cluster(vec![CostFunction::quadratic(1.0, vec![0.0], 0.0)])]).unwrap();
    let lone = UndirectedGraph::new(1, vec![]).unwrap();
    let topo = TopologySpec::new(lone.clone(), vec![lone]);
    let gains = FeedbackGains { k: vec![], epsilon: 1.0, mu: None, kappa1: 1.0, kappa2: 1.0 };
    let system = ClosedLoop::new(&game, &topo, &gains);
    let state = SystemState::from_parts(&game, &[1.0], &[], &[0.0], &[1.0]).unwrap();
    assert_eq!(system.rhs_state(&state).unwrap().x(), &[-2.0]);
}

#[test]
fn consensus_derivative_sums_to_zero_per_cluster() {
    let s = Scenario::paper_example();
    let system = ClosedLoop::new(&s.game, &s.topology, &s.gains);
    let mut r = rng(8);
    for _ in 0..20 {
        let len = system.layout().len();
        let data: Vec<f64> = (0..len).map(|_| r.random_range(-10.0..10.0)).collect();
        let mut out = vec![0.0; len];
        system.rhs(&data, &mut out).unwrap();
        let dy = &out[system.layout().y()];
        assert!(cluster_y_sum(&[4, 4, 4], 1, dy) <= 1e-12);
    }
}

#[test]
fn rk4_step_is_the_fourth_order_taylor_polynomial() {
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(4, 4, &[
        -1.0, 0.5, 0.0, 0.2,
        0.3, -2.0, 0.1, 0.0,
        0.0, 0.4, -0.5, 1.0,
        -0.2, 0.0, -1.0, -0.3,
    ]);
    let x0 = DVector::from_row_slice(&[1.0, -2.0, 0.5, 3.0]);
    let taylor = |h: f64, order: usize| {
        let mut term = x0.clone();
        let mut sum = x0.clone();
        for k in 1..=order {
            term = &b * term * (h / k as f64);
            sum += &term;
        }
        sum
    };
    let rk = |h: f64| {
        let y = step_rk4(x0.as_slice(), h, |s, out| {
            let v = &b * DVector::from_column_slice(s);
            out.copy_from_slice(v.as_slice());
            Ok(())
        })
        .unwrap();
        DVector::from_vec(y)
    };
    let bn = b.norm();
    for h in [0.2, 0.1, 0.05] {
        let y = rk(h);
        assert!((&y - taylor(h, 4)).norm() < 1e-14);
        // Local error against exp(hB) x₀, truncated far past double precision.
        let err = (&y - taylor(h, 30)).norm();
        let bound = (h * bn).powi(5) / 120.0 * (h * bn).exp() * x0.norm();
        assert!(err <= bound, "h = {h}: {err:e} > {bound:e}");
    }
    let ratio = (rk(0.1) - taylor(0.1, 30)).norm() / (rk(0.05) - taylor(0.05, 30)).norm();
    assert!((ratio - 32.0).abs() < 3.0, "error ratio {ratio}");
}

#[test]
fn estimator_tracks_frozen_decisions_at_the_spectral_rate() {
    let s = Scenario::paper_example();
    let lambda_min = s.topology.estimator_spectrum().unwrap().lambda_min;
    let system = ClosedLoop::new(&s.game, &s.topology, &s.gains).with_frozen_decisions();
    let config = IntegratorConfig { dt: 2e-4, t_final: 2.5, record_every: 50, stop_tol: None, seed: 4, ..Default::default() };
    let initial = config.initial_state(&s.game).unwrap();
    let x0 = initial.x().to_vec();
    let traj = run(&s.game, &system, &config, initial).unwrap();
    let last = traj.last_state();
    assert_eq!(last.x(), &x0[..]);
    let errors: Vec<f64> = traj.states.iter().map(|st| estimation_error(st.x(), st.estimates())).collect();
    let fit = rate_fit(&traj.times, &errors, (1.0, 2.5)).unwrap();
    let floor = s.gains.kappa2 * lambda_min;
    assert!(-fit.rate >= floor * (1.0 - 1e-2), "rate {} vs κ₂λ_min(S) = {floor}", fit.rate);
}

#[test]
fn constant_costs_freeze_consensual_decisions() {
    let costs = vec![CostFunction::quadratic(0.0, vec![0.0], 5.0); 2];
    let game = GameSpec::new(1, 2, vec![scalar_cluster(costs.clone()), scalar_cluster(costs)]).unwrap();
    let topo = TopologySpec::new(UndirectedGraph::path(4), vec![UndirectedGraph::path(2), UndirectedGraph::path(2)]);
    let gains = FeedbackGains { k: vec![1.0], epsilon: 1.0, mu: None, kappa1: 1.0, kappa2: 5.0 };
    let x0 = vec![1.0, 1.0, -2.0, -2.0];
    // Twenty e-folds of the slowest estimator mode.
    let slowest = gains.kappa2 * topo.estimator_spectrum().unwrap().lambda_min;
    let t_final = (20.0 / slowest).ceil();
    let config = IntegratorConfig { dt: 1e-2, t_final, stop_tol: None, initial_x: Some(x0.clone()), ..Default::default() };
    let traj = simulate_from(&game, &topo, &gains, &config, config.initial_state(&game).unwrap()).unwrap();
    let last = traj.last_state();
    assert_eq!(last.x(), &x0[..]);
    assert!(last.deriv(1).iter().all(|&v| v == 0.0));
    assert!(estimation_error(last.x(), last.estimates()) < 1e-6);
}

#[test]
fn equilibrium_residual_sees_estimate_perturbations() {
    let (s, eq) = paper_equilibrium();
    let lambda_min = sorted_eigenvalues(&s.topology.estimator_operator())[0];
    let mut r = rng(12);
    for scale in [1e-6, 1e-3, 1.0] {
        let mut state = eq.clone();
        let est = state.layout.estimates();
        let delta: Vec<f64> = (0..est.len()).map(|_| scale * r.random_range(-1.0..1.0)).collect();
        for (v, d) in state.data[est].iter_mut().zip(&delta) {
            *v += d;
        }
        let res = equilibrium_residual(&s.game, &s.topology, &s.gains, &state).unwrap();
        assert!(res >= lambda_min * norm(&delta) * (1.0 - 1e-9), "{res:e}");
    }
    let random = SystemState::random_initial(&s.game, -5.0, 5.0, 3).unwrap();
    assert!(equilibrium_residual(&s.game, &s.topology, &s.gains, &random).unwrap() > 0.0);
}

#[test]
fn residual_of_spread_without_gradient() {
    let game = GameSpec::new(1, 1, vec![scalar_cluster(vec![CostFunction::quadratic(0.0, vec![0.0], 0.0); 3])]).unwrap();
    assert!((ne_residual(&game, &[0.0, 0.25, -0.5]).unwrap() - 0.75).abs() < 1e-15);
    let paper = Scenario::paper_example().game;
    let at_zero = ne_residual(&paper, &[0.0; 12]).unwrap();
    assert_eq!(at_zero, 238.0);
}

#[test]
fn rate_fit_on_synthetic_series() {
    let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
    let e: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
    let fit = rate_fit(&t, &e, (0.0, 2.0)).unwrap();
    assert!((fit.rate + 2.0).abs() < 1e-6 && fit.r_squared > 0.9999);
    let flat = rate_fit(&t, &vec![0.5; t.len()], (0.0, 2.0)).unwrap();
    assert!(flat.rate.abs() < 1e-12);
    assert!(matches!(rate_fit(&t, &vec![1e-13; t.len()], (0.0, 2.0)), Err(SimError::DegenerateWindow(_))));
}

#[test]
fn guards_on_the_initial_state_and_step() {
    let s = Scenario::paper_example();
    let short = IntegratorConfig { t_final: 0.01, ..s.integrator.clone() };

    let mut bad_y = short.initial_state(&s.game).unwrap();
    let y = bad_y.layout.y();
    bad_y.data[y.start] = 1.0;
    assert!(matches!(simulate_from(&s.game, &s.topology, &s.gains, &short, bad_y), Err(SimError::State(_))));

    let coarse = IntegratorConfig { dt: 1e-3, ..short.clone() };
    let init = coarse.initial_state(&s.game).unwrap();
    assert!(matches!(
        simulate_from(&s.game, &s.topology, &s.gains, &coarse, init.clone()),
        Err(SimError::StepTooLarge { .. })
    ));
    // Past the cap RK4 diverges and the divergence time is reported.
    let system = ClosedLoop::new(&s.game, &s.topology, &s.gains);
    let blown = IntegratorConfig { dt: 5e-3, t_final: 5.0, ..short };
    assert!(matches!(run(&s.game, &system, &blown, init), Err(SimError::NonFiniteState { .. })));
}

#[test]
fn conservation_over_a_short_run() {
    let s = Scenario::paper_example();
    let config = IntegratorConfig { t_final: 5.0, record_every: 50, ..s.integrator.clone() };
    let traj = simulate_from(&s.game, &s.topology, &s.gains, &config, config.initial_state(&s.game).unwrap()).unwrap();
    let worst = traj.states.iter().map(|st| cluster_y_sum(&[4, 4, 4], 1, st.y())).fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst:e}");
    assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
}
