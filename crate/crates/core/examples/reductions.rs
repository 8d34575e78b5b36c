//! The two degenerate shapes of a multi-cluster game.
//!
//! A single cluster is a distributed optimization problem: the players agree
//! on the minimizer of the sum of their costs. Single-player clusters make an
//! ordinary noncooperative game.

use mcg_nash::oracle::{solve_ne, SolveOptions};
use mcg_nash::sim::simulate_from;
use mcg_nash::{
    ClusterSpec, CostFunction, FeedbackGains, GameSpec, IntegratorConfig, NeMethod, PlayerId, TopologySpec,
    UndirectedGraph,
};

fn cluster(players: Vec<CostFunction>) -> ClusterSpec {
    ClusterSpec { label: String::new(), players }
}

fn main() {
    let config = IntegratorConfig { dt: 1e-3, t_final: 200.0, record_every: 100, stop_tol: Some(1e-10), ..Default::default() };
    let gains = FeedbackGains { k: vec![1.0], epsilon: 2.0, mu: None, kappa1: 1.0, kappa2: 10.0 };

    let a = [1.0, 2.0, 0.5, 1.5];
    let b = [-4.0, 3.0, -1.0, -6.0];
    let single = GameSpec::new(
        1,
        2,
        vec![cluster(a.iter().zip(&b).map(|(&a, &b)| CostFunction::quadratic(a, vec![b], 0.0)).collect())],
    )
    .unwrap();
    let topo = TopologySpec::new(UndirectedGraph::path(4), vec![UndirectedGraph::path(4)]);
    let traj = simulate_from(&single, &topo, &gains, &config, config.initial_state(&single).unwrap()).unwrap();
    let optimum = -b.iter().sum::<f64>() / (2.0 * a.iter().sum::<f64>());
    println!("one cluster: minimizer {optimum:.10}, players reach {:?} at t = {}",
        traj.last_state().x(), traj.times.last().unwrap());

    let flat = GameSpec::new(
        1,
        2,
        vec![
            cluster(vec![CostFunction::quadratic(1.0, vec![-2.0], 0.0).with_coupling(PlayerId::new(1, 0), 0.5)]),
            cluster(vec![CostFunction::quadratic(1.5, vec![1.0], 0.0).with_coupling(PlayerId::new(2, 0), -0.3)]),
            cluster(vec![CostFunction::quadratic(2.0, vec![-3.0], 0.0).with_coupling(PlayerId::new(0, 0), 0.4)]),
        ],
    )
    .unwrap();
    let lone = UndirectedGraph::new(1, vec![]).unwrap();
    let topo = TopologySpec::new(UndirectedGraph::path(3), vec![lone.clone(), lone.clone(), lone]);
    let traj = simulate_from(&flat, &topo, &gains, &config, config.initial_state(&flat).unwrap()).unwrap();
    let ne = solve_ne(&flat, &[0.0; 3], NeMethod::DampedNewton, &SolveOptions::for_method(NeMethod::DampedNewton)).unwrap();
    println!("single-player clusters: oracle NE {:?}, players reach {:?}", ne.z, traj.last_state().x());
}
