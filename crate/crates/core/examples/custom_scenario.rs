//! Builds a scenario in code, checks it and prints its JSON form, which the
//! `mcg` binary accepts directly.

use mcg_nash::{
    ClusterSpec, CostFunction, FeedbackGains, GameSpec, IntegratorConfig, PlayerId, RatioTerm, Scenario,
    TopologySpec, UndirectedGraph,
};

fn main() {
    let game = GameSpec::new(
        1,
        3,
        vec![
            ClusterSpec {
                label: "producers".into(),
                players: vec![
                    CostFunction::quadratic(1.0, vec![-10.0], 0.0)
                        .with_ratio(RatioTerm::Sqrt { alpha: 1.0, beta: 2.0, gamma: 1.0, delta: 10.0 }),
                    CostFunction::quadratic(2.0, vec![-6.0], 0.0).with_coupling(PlayerId::new(1, 0), 0.5),
                ],
            },
            ClusterSpec {
                label: "consumers".into(),
                players: vec![
                    CostFunction::quadratic(1.5, vec![4.0], 0.0).with_coupling(PlayerId::new(0, 1), -0.5),
                    CostFunction::quadratic(1.0, vec![2.0], 0.0),
                ],
            },
        ],
    )
    .unwrap();
    let topology = TopologySpec::new(
        UndirectedGraph::from_unit_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap(),
        vec![UndirectedGraph::path(2), UndirectedGraph::path(2)],
    );
    let scenario = Scenario {
        name: "two-markets".into(),
        description: "Two clusters of two third-order players.".into(),
        game,
        topology,
        gains: FeedbackGains { k: vec![2.0, 3.0], epsilon: 2.0, mu: None, kappa1: 0.5, kappa2: 20.0 },
        assumption: Default::default(),
        operating_box: Some([-50.0, 50.0]),
        integrator: IntegratorConfig { dt: 1e-3, t_final: 40.0, ..Default::default() },
    };
    match scenario.validate() {
        Ok(()) => eprintln!("valid; config hash {}", scenario.config_hash()),
        Err(e) => {
            for m in e.messages() {
                eprintln!("invalid: {m}");
            }
            std::process::exit(2);
        }
    }
    println!("{}", scenario.to_json());
}
