//! Nash equilibrium of the bundled game on the consensus-reduced system,
//! solved by damped Newton and by fixed-point iteration.

use mcg_nash::oracle::{reduced_gradient, solve_ne, solve_ne_multistart, SolveOptions};
use mcg_nash::sim::ne_residual;
use mcg_nash::{NeMethod, Scenario};

fn main() {
    let game = Scenario::paper_example().game;
    let z0 = vec![0.0; game.cluster_count()];
    println!("G(0) = {:?}", reduced_gradient(&game, &z0).unwrap());
    for method in [NeMethod::DampedNewton, NeMethod::FixedPoint] {
        let s = solve_ne(&game, &z0, method, &SolveOptions::for_method(method)).unwrap();
        println!("{method:?}: z* = {:?}, |G| = {:.2e}, {} iterations", s.z, s.residual, s.iterations);
    }
    let multi = solve_ne_multistart(&game, 5, 20.0, 1).unwrap();
    println!("restart spread over {} restarts: {:.2e}", multi.restarts, multi.restart_spread);
    let lifted = multi.solution.lifted(&game);
    println!("ne_residual at the lifted point: {:.2e}", ne_residual(&game, &lifted).unwrap());
}
