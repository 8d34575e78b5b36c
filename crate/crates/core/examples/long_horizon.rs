//! Follows the bundled scenario well past its nominal 60 s horizon.
//!
//! With κ₁ = 0.05 the slowest closed-loop mode decays at roughly 4e-3 per
//! second, so the decisions reach the equilibrium on a time scale of
//! thousands of seconds.
//!
//! ```text
//! cargo run --release --example long_horizon -- [t_final] [seed]
//! ```

use mcg_nash::oracle::lift;
use mcg_nash::sim::{rate_fit, simulate_from};
use mcg_nash::{IntegratorConfig, Scenario};

fn main() {
    let mut args = std::env::args().skip(1);
    let t_final: f64 = args.next().map_or(3000.0, |v| v.parse().expect("t_final"));
    let seed: u64 = args.next().map_or(1, |v| v.parse().expect("seed"));
    let s = Scenario::paper_example();
    let z = lift(&s.game, &s.solve_ne().unwrap().solution.z);
    let config = IntegratorConfig { t_final, seed, record_every: 25_000, stop_tol: None, ..s.integrator.clone() };
    let traj = simulate_from(&s.game, &s.topology, &s.gains, &config, config.initial_state(&s.game).unwrap()).unwrap();
    let errors = traj.decision_errors(&z);
    println!("{:>8} {:>14} {:>14} {:>14}", "t", "|x - z*|", "ne_residual", "spread");
    for ((t, e), m) in traj.times.iter().zip(&errors).zip(&traj.metrics) {
        if (t % (t_final / 30.0).max(5.0)) < config.dt * config.record_every as f64 / 2.0 {
            println!("{t:>8.0} {e:>14.4e} {:>14.4e} {:>14.4e}", m.ne_residual, m.consensus_err);
        }
    }
    let fit = rate_fit(&traj.times, &errors, (t_final / 3.0, 2.0 * t_final / 3.0)).unwrap();
    println!("rate fit on [{:.0}, {:.0}]: {:.4e} (r² {:.4})", t_final / 3.0, 2.0 * t_final / 3.0, fit.rate, fit.r_squared);
    let last = traj.metrics.last().unwrap();
    println!("max |x - z*| at t = {t_final}: {:.3e}, spread {:.3e}",
        traj.last_state().x().iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max), last.consensus_err);
}
