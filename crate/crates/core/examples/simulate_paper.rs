//! Runs the bundled scenario and writes `trajectory.csv` plus `report.json`.
//!
//! ```text
//! cargo run --release --example simulate_paper -- [output-dir] [seed]
//! ```

use std::path::PathBuf;

use mcg_nash::cli::simulate_into;
use mcg_nash::{RunReport, Scenario};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "paper-run".into()));
    let mut scenario = Scenario::paper_example();
    if let Some(seed) = args.next() {
        scenario.integrator.seed = seed.parse().expect("seed");
    }
    let value = simulate_into(&scenario, &dir).expect("simulation");
    let report: RunReport = serde_json::from_value(value).unwrap();
    let s = &report.summary;
    println!("wrote {}", dir.display());
    println!("z* = {:?}", report.oracle.z);
    println!("t = {}: ne_residual {:.3e}, spread {:.3e}, |x - z*| {:.3e}",
        s.t_end, s.ne_residual_final, s.consensus_err_final, s.final_decision_error.unwrap_or(f64::NAN));
    if let Some(fit) = s.rate_fit {
        println!("rate fit on the middle third: {:.4e} (r² {:.3})", fit.rate, fit.r_squared);
    }
    println!("converged: {:?}, certification: {}", s.converged, report.certification.verdict);
    println!("simulated in {:.2}s", report.timings.simulate_s);
}
