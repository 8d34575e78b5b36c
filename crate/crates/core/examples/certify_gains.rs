//! Lyapunov certificates, gain bounds and the certification verdict for a
//! scenario file (the bundled one by default).

use mcg_nash::{parse_scenario, Scenario};

fn main() {
    let scenario = match std::env::args().nth(1) {
        Some(path) => parse_scenario(path).expect("scenario"),
        None => Scenario::paper_example(),
    };
    let report = scenario.gains_report().expect("gains report");
    let c = &report.constants;
    println!("ω = {:.6}, θ = {:.6} ({})", c.omega, c.theta, c.source);
    println!("P₁ = {:?}", report.certificates.p1);
    println!("ā₁ = {}, λ_min(Q) = {:.6e}, ‖𝐋‖ = {:.6}",
        report.certificates.a_bar1, report.certificates.lambda_min_q, report.cluster_laplacian_norm);
    let b = &report.bounds;
    println!("ε_min = {:.6}, μ_min = {:.6} (μ = {:.6})", b.epsilon_min, b.mu_min, b.mu);
    println!("κ₁ terms = {:?}", b.kappa1_terms);
    println!("κ₂_min = {:.6}", b.kappa2_min);
    println!();
    for line in &report.certification.lines {
        println!("{:<8} {:<4} value {:<12.6} bound {:<12.6} margin {:+.6}  ({})",
            line.name, if line.pass { "ok" } else { "FAIL" }, line.value, line.bound, line.margin, line.condition);
    }
    println!("verdict: {}", report.certification.verdict);
    println!("RK4 step cap: {:.6e}", report.stability_cap);
}
