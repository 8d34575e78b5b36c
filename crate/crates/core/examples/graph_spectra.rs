//! Laplacian spectra of the bundled topology and the estimator operator
//! `S = 𝓛⊗I + M` that drives every player's estimates.

use mcg_nash::graph::{sorted_eigenvalues, spectral_norm};
use mcg_nash::Scenario;

fn main() {
    let topo = Scenario::paper_example().topology;
    println!("global graph: {} vertices, {} edges", topo.global.vertices, topo.global.edges.len());
    println!("  λ₂ = {:.6}, connected (spectral / BFS): {} / {}",
        topo.global.algebraic_connectivity().unwrap(),
        topo.global.is_connected(),
        topo.global.is_connected_bfs());
    for (j, g) in topo.clusters.iter().enumerate() {
        let ev: Vec<String> = sorted_eigenvalues(&g.laplacian()).iter().map(|v| format!("{v:.4}")).collect();
        println!("cluster {} Laplacian spectrum: [{}]", j + 1, ev.join(", "));
    }
    println!("‖𝐋‖ = {:.6}", spectral_norm(&topo.block_cluster_laplacian()));

    let spec = topo.estimator_spectrum().unwrap();
    println!("estimator operator {}x{}: λ_min = {:.6e}, λ_max = {:.6}",
        spec.operator.nrows(), spec.operator.ncols(), spec.lambda_min, spec.lambda_max);
}
