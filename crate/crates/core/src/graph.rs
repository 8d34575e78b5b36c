//! Weighted undirected graphs and the Laplacian-based operators used by the
//! consensus and estimation dynamics.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `λ₂` above this counts as connected.
pub const CONNECTIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({i}, {j}): {reason}")]
    InvalidEdge { i: usize, j: usize, reason: String },
    #[error("algebraic connectivity needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("estimator operator is singular (λ_min = {0:e}); the global graph must be connected with at least one observed pair")]
    SingularOperator(f64),
    #[error("{0}")]
    Topology(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Each undirected edge is stored once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndirectedGraph {
    pub vertices: usize,
    pub edges: Vec<Edge>,
}

impl UndirectedGraph {
    pub fn new(vertices: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let g = Self { vertices, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn from_unit_edges(vertices: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        Self::new(vertices, pairs.iter().map(|&(i, j)| Edge { i, j, w: 1.0 }).collect())
    }

    pub fn path(vertices: usize) -> Self {
        let pairs: Vec<_> = (1..vertices).map(|v| (v - 1, v)).collect();
        Self::from_unit_edges(vertices, &pairs).expect("path edges are valid")
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            let bad = |reason: &str| GraphError::InvalidEdge { i: e.i, j: e.j, reason: reason.into() };
            if e.i == e.j {
                return Err(bad("self-loops are not allowed"));
            }
            if e.i >= self.vertices || e.j >= self.vertices {
                return Err(bad("endpoint out of range"));
            }
            if !(e.w > 0.0) || !e.w.is_finite() {
                return Err(bad("weight must be positive and finite"));
            }
            if !seen.insert((e.i.min(e.j), e.i.max(e.j))) {
                return Err(bad("duplicate edge"));
            }
        }
        Ok(())
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.vertices, self.vertices);
        for e in &self.edges {
            a[(e.i, e.j)] = e.w;
            a[(e.j, e.i)] = e.w;
        }
        a
    }

    /// Weight between `i` and `j`, zero if not adjacent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.edges
            .iter()
            .find(|e| (e.i == i && e.j == j) || (e.i == j && e.j == i))
            .map_or(0.0, |e| e.w)
    }

    /// Per-vertex `(neighbor, weight)` lists.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.vertices];
        for e in &self.edges {
            out[e.i].push((e.j, e.w));
            out[e.j].push((e.i, e.w));
        }
        for list in &mut out {
            list.sort_by_key(|&(v, _)| v);
        }
        out
    }

    /// `L = D − A`
    pub fn laplacian(&self) -> DMatrix<f64> {
        let a = self.adjacency();
        let mut l = -a.clone();
        for v in 0..self.vertices {
            l[(v, v)] = a.row(v).sum();
        }
        l
    }

    pub fn algebraic_connectivity(&self) -> Result<f64, GraphError> {
        if self.vertices < 2 {
            return Err(GraphError::TooFewVertices(self.vertices));
        }
        let eig = sorted_eigenvalues(&self.laplacian());
        Ok(eig[1])
    }

    /// Connectivity via `λ₂`; a single vertex is trivially connected.
    pub fn is_connected(&self) -> bool {
        match self.algebraic_connectivity() {
            Ok(l2) => l2 > CONNECTIVITY_TOL,
            Err(_) => self.vertices == 1,
        }
    }

    /// Connectivity via breadth-first search.
    pub fn is_connected_bfs(&self) -> bool {
        if self.vertices <= 1 {
            return true;
        }
        let nbrs = self.neighbors();
        let mut seen = vec![false; self.vertices];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &nbrs[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Global communication graph over all players plus one graph per cluster.
/// Vertices of the global graph use cluster-major global indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub global: UndirectedGraph,
    pub clusters: Vec<UndirectedGraph>,
}

impl TopologySpec {
    pub fn new(global: UndirectedGraph, clusters: Vec<UndirectedGraph>) -> Self {
        Self { global, clusters }
    }

    pub fn cluster_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.clusters
            .iter()
            .map(|g| {
                let o = acc;
                acc += g.vertices;
                o
            })
            .collect()
    }

    /// Collects every structural and connectivity problem.
    pub fn validation_errors(&self, cluster_sizes: &[usize]) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.global.validate() {
            errs.push(format!("global graph: {e}"));
        }
        for (j, g) in self.clusters.iter().enumerate() {
            if let Err(e) = g.validate() {
                errs.push(format!("cluster {j} graph: {e}"));
            }
        }
        if self.clusters.len() != cluster_sizes.len() {
            errs.push(format!(
                "topology has {} cluster graphs but the game has {} clusters",
                self.clusters.len(),
                cluster_sizes.len()
            ));
            return errs;
        }
        let total: usize = cluster_sizes.iter().sum();
        if self.global.vertices != total {
            errs.push(format!(
                "global graph has {} vertices but the game has {total} players",
                self.global.vertices
            ));
        }
        for (j, (g, &n)) in self.clusters.iter().zip(cluster_sizes).enumerate() {
            if g.vertices != n {
                errs.push(format!("cluster {j} graph has {} vertices but the cluster has {n} players", g.vertices));
            }
        }
        if !errs.is_empty() {
            return errs;
        }
        for (j, (g, offset)) in self.clusters.iter().zip(self.cluster_offsets()).enumerate() {
            for e in &g.edges {
                let w = self.global.weight(offset + e.i, offset + e.j);
                if w != e.w {
                    errs.push(format!(
                        "cluster {j} edge ({}, {}) with weight {} is not in the global graph as ({}, {}) with the same weight",
                        e.i,
                        e.j,
                        e.w,
                        offset + e.i,
                        offset + e.j
                    ));
                }
            }
            if !g.is_connected() {
                errs.push(format!("cluster {j} graph disconnected"));
            }
        }
        if !self.global.is_connected() {
            errs.push("global graph disconnected".into());
        }
        errs
    }

    pub fn validate(&self, cluster_sizes: &[usize]) -> Result<(), GraphError> {
        let errs = self.validation_errors(cluster_sizes);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(GraphError::Topology(errs.join("; ")))
        }
    }

    /// `𝐋 = diag(L¹, …, L^N)`
    pub fn block_cluster_laplacian(&self) -> DMatrix<f64> {
        let total: usize = self.clusters.iter().map(|g| g.vertices).sum();
        let mut out = DMatrix::zeros(total, total);
        for (g, offset) in self.clusters.iter().zip(self.cluster_offsets()) {
            out.view_mut((offset, offset), (g.vertices, g.vertices)).copy_from(&g.laplacian());
        }
        out
    }

    /// `S = 𝓛⊗I_N̄ + M`, indexed by (observer, target) pairs, observer-major.
    pub fn estimator_operator(&self) -> DMatrix<f64> {
        let n = self.global.vertices;
        let lap = self.global.laplacian();
        let adj = self.global.adjacency();
        let mut s = DMatrix::zeros(n * n, n * n);
        for o in 0..n {
            for o2 in 0..n {
                let l = lap[(o, o2)];
                if l != 0.0 {
                    for t in 0..n {
                        s[(o * n + t, o2 * n + t)] = l;
                    }
                }
            }
            for t in 0..n {
                s[(o * n + t, o * n + t)] += adj[(o, t)];
            }
        }
        s
    }

    /// Estimator operator together with its extreme eigenvalues; fails if it is not positive definite.
    pub fn estimator_spectrum(&self) -> Result<EstimatorSpectrum, GraphError> {
        let s = self.estimator_operator();
        let eig = sorted_eigenvalues(&s);
        let lambda_min = eig.first().copied().unwrap_or(0.0);
        let lambda_max = eig.last().copied().unwrap_or(0.0);
        if lambda_min <= CONNECTIVITY_TOL {
            return Err(GraphError::SingularOperator(lambda_min));
        }
        Ok(EstimatorSpectrum { operator: s, lambda_min, lambda_max })
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorSpectrum {
    pub operator: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_vertex_laplacian() {
        let g = UndirectedGraph::path(2);
        assert_eq!(g.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert!((g.algebraic_connectivity().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn edgeless_graph() {
        let g = UndirectedGraph::new(3, vec![]).unwrap();
        assert_eq!(g.laplacian(), DMatrix::zeros(3, 3));
        let g2 = UndirectedGraph::new(2, vec![]).unwrap();
        assert!(g2.algebraic_connectivity().unwrap().abs() < 1e-12);
        assert!(!g2.is_connected());
    }

    #[test]
    fn too_few_vertices() {
        let g = UndirectedGraph::new(1, vec![]).unwrap();
        assert_eq!(g.algebraic_connectivity(), Err(GraphError::TooFewVertices(1)));
        assert!(g.is_connected());
    }

    #[test]
    fn bad_edges() {
        assert!(UndirectedGraph::from_unit_edges(2, &[(0, 0)]).is_err());
        assert!(UndirectedGraph::from_unit_edges(2, &[(0, 2)]).is_err());
        assert!(UndirectedGraph::from_unit_edges(2, &[(0, 1), (1, 0)]).is_err());
        assert!(UndirectedGraph::new(2, vec![Edge { i: 0, j: 1, w: 0.0 }]).is_err());
    }

    #[test]
    fn block_laplacian_sizes_one_and_two() {
        let t = TopologySpec::new(
            UndirectedGraph::from_unit_edges(3, &[(0, 1), (1, 2)]).unwrap(),
            vec![UndirectedGraph::new(1, vec![]).unwrap(), UndirectedGraph::path(2)],
        );
        t.validate(&[1, 2]).unwrap();
        let l = t.block_cluster_laplacian();
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l, want);
    }

    #[test]
    fn subgraph_violation_names_edge() {
        let t = TopologySpec::new(UndirectedGraph::from_unit_edges(3, &[(0, 1), (0, 2)]).unwrap(), vec![
            UndirectedGraph::new(1, vec![]).unwrap(),
            UndirectedGraph::path(2),
        ]);
        let errs = t.validation_errors(&[1, 2]);
        assert!(errs.iter().any(|e| e.contains("cluster 1 edge (0, 1)")), "{errs:?}");
    }

    #[test]
    fn single_player_operator_is_singular() {
        let t = TopologySpec::new(UndirectedGraph::new(1, vec![]).unwrap(), vec![UndirectedGraph::new(1, vec![]).unwrap()]);
        assert_eq!(t.estimator_operator(), DMatrix::zeros(1, 1));
        assert!(matches!(t.estimator_spectrum(), Err(GraphError::SingularOperator(_))));
    }
}
