use log::warn;
use nalgebra::DMatrix;

use crate::data::CurveEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{components, nearest_from_distances, pairwise_distances};

/// Undirected neighbor graph whose edges carry the L2 distance between the
/// curves they join.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    node_count: usize,
    /// `(i, j, length)` with `i < j`, sorted.
    edges: Vec<(usize, usize, f64)>,
    connected: bool,
}

impl NeighborGraph {
    /// Builds a graph from explicit edges. Self-loops, non-positive lengths and
    /// out-of-range nodes are rejected; repeated edges keep the first length.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Input(format!("edge ({a}, {b}) outside {node_count} nodes")));
            }
            if a == b {
                return Err(Error::Input(format!("self-loop at node {a}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Input(format!("edge ({a}, {b}) has length {w}")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !out.iter().any(|e| e.0 == i && e.1 == j) {
                out.push((i, j, w));
            }
        }
        out.sort_by_key(|e| (e.0, e.1));
        let mut g = Self {
            node_count,
            edges: out,
            connected: false,
        };
        g.connected = g.component_labels().iter().all(|&c| c == 0);
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(i, j, _) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn component_labels(&self) -> Vec<usize> {
        components(&self.adjacency())
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().iter().max().map_or(0, |m| m + 1)
    }
}

/// Symmetrized k-nearest-neighbor graph: `(i, j)` is an edge when either is
/// among the other's `k` nearest curves.
pub fn build_knn_graph(curves: &CurveEnsemble, k: usize) -> Result<NeighborGraph> {
    let n = curves.runs();
    if k < 1 || k >= n {
        return Err(Error::Input(format!("neighbor count k={k} must satisfy 1 <= k < n={n}")));
    }
    let dist = pairwise_distances(curves.values());
    for i in 0..n {
        for j in (i + 1)..n {
            if dist[(i, j)] == 0.0 {
                warn!("curves {} and {} coincide; merge duplicates before graph building", i + 1, j + 1);
                return Err(Error::Degenerate(format!(
                    "curves {} and {} are identical",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in nearest_from_distances(&dist, i, k) {
            edges.push((i, j, dist[(i, j)]));
        }
    }
    NeighborGraph::from_edges(n, &edges)
}

/// Edge weights used for the graph Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every edge has weight 1.
    Unit,
    /// `exp(-d^2 / s2)` with `s2` the mean squared edge length.
    #[default]
    Gaussian,
}

fn laplacian_weights(g: &NeighborGraph, weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Unit => vec![1.0; g.edges.len()],
        Weighting::Gaussian => {
            let s2 = g.edges.iter().map(|e| e.2 * e.2).sum::<f64>() / g.edges.len() as f64;
            g.edges.iter().map(|e| (-e.2 * e.2 / s2).exp()).collect()
        }
    }
}

/// Expected round-trip times of a random walk, `vol(G) * (L+_ii + L+_jj -
/// 2 L+_ij)`, computed per connected component. Pairs in different
/// components get `+inf`.
pub fn commute_time_distances(g: &NeighborGraph, weighting: Weighting) -> Result<DMatrix<f64>> {
    let n = g.node_count;
    if n == 0 || g.edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let weights = laplacian_weights(g, weighting);
    let comp = g.component_labels();
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let mut ct = DMatrix::from_element(n, n, f64::INFINITY);
    for c in 0..n_comp {
        let nodes: Vec<usize> = (0..n).filter(|&i| comp[i] == c).collect();
        let m = nodes.len();
        let mut local = vec![usize::MAX; n];
        for (a, &i) in nodes.iter().enumerate() {
            local[i] = a;
        }
        let mut lap = DMatrix::zeros(m, m);
        for (e, &(i, j, _)) in g.edges.iter().enumerate() {
            if comp[i] != c {
                continue;
            }
            let (a, b) = (local[i], local[j]);
            let w = weights[e];
            lap[(a, a)] += w;
            lap[(b, b)] += w;
            lap[(a, b)] -= w;
            lap[(b, a)] -= w;
        }
        let volume: f64 = lap.diagonal().sum();
        // L+ = (L + J/m)^-1 - J/m on a connected component.
        let shift = 1.0 / m as f64;
        let shifted = lap.add_scalar(shift);
        let inv = shifted
            .clone()
            .cholesky()
            .map(|ch| ch.inverse())
            .or_else(|| shifted.try_inverse())
            .ok_or_else(|| Error::Degenerate("graph Laplacian could not be inverted".into()))?;
        let pinv = inv.add_scalar(-shift);
        for a in 0..m {
            ct[(nodes[a], nodes[a])] = 0.0;
            for b in (a + 1)..m {
                let v = (volume * (pinv[(a, a)] + pinv[(b, b)] - 2.0 * pinv[(a, b)])).max(0.0);
                ct[(nodes[a], nodes[b])] = v;
                ct[(nodes[b], nodes[a])] = v;
            }
        }
    }
    Ok(ct)
}
