use std::collections::VecDeque;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{components, dijkstra, nearest_from_distances, pairwise_distances};

/// Neighborhood graph used to propagate manifold coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RmlGraph {
    /// Visible neighbors of every node, nearest first, after pruning.
    pub neighbors: Vec<Vec<usize>>,
    /// Undirected weighted adjacency, neighbors ascending.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub base_index: usize,
    /// Sum of shortest-path distances from every node to all others.
    pub distance_sums: Vec<f64>,
    /// Traversal order starting at the base.
    pub bfs_order: Vec<usize>,
    /// Shortest-path predecessor; the base has none and every graph
    /// neighbor of the base points at it.
    pub predecessor: Vec<Option<usize>>,
    pub pruned_edges: usize,
}

impl RmlGraph {
    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Graph neighbors of the base.
    pub fn first_ring(&self) -> Vec<usize> {
        self.adjacency[self.base_index].iter().map(|e| e.0).collect()
    }
}

fn visible(center: &[f64], retained: &[&[f64]], candidate: &[f64]) -> bool {
    retained.iter().all(|l| {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for t in 0..center.len() {
            let a = center[t] - l[t];
            let b = candidate[t] - l[t];
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        // Angle at the retained neighbor is at most pi/2, boundary included.
        dot >= -1e-12 * (na * nb).sqrt()
    })
}

/// Greedy visibility pass over neighbors sorted by distance to `center`:
/// a candidate survives when no retained neighbor eclipses it, i.e. the
/// angle at every retained neighbor between the center and the candidate is
/// at most a right angle. Returns indices into `neighbors`.
pub fn visibility_filter(center: &DVector<f64>, neighbors: &[DVector<f64>]) -> Result<Vec<usize>> {
    for (i, y) in neighbors.iter().enumerate() {
        if y.len() != center.len() {
            return Err(Error::Shape(format!("neighbor {i} has length {}", y.len())));
        }
        if (y - center).norm() == 0.0 {
            return Err(Error::Degenerate(format!("neighbor {i} coincides with the center")));
        }
    }
    let c = center.as_slice();
    let mut kept: Vec<usize> = Vec::new();
    for (i, y) in neighbors.iter().enumerate() {
        let retained: Vec<&[f64]> = kept.iter().map(|&l| neighbors[l].as_slice()).collect();
        if kept.is_empty() || visible(c, &retained, y.as_slice()) {
            kept.push(i);
        }
    }
    Ok(kept)
}

fn rows_as_vecs(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn connected_without(adj: &[Vec<usize>], a: usize, b: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([a]);
    seen[a] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if (u == a && v == b) || (u == b && v == a) || seen[v] {
                continue;
            }
            if v == b {
                return true;
            }
            seen[v] = true;
            queue.push_back(v);
        }
    }
    false
}

/// Node minimizing the sum of shortest-path distances, lowest index on ties,
/// together with all the sums.
pub(crate) fn graph_center(adjacency: &[Vec<(usize, f64)>]) -> (usize, Vec<f64>) {
    let sums: Vec<f64> = (0..adjacency.len())
        .map(|s| dijkstra(adjacency, s).0.iter().sum())
        .collect();
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    (best, sums)
}

/// kNN graph of the curves, visibility-filtered per neighborhood, with long
/// edges (longer than mean + 2 sd of the retained lengths) removed unless
/// that would split the graph. The base is the graph center.
pub fn build_rml_graph(curves: &DMatrix<f64>, k: usize) -> Result<RmlGraph> {
    let n = curves.nrows();
    if k < 2 || k >= n {
        return Err(Error::Input(format!("RML neighbor count k={k} must satisfy 2 <= k < n={n}")));
    }
    let dist = pairwise_distances(curves);
    let rows = rows_as_vecs(curves);
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let cand = nearest_from_distances(&dist, i, k);
        if let Some(&j) = cand.iter().find(|&&j| dist[(i, j)] == 0.0) {
            return Err(Error::Degenerate(format!(
                "curves {} and {} are identical",
                i + 1,
                j + 1
            )));
        }
        let mut kept: Vec<usize> = Vec::new();
        for &j in &cand {
            let retained: Vec<&[f64]> = kept.iter().map(|&l| rows[l].as_slice()).collect();
            if kept.is_empty() || visible(&rows[i], &retained, &rows[j]) {
                kept.push(j);
            }
        }
        neighbors.push(kept);
    }

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in &neighbors[i] {
            if !adj[i].contains(&j) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for &j in &adj[i] {
            if i < j {
                edges.push((i, j));
            }
        }
    }
    let lengths: Vec<f64> = edges.iter().map(|&(i, j)| dist[(i, j)]).collect();
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / lengths.len() as f64;
    let cutoff = mean + 2.0 * var.sqrt();
    let mut long: Vec<(usize, usize)> = edges.iter().copied().filter(|&(i, j)| dist[(i, j)] > cutoff).collect();
    long.sort_by(|a, b| dist[(b.0, b.1)].total_cmp(&dist[(a.0, a.1)]).then(a.cmp(b)));
    let mut pruned = 0;
    for (i, j) in long {
        if connected_without(&adj, i, j) {
            adj[i].retain(|&v| v != j);
            adj[j].retain(|&v| v != i);
            neighbors[i].retain(|&v| v != j);
            neighbors[j].retain(|&v| v != i);
            pruned += 1;
        }
    }
    debug!("pruned {pruned} long edges above {cutoff:.6e}");

    let comp = components(&adj);
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    if n_comp > 1 {
        let mut sizes = vec![0usize; n_comp];
        for &c in &comp {
            sizes[c] += 1;
        }
        let main = (0..n_comp).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap_or(0);
        let stranded: Vec<String> = (0..n).filter(|&i| comp[i] != main).map(|i| (i + 1).to_string()).collect();
        let shown = stranded.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        let more = if stranded.len() > 20 { format!(" and {} more", stranded.len() - 20) } else { String::new() };
        return Err(Error::Connectivity(format!(
            "neighbor graph is disconnected; curves {shown}{more} cannot be reached from the base (try a larger k)"
        )));
    }

    let mut adjacency: Vec<Vec<(usize, f64)>> = adj
        .iter()
        .enumerate()
        .map(|(i, list)| list.iter().map(|&j| (j, dist[(i, j)])).collect())
        .collect();
    for list in &mut adjacency {
        list.sort_by_key(|e| e.0);
    }
    let (base, distance_sums) = graph_center(&adjacency);
    let (_, pred) = dijkstra(&adjacency, base);
    let mut predecessor = pred;
    for &(j, _) in &adjacency[base] {
        predecessor[j] = Some(base);
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        if let Some(p) = predecessor[v] {
            children[p].push(v);
        }
    }
    let mut bfs_order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([base]);
    while let Some(u) = queue.pop_front() {
        bfs_order.push(u);
        queue.extend(children[u].iter().copied());
    }
    Ok(RmlGraph {
        neighbors,
        adjacency,
        base_index: base,
        distance_sums,
        bfs_order,
        predecessor,
        pruned_edges: pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn single_neighbor_is_kept() {
        assert_eq!(visibility_filter(&v(&[0.0, 0.0]), &[v(&[1.0, 2.0])]).unwrap(), vec![0]);
    }

    #[test]
    fn collinear_neighbor_is_eclipsed() {
        let kept = visibility_filter(&v(&[0.0, 0.0]), &[v(&[1.0, 0.0]), v(&[2.0, 0.0])]).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn right_angle_is_visible() {
        let kept = visibility_filter(&v(&[0.0, 0.0]), &[v(&[1.0, 0.0]), v(&[1.0, 1.0])]).unwrap();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn coincident_neighbor_is_rejected() {
        assert!(matches!(
            visibility_filter(&v(&[1.0, 0.0]), &[v(&[1.0, 0.0])]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn path_base_is_the_middle() {
        let pts = DMatrix::from_fn(5, 2, |i, j| if j == 0 { i as f64 } else { 0.0 });
        let g = build_rml_graph(&pts, 2).unwrap();
        assert_eq!(g.base_index, 2);
        assert_eq!(g.pruned_edges, 0);
        assert_eq!(g.bfs_order[0], 2);
        let mut ring = g.first_ring();
        ring.sort_unstable();
        assert_eq!(ring, vec![1, 3]);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let pts = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let g = build_rml_graph(&pts, 2).unwrap();
        assert_eq!(g.distance_sums[1], g.distance_sums[2]);
        assert_eq!(g.base_index, 1);
    }

    #[test]
    fn distance_sums_match_floyd_warshall() {
        let mut rng = seeded(12);
        let pts = DMatrix::from_fn(12, 3, |_, _| rng.random::<f64>());
        let g = build_rml_graph(&pts, 5).unwrap();
        let n = 12;
        let mut fw = DMatrix::from_element(n, n, f64::INFINITY);
        for i in 0..n {
            fw[(i, i)] = 0.0;
            for &(j, w) in &g.adjacency[i] {
                fw[(i, j)] = w;
            }
        }
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = fw[(i, m)] + fw[(m, j)];
                    if via < fw[(i, j)] {
                        fw[(i, j)] = via;
                    }
                }
            }
        }
        for i in 0..n {
            let s: f64 = fw.row(i).sum();
            assert!((s - g.distance_sums[i]).abs() < 1e-12 * s);
        }
    }

    #[test]
    fn retained_neighbors_are_visible_and_order_respects_predecessors() {
        let mut rng = seeded(13);
        let pts = DMatrix::from_fn(60, 2, |_, _| rng.random::<f64>());
        let g = build_rml_graph(&pts, 8).unwrap();
        let rows = rows_as_vecs(&pts);
        for i in 0..60 {
            let list = &g.neighbors[i];
            for (pos, &j) in list.iter().enumerate() {
                let retained: Vec<&[f64]> = list[..pos].iter().map(|&l| rows[l].as_slice()).collect();
                assert!(visible(&rows[i], &retained, &rows[j]));
            }
        }
        let mut position = vec![0; 60];
        for (p, &v) in g.bfs_order.iter().enumerate() {
            position[v] = p;
        }
        assert_eq!(g.bfs_order.len(), 60);
        for v in 0..60 {
            if let Some(p) = g.predecessor[v] {
                assert!(position[p] < position[v]);
                assert!(g.adjacency[v].iter().any(|e| e.0 == p));
            }
        }
    }

    #[test]
    fn separated_groups_are_reported() {
        let pts = DMatrix::from_row_slice(6, 1, &[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]);
        let err = build_rml_graph(&pts, 2).unwrap_err();
        assert!(matches!(err, Error::Connectivity(_)));
        assert!(err.to_string().contains("4, 5, 6") || err.to_string().contains("1, 2, 3"));
    }
}
