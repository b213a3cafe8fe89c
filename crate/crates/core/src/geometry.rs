//! Small distance and graph helpers shared by the clustering, manifold and
//! metamodel code.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use nalgebra::{DMatrix, DVector};

/// Euclidean distances between the rows of `m`.
pub fn pairwise_distances(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let rows: Vec<DVector<f64>> = m.row_iter().map(|r| r.transpose()).collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (&rows[i] - &rows[j]).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Indices of the `k` nearest other rows of `i`, nearest first, ties by
/// index.
pub fn nearest_from_distances(dist: &DMatrix<f64>, i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..dist.nrows()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
    others.truncate(k);
    others
}

/// `k` nearest rows of `points` to `query`, with their distances.
pub fn nearest_to(points: &DMatrix<f64>, query: &DVector<f64>, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .row_iter()
        .enumerate()
        .map(|(i, r)| {
            let d: f64 = r.iter().zip(query.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            (i, d.sqrt())
        })
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Groups of identical rows. Returns the representative (first) row of each
/// group and, for every row, the index of its group.
pub fn dedup_rows(m: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut reps: Vec<usize> = Vec::new();
    let mut group = vec![0; m.nrows()];
    'rows: for i in 0..m.nrows() {
        for (g, &r) in reps.iter().enumerate() {
            if m.row(i) == m.row(r) {
                group[i] = g;
                continue 'rows;
            }
        }
        group[i] = reps.len();
        reps.push(i);
    }
    (reps, group)
}

/// Connected components of an undirected adjacency list, labelled in order of
/// their smallest node.
pub fn components(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    comp
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Single-source shortest paths over a weighted adjacency list. Unreachable
/// nodes get infinite distance and no predecessor.
pub fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = adjacency.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem(0.0, source));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adjacency[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(HeapItem(nd, v));
            }
        }
    }
    (dist, pred)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dijkstra_on_small_graph() {
        let adj = vec![
            vec![(1, 1.0), (2, 4.0)],
            vec![(0, 1.0), (2, 1.5)],
            vec![(0, 4.0), (1, 1.5)],
            vec![],
        ];
        let (d, p) = dijkstra(&adj, 0);
        assert_eq!(d[..3], [0.0, 1.0, 2.5]);
        assert!(d[3].is_infinite());
        assert_eq!(p[2], Some(1));
    }

    #[test]
    fn dedup_groups_identical_rows() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 5.0, 6.0]);
        let (reps, group) = dedup_rows(&m);
        assert_eq!(reps, vec![0, 1, 3]);
        assert_eq!(group, vec![0, 1, 0, 2]);
    }
}
