use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One agglomeration step. Cluster ids below `n` are singletons; the cluster
/// created by step `s` has id `n + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Hard partition of the curves plus the dendrogram it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Labels in `0..k`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub k: usize,
    pub merges: Vec<Merge>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }
}

fn check_distances(dist: &DMatrix<f64>) -> Result<()> {
    let n = dist.nrows();
    if n == 0 || dist.ncols() != n {
        return Err(Error::Validation(format!(
            "distance matrix must be square and non-empty, got {}x{}",
            n,
            dist.ncols()
        )));
    }
    for i in 0..n {
        if dist[(i, i)] != 0.0 {
            return Err(Error::Validation(format!("distance diagonal entry {} is {}", i + 1, dist[(i, i)])));
        }
        for j in (i + 1)..n {
            let (a, b) = (dist[(i, j)], dist[(j, i)]);
            if a.is_nan() || a < 0.0 {
                return Err(Error::Validation(format!("distance ({}, {}) is {a}", i + 1, j + 1)));
            }
            let same = a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
            if !same {
                return Err(Error::Validation(format!(
                    "distance matrix is not symmetric at ({}, {}): {a} vs {b}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Lance-Williams update for Ward linkage on squared distances. Infinite
/// inputs stay infinite.
fn ward_update(dki: f64, dkj: f64, dij: f64, ni: f64, nj: f64, nk: f64) -> f64 {
    if dki.is_infinite() || dkj.is_infinite() {
        return f64::INFINITY;
    }
    (((ni + nk) * dki + (nj + nk) * dkj - nk * dij) / (ni + nj + nk)).max(0.0)
}

/// Full Ward dendrogram. Merges the closest pair at each step, ties going to
/// the lowest slot pair; heights are square roots of the merge distances.
pub fn ward_dendrogram(dist: &DMatrix<f64>) -> Result<Vec<Merge>> {
    check_distances(dist)?;
    let n = dist.nrows();
    let mut d2 = dist.map(|v| v * v);
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let v = d2[(i, j)];
                if v < best.0 || best.1 == usize::MAX {
                    best = (v, i, j);
                }
            }
        }
        let (v, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let u = ward_update(d2[(k, i)], d2[(k, j)], v, ni, nj, size[k] as f64);
            d2[(k, i)] = u;
            d2[(i, k)] = u;
        }
        merges.push(Merge {
            left: id[i].min(id[j]),
            right: id[i].max(id[j]),
            height: v.sqrt(),
            size: size[i] + size[j],
        });
        size[i] += size[j];
        id[i] = n + step;
        active.retain(|&k| k != j);
    }
    Ok(merges)
}

/// Labels obtained by applying the first `n - k` merges.
pub fn cut_dendrogram(n: usize, merges: &[Merge], k: usize) -> Result<Vec<usize>> {
    if k < 1 || k > n || merges.len() + 1 < n {
        return Err(Error::Input(format!("cannot cut {n} items into {k} clusters")));
    }
    // Union-find over cluster ids.
    let mut parent: Vec<usize> = (0..n + merges.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, m) in merges.iter().take(n - k).enumerate() {
        parent[m.left] = n + s;
        parent[m.right] = n + s;
    }
    let mut map = std::collections::HashMap::new();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let root = find(&mut parent, i);
        let next = map.len();
        labels.push(*map.entry(root).or_insert(next));
    }
    Ok(labels)
}

/// Ward agglomerative clustering of a distance matrix cut at `k` clusters.
pub fn ward_cluster(dist: &DMatrix<f64>, k: usize) -> Result<Clustering> {
    let n = dist.nrows();
    if k < 1 || k > n {
        return Err(Error::Input(format!("cluster count {k} must lie in 1..={n}")));
    }
    let merges = ward_dendrogram(dist)?;
    let labels = cut_dendrogram(n, &merges, k)?;
    Ok(Clustering { labels, k, merges })
}
