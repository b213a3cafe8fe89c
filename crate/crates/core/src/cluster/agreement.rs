//! Label matching and the nearest-centroid transfer used by the stability
//! estimate.

use nalgebra::{DMatrix, DVector};

/// Minimum-cost perfect assignment for a square cost matrix (Hungarian
/// method). Returns `assign[row] = col`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    let inf = f64::INFINITY;
    // 1-based potentials and matching, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Fraction of items on which two labelings agree after the best one-to-one
/// renaming of the labels.
pub fn matched_agreement(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 1.0;
    }
    let k = a.iter().chain(b).max().map_or(0, |m| m + 1);
    let mut counts = DMatrix::<f64>::zeros(k, k);
    for (&x, &y) in a.iter().zip(b) {
        counts[(x, y)] += 1.0;
    }
    let assign = min_cost_assignment(&counts.map(|c| -c));
    let hits: f64 = assign.iter().enumerate().map(|(r, &c)| counts[(r, c)]).sum();
    hits / a.len() as f64
}

/// Adjusted Rand index of two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = DMatrix::<f64>::zeros(ka, kb);
    for (&x, &y) in a.iter().zip(b) {
        table[(x, y)] += 1.0;
    }
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let index: f64 = table.iter().map(|&x| c2(x)).sum();
    let rows: f64 = table.row_iter().map(|r| c2(r.sum())).sum();
    let cols: f64 = table.column_iter().map(|c| c2(c.sum())).sum();
    let total = c2(a.len() as f64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Classifier that assigns each point to the closest class mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    centroids: Vec<DVector<f64>>,
}

impl NearestCentroid {
    /// Means of the rows of `points` per label. Labels must be `0..k` with
    /// every label used.
    pub fn fit(points: &DMatrix<f64>, labels: &[usize]) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut sums = vec![DVector::zeros(points.ncols()); k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += points.row(i).transpose();
            counts[l] += 1;
        }
        let centroids = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| s / c.max(1) as f64)
            .collect();
        Self { centroids }
    }

    pub fn centroids(&self) -> &[DVector<f64>] {
        &self.centroids
    }

    /// Closest centroid; ties go to the lower label.
    pub fn predict(&self, x: &DVector<f64>) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (l, c) in self.centroids.iter().enumerate() {
            let d = (x - c).norm_squared();
            if d < best.0 {
                best = (d, l);
            }
        }
        best.1
    }

    pub fn predict_rows(&self, points: &DMatrix<f64>) -> Vec<usize> {
        points.row_iter().map(|r| self.predict(&r.transpose())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn brute_force_min(cost: &DMatrix<f64>) -> f64 {
        fn rec(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.nrows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cost.ncols() {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[(row, c)] + rec(cost, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost.ncols()])
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = seeded(21);
        for n in 1..7 {
            let cost = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0));
            let assign = min_cost_assignment(&cost);
            let total: f64 = assign.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum();
            assert!((total - brute_force_min(&cost)).abs() < 1e-12);
            let mut seen = assign.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn agreement_ignores_label_names() {
        assert_eq!(matched_agreement(&[0, 0, 1, 1, 2], &[2, 2, 0, 0, 1]), 1.0);
        assert!((matched_agreement(&[0, 0, 1, 1], &[0, 1, 1, 1]) - 0.75).abs() < 1e-15);
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_labels_have_low_ari() {
        let mut rng = seeded(2);
        let mut a: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let b = a.clone();
        a.shuffle(&mut rng);
        assert!(adjusted_rand_index(&a, &b).abs() < 0.05);
    }

    #[test]
    fn nearest_centroid_on_two_groups() {
        let pts = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 10.0, 11.0]);
        let nc = NearestCentroid::fit(&pts, &[0, 0, 1, 1]);
        assert_eq!(nc.predict(&DVector::from_vec(vec![2.0])), 0);
        assert_eq!(nc.predict(&DVector::from_vec(vec![9.0])), 1);
        assert_eq!(nc.predict(&DVector::from_vec(vec![5.5])), 0);
    }
}
