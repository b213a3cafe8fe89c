//! Principal component analysis of discretized curves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::{CenteredEnsemble, CurveEnsemble};
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero rank.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Eigen-decomposition of `Yc' Yc` restricted to its numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDecomposition {
    /// Descending, strictly positive.
    pub eigenvalues: Vec<f64>,
    /// `T x r`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    /// `n x r`, `Yc * eigenvectors`.
    pub scores: DMatrix<f64>,
    pub column_means: DVector<f64>,
    pub total_inertia: f64,
}

impl PcaDecomposition {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn time_steps(&self) -> usize {
        self.column_means.len()
    }

    /// `lambda_k / I` for every retained component.
    pub fn inertia_shares(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| if self.total_inertia > 0.0 { l / self.total_inertia } else { 0.0 })
            .collect()
    }
}

/// Decomposes a centered ensemble. Works on the `T x T` cross-product when
/// `T <= n` and on the `n x n` Gram matrix otherwise.
pub fn pca_decompose(c: &CenteredEnsemble) -> Result<PcaDecomposition> {
    let yc = &c.centered;
    let (n, t) = yc.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 runs, got {n}")));
    }

    let (eigenvalues, mut vectors) = if t <= n {
        let cross = yc.transpose() * yc;
        let (vals, vecs) = sorted_eigen(cross);
        let r = retained(&vals);
        (vals[..r].to_vec(), vecs.columns(0, r).into_owned())
    } else {
        let gram = yc * yc.transpose();
        let (vals, vecs) = sorted_eigen(gram);
        let r = retained(&vals);
        let mut l = yc.transpose() * vecs.columns(0, r);
        for (k, mut col) in l.column_iter_mut().enumerate() {
            col /= vals[k].sqrt();
        }
        // Back-transformed vectors of small eigenvalues drift from
        // orthogonality; re-orthonormalize in order.
        gram_schmidt(&mut l);
        (vals[..r].to_vec(), l)
    };

    for mut col in vectors.column_iter_mut() {
        let mut arg = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[arg].abs() {
                arg = i;
            }
        }
        if col[arg] < 0.0 {
            col.neg_mut();
        }
    }
    let scores = yc * &vectors;
    Ok(PcaDecomposition {
        eigenvalues,
        eigenvectors: vectors,
        scores,
        column_means: c.column_means.clone(),
        total_inertia: c.total_inertia,
    })
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn retained(vals: &[f64]) -> usize {
    match vals.first() {
        Some(&top) if top > 0.0 => vals.iter().take_while(|&&v| v > EIGEN_FLOOR * top).count(),
        _ => 0,
    }
}

pub(crate) fn gram_schmidt(m: &mut DMatrix<f64>) {
    for k in 0..m.ncols() {
        for j in 0..k {
            let proj = m.column(j).dot(&m.column(k));
            let cj = m.column(j).into_owned();
            m.column_mut(k).axpy(-proj, &cj, 1.0);
        }
        let norm = m.column(k).norm();
        if norm > 0.0 {
            m.column_mut(k).unscale_mut(norm);
        }
    }
}

/// Smallest `T0` whose cumulative inertia reaches `x_percent` of the total.
pub fn truncate_components(pca: &PcaDecomposition, x_percent: f64) -> Result<usize> {
    if !(x_percent > 0.0 && x_percent <= 100.0) {
        return Err(Error::Input(format!("percentage {x_percent} outside (0, 100]")));
    }
    let total = pca.total_inertia;
    if total <= 0.0 || pca.rank() == 0 {
        return Err(Error::Degenerate("total inertia is zero".into()));
    }
    let target = x_percent / 100.0 * total - 1e-12 * total;
    let mut cumulative = 0.0;
    for (k, l) in pca.eigenvalues.iter().enumerate() {
        cumulative += l;
        if cumulative >= target {
            return Ok(k + 1);
        }
    }
    Ok(pca.rank())
}

/// `scores * L[:, ..t0]' + means`, one curve per row of `scores`.
pub fn reconstruct_from_scores(pca: &PcaDecomposition, scores: &DMatrix<f64>, t0: usize) -> Result<DMatrix<f64>> {
    if t0 > pca.rank() {
        return Err(Error::Shape(format!("T0={t0} exceeds rank {}", pca.rank())));
    }
    if scores.ncols() != t0 {
        return Err(Error::Shape(format!(
            "scores have {} columns, expected {t0}",
            scores.ncols()
        )));
    }
    let mut out = scores * pca.eigenvectors.columns(0, t0).transpose();
    for mut row in out.row_iter_mut() {
        row += pca.column_means.transpose();
    }
    Ok(out)
}

/// Pearson correlation between each of the first `k_max` score columns and
/// every output column. Constant columns correlate as 0.
pub fn pc_correlations(pca: &PcaDecomposition, curves: &CurveEnsemble, k_max: usize) -> Result<DMatrix<f64>> {
    if k_max > pca.rank() {
        return Err(Error::Shape(format!("k_max={k_max} exceeds rank {}", pca.rank())));
    }
    let y = curves.values();
    if y.nrows() != pca.scores.nrows() {
        return Err(Error::Shape("curves and scores differ in run count".into()));
    }
    let centered_cols = |m: &DMatrix<f64>| -> Vec<(DVector<f64>, f64)> {
        m.column_iter()
            .map(|c| {
                let mean = c.mean();
                let v = c.map(|x| x - mean).into_owned();
                let norm = v.norm();
                (v, norm)
            })
            .collect()
    };
    let ys = centered_cols(y);
    let hs = centered_cols(&pca.scores.columns(0, k_max).into_owned());
    Ok(DMatrix::from_fn(k_max, y.ncols(), |k, t| {
        let (h, hn) = &hs[k];
        let (yt, yn) = &ys[t];
        if *hn <= 0.0 || *yn <= 1e-12 * (1.0 + yt.amax()) * (y.nrows() as f64).sqrt() {
            0.0
        } else {
            (h.dot(yt) / (hn * yn)).clamp(-1.0, 1.0)
        }
    }))
}
