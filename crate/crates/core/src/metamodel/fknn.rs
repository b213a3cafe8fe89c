//! Functional k-nearest-neighbors: a Gaussian-weighted mean of the curves of
//! the closest training inputs, with a bandwidth local to each neighbor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{nearest_from_distances, nearest_to, pairwise_distances};

/// Logarithmic mean of the squared distances to the nearest and farthest
/// of a sorted neighbor list; `d1^2` when they coincide.
pub fn local_sigma(sorted_distances: &[f64]) -> Result<f64> {
    let (Some(&d1), Some(&dk)) = (sorted_distances.first(), sorted_distances.last()) else {
        return Err(Error::Input("local bandwidth needs at least one neighbor distance".into()));
    };
    if !(d1 > 0.0) {
        return Err(Error::Degenerate(
            "nearest neighbor at distance 0; merge duplicate inputs first".into(),
        ));
    }
    let (a, b) = (d1 * d1, dk * dk);
    if a == b {
        return Ok(a);
    }
    Ok((b - a) / (b.ln() - a.ln()))
}

/// Candidate neighbor counts tried when `k` is chosen by cross-validation.
pub fn fknn_k_grid(m: usize) -> Vec<usize> {
    let mut grid = vec![1, 2, 3, 5, 8, 13, (m as f64).sqrt().ceil() as usize];
    grid.retain(|&k| k >= 1 && k < m);
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Normalized weights `exp(-||x - x_j||^2 / sigma_j^2)` over the given
/// neighbors, computed in log space.
pub fn fknn_weights(squared_distances: &[f64], sigmas: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = squared_distances
        .iter()
        .zip(sigmas)
        .map(|(d2, s)| -d2 / (s * s))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Fitted predictor on (already scaled) inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Fknn {
    pub inputs: DMatrix<f64>,
    pub curves: DMatrix<f64>,
    pub sigmas: DVector<f64>,
    pub k: usize,
}

fn sigmas_for(dist: &DMatrix<f64>, k: usize) -> Result<DVector<f64>> {
    let m = dist.nrows();
    let mut s = DVector::zeros(m);
    for i in 0..m {
        let d: Vec<f64> = nearest_from_distances(dist, i, k).iter().map(|&j| dist[(i, j)]).collect();
        s[i] = local_sigma(&d).map_err(|_| {
            Error::Degenerate(format!("training input {} is duplicated; merge duplicates first", i + 1))
        })?;
    }
    Ok(s)
}

impl Fknn {
    /// Fits with `k` neighbors, or picks `k` from [`fknn_k_grid`] by
    /// leave-one-out error when `k` is `None`.
    pub fn fit(inputs: DMatrix<f64>, curves: DMatrix<f64>, k: Option<usize>) -> Result<Self> {
        let m = inputs.nrows();
        if curves.nrows() != m {
            return Err(Error::Shape(format!("{m} inputs but {} curves", curves.nrows())));
        }
        if m < 2 {
            return Err(Error::InsufficientData("FkNN needs at least 2 training points".into()));
        }
        let dist = pairwise_distances(&inputs);
        let k = match k {
            Some(k) if k >= 1 && k < m => k,
            Some(k) => {
                return Err(Error::Input(format!("FkNN k={k} must satisfy 1 <= k < m={m}")));
            }
            None => {
                let mut best = (f64::INFINITY, 1);
                for k in fknn_k_grid(m) {
                    let err = loo_error(&dist, &curves, k)?;
                    if err < best.0 {
                        best = (err, k);
                    }
                }
                best.1
            }
        };
        let sigmas = sigmas_for(&dist, k)?;
        Ok(Self { inputs, curves, sigmas, k })
    }

    /// Neighbor indices and their weights for a scaled input.
    pub fn weights(&self, x: &DVector<f64>) -> Result<Vec<(usize, f64)>> {
        if x.len() != self.inputs.ncols() {
            return Err(Error::Shape(format!(
                "input has {} values, expected {}",
                x.len(),
                self.inputs.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("input contains a non-finite value".into()));
        }
        let near = nearest_to(&self.inputs, x, self.k);
        let d2: Vec<f64> = near.iter().map(|e| e.1 * e.1).collect();
        let s: Vec<f64> = near.iter().map(|e| self.sigmas[e.0]).collect();
        let w = fknn_weights(&d2, &s);
        Ok(near.iter().map(|e| e.0).zip(w).collect())
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut y = DVector::zeros(self.curves.ncols());
        for (i, w) in self.weights(x)? {
            y += self.curves.row(i).transpose() * w;
        }
        Ok(y)
    }
}

/// Direct predictor without a fitted object.
pub fn fknn_predict(train_x: &DMatrix<f64>, train_y: &DMatrix<f64>, x: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    Fknn::fit(train_x.clone(), train_y.clone(), Some(k))?.predict(x)
}

fn loo_error(dist: &DMatrix<f64>, curves: &DMatrix<f64>, k: usize) -> Result<f64> {
    let m = dist.nrows();
    let sigmas = sigmas_for(dist, k)?;
    let mut total = 0.0;
    for i in 0..m {
        let near = nearest_from_distances(dist, i, k);
        let d2: Vec<f64> = near.iter().map(|&j| dist[(i, j)].powi(2)).collect();
        let s: Vec<f64> = near.iter().map(|&j| sigmas[j]).collect();
        let w = fknn_weights(&d2, &s);
        let mut pred = DVector::zeros(curves.ncols());
        for (&j, wj) in near.iter().zip(w) {
            pred += curves.row(j).transpose() * wj;
        }
        total += (pred - curves.row(i).transpose()).norm_squared();
    }
    Ok(total / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn sigma_hand_values() {
        let e = std::f64::consts::E;
        assert!((local_sigma(&[1.0, e.sqrt()]).unwrap() - (e - 1.0)).abs() < 1e-12);
        assert!((local_sigma(&[2.0, 2.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!((local_sigma(&[1.0, 1.5, 2.0]).unwrap() - 3.0 / 4f64.ln()).abs() < 1e-12);
        assert!((3.0 / 4f64.ln() - 2.16404).abs() < 1e-5);
        assert!(matches!(local_sigma(&[0.0, 1.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_neighbor_returns_its_curve() {
        let mut rng = seeded(1);
        let x = DMatrix::from_fn(10, 3, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(10, 6, |_, _| rng.random::<f64>());
        let q = DVector::from_fn(3, |_, _| rng.random::<f64>());
        let pred = fknn_predict(&x, &y, &q, 1).unwrap();
        let nearest = nearest_to(&x, &q, 1)[0].0;
        assert_eq!(pred, y.row(nearest).transpose());
    }

    #[test]
    fn equidistant_pair_averages() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        let pred = fknn_predict(&x, &y, &DVector::from_vec(vec![0.5]), 1).unwrap();
        // k=1 picks the lower index on the tie.
        assert_eq!(pred.as_slice(), &[1.0, 2.0]);
        let model = Fknn::fit(x, y, Some(1)).unwrap();
        let mut two = model.clone();
        two.k = 2;
        let pred = two.predict(&DVector::from_vec(vec![0.5])).unwrap();
        assert!((pred[0] - 2.0).abs() < 1e-15 && (pred[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = seeded(2);
        let x = DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(5, 4, |_, _| rng.random::<f64>());
        let model = Fknn::fit(x.clone(), y.clone(), Some(3)).unwrap();
        let q = DVector::from_vec(vec![0.4, 0.6]);
        let got = model.predict(&q).unwrap();
        // Direct evaluation of the weighted mean.
        let mut d: Vec<(f64, usize)> = (0..5).map(|i| ((x.row(i).transpose() - &q).norm(), i)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut num = DVector::zeros(4);
        let mut c = 0.0;
        for &(dist, i) in &d[..3] {
            let mut nd: Vec<f64> = (0..5).filter(|&j| j != i).map(|j| (x.row(i) - x.row(j)).norm()).collect();
            nd.sort_by(f64::total_cmp);
            let (a, b) = (nd[0].powi(2), nd[2].powi(2));
            let sigma = (b - a) / (b.ln() - a.ln());
            let w = (-dist * dist / (sigma * sigma)).exp();
            num += y.row(i).transpose() * w;
            c += w;
        }
        assert!((got - num / c).abs().max() < 1e-12);
    }

    #[test]
    fn weights_sum_to_one_and_stay_in_hull() {
        let mut rng = seeded(3);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(40, 5, |_, _| rng.random::<f64>());
        let model = Fknn::fit(x, y.clone(), Some(5)).unwrap();
        for _ in 0..200 {
            let q = DVector::from_fn(3, |_, _| rng.random_range(-0.5..1.5));
            let w = model.weights(&q).unwrap();
            let total: f64 = w.iter().map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let pred = model.predict(&q).unwrap();
            for t in 0..5 {
                let lo = w.iter().map(|e| y[(e.0, t)]).fold(f64::INFINITY, f64::min);
                let hi = w.iter().map(|e| y[(e.0, t)]).fold(f64::NEG_INFINITY, f64::max);
                assert!(pred[t] >= lo - 1e-12 && pred[t] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn continuous_away_from_neighbor_changes() {
        let mut rng = seeded(4);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(30, 3, |_, _| rng.random::<f64>());
        let model = Fknn::fit(x, y, Some(4)).unwrap();
        for _ in 0..100 {
            let q = DVector::from_fn(2, |_, _| rng.random::<f64>());
            let q2 = &q + DVector::from_vec(vec![1e-6, -1e-6]);
            let same: bool = model.weights(&q).unwrap().iter().map(|e| e.0).eq(model.weights(&q2).unwrap().iter().map(|e| e.0));
            if same {
                let diff = (model.predict(&q).unwrap() - model.predict(&q2).unwrap()).abs().max();
                assert!(diff < 1e-3, "{diff}");
            }
        }
    }

    #[test]
    fn cross_validated_k_is_on_the_grid() {
        let mut rng = seeded(5);
        let x = DMatrix::from_fn(50, 2, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(50, 3, |i, j| x[(i, 0)] * (j as f64 + 1.0) + x[(i, 1)]);
        let model = Fknn::fit(x, y, None).unwrap();
        assert!(fknn_k_grid(50).contains(&model.k));
        assert!(matches!(
            Fknn::fit(DMatrix::from_element(1, 1, 0.0), DMatrix::from_element(1, 1, 0.0), None),
            Err(Error::InsufficientData(_))
        ));
        assert!(model.predict(&DVector::from_vec(vec![f64::NAN, 0.0])).is_err());
    }
}
