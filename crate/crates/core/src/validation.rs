//! K-fold cross-validation, pointwise MSE and Q2 curves, and synthetic
//! benchmarks whose ground truth is known in closed form.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{Coding, CurveEnsemble, DesignMatrix};
use crate::doe::{factorial_design, fractional_factorial_with_runs, random_lhs, FactorialDesignSpec};
use crate::error::{Error, Result};
use crate::gsi::variance_floor;
use crate::metamodel::{fit_functional_metamodel, MetamodelConfig};
use crate::rng::{derived, seeded};

/// Shuffled partition of `0..n` into `folds` groups whose sizes differ by at
/// most one. Each fold lists its rows in increasing order.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::Input(format!("fold count must lie in 2..={n}, got {folds}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut parts = vec![Vec::with_capacity(n / folds + 1); folds];
    for (pos, &i) in order.iter().enumerate() {
        parts[pos % folds].push(i);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Pointwise `MSE_t` and residual-form `Q2_t`. Q2 is `None` where the
/// observed column variance is at most `1e-12 * max|Y|^2`.
pub fn mse_q2_curves(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    if truth.shape() != pred.shape() {
        return Err(Error::Shape(format!(
            "predictions are {:?}, observations are {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let m = truth.nrows();
    if m < 2 {
        return Err(Error::InsufficientData("Q2 needs at least 2 test curves".into()));
    }
    let mf = m as f64;
    let floor = variance_floor(truth);
    let mut mse = Vec::with_capacity(truth.ncols());
    let mut q2 = Vec::with_capacity(truth.ncols());
    for t in 0..truth.ncols() {
        let col = truth.column(t);
        let mean = col.mean();
        let total: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let resid: f64 = col.iter().zip(pred.column(t).iter()).map(|(a, b)| (a - b).powi(2)).sum();
        mse.push(resid / mf);
        q2.push(if total / mf <= floor || total == 0.0 {
            None
        } else {
            Some(1.0 - resid / total)
        });
    }
    Ok((mse, q2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub mse: Vec<f64>,
    pub q2: Vec<Option<f64>>,
    pub fold_count: usize,
    pub folds: Vec<Vec<usize>>,
    /// Time indices where Q2 is undefined.
    pub undefined_columns: Vec<usize>,
    /// Out-of-fold prediction for every run.
    pub predictions: DMatrix<f64>,
}

impl ValidationReport {
    /// Smallest defined Q2 over the given time indices.
    pub fn min_q2_over(&self, columns: &[usize]) -> Option<f64> {
        columns.iter().filter_map(|&t| self.q2[t]).min_by(f64::total_cmp)
    }
}

/// Fits one metamodel per fold on the remaining rows and scores the pooled
/// out-of-fold predictions. Every fold model uses `config` unchanged,
/// seed included.
pub fn cross_validate(
    x: &DMatrix<f64>,
    y: &CurveEnsemble,
    folds: usize,
    config: &MetamodelConfig,
    fold_seed: u64,
) -> Result<ValidationReport> {
    let n = x.nrows();
    if y.runs() != n {
        return Err(Error::Shape(format!("{n} input rows but {} curves", y.runs())));
    }
    let parts = kfold_indices(n, folds, fold_seed)?;
    let predicted: Vec<DMatrix<f64>> = parts
        .par_iter()
        .map(|test| {
            let train: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
            let model = fit_functional_metamodel(&x.select_rows(train.iter()), &y.select_rows(&train)?, config)?;
            model.predict_rows(&x.select_rows(test.iter()))
        })
        .collect::<Result<_>>()?;
    let mut predictions = DMatrix::zeros(n, y.time_steps());
    for (test, pred) in parts.iter().zip(&predicted) {
        for (r, &i) in test.iter().enumerate() {
            predictions.set_row(i, &pred.row(r));
        }
    }
    let (mse, q2) = mse_q2_curves(y.values(), &predictions)?;
    let undefined_columns = (0..q2.len()).filter(|&t| q2[t].is_none()).collect();
    Ok(ValidationReport {
        mse,
        q2,
        fold_count: folds,
        folds: parts,
        undefined_columns,
        predictions,
    })
}

/// Time indices whose column variance is at least `fraction` of the largest.
pub fn high_variance_columns(y: &DMatrix<f64>, fraction: f64) -> Vec<usize> {
    let var: Vec<f64> = y.column_iter().map(|c| c.variance()).collect();
    let top = var.iter().copied().fold(0.0, f64::max);
    (0..var.len()).filter(|&t| top > 0.0 && var[t] >= fraction * top).collect()
}

/// `GSI_j = sum_t a_j(t)^2 / sum_l sum_t a_l(t)^2` for coefficient curves
/// stored one per row.
pub fn analytic_linear_gsi(coefficients: &DMatrix<f64>) -> Vec<f64> {
    let ss: Vec<f64> = coefficients.row_iter().map(|r| r.norm_squared()).collect();
    let total: f64 = ss.iter().sum();
    ss.iter().map(|s| if total > 0.0 { s / total } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearBenchmark {
    pub design: DesignMatrix,
    pub curves: CurveEnsemble,
    /// `a_j(t)`, one row per design column. Inert columns have zero rows.
    pub coefficients: DMatrix<f64>,
    pub gsi: Vec<f64>,
}

/// `Y_i(t) = sum_j a_j(t) X_ij` on an orthogonal `±1` design with `n = 2^b`
/// runs. When `n > 2^p` the design is the full `2^b` factorial and the
/// columns past `p` carry zero coefficients; otherwise it is a regular
/// fraction of resolution at least III.
pub fn make_linear_benchmark(n: usize, p: usize, t: usize, seed: u64) -> Result<LinearBenchmark> {
    if !n.is_power_of_two() || n < 2 || p == 0 || t == 0 {
        return Err(Error::Input(format!(
            "linear benchmark needs n a power of two, p >= 1 and T >= 1 (got n={n}, p={p}, T={t})"
        )));
    }
    let base = n.trailing_zeros() as usize;
    let design = if p <= base {
        factorial_design(&FactorialDesignSpec::full(base)?, seed)?
    } else {
        fractional_factorial_with_runs(p, n, 3, seed)?.design
    };
    let mut rng = derived(seed, 1);
    let mut coefficients = DMatrix::zeros(design.factors(), t);
    for j in 0..p {
        let c: Vec<f64> = (0..4)
            .map(|m| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) / (m + 1) as f64)
            .collect();
        for s in 0..t {
            let u = if t > 1 { s as f64 / (t - 1) as f64 } else { 0.0 };
            coefficients[(j, s)] = c.iter().enumerate().map(|(m, cm)| cm * (m as f64 * PI * u).cos()).sum();
        }
    }
    let values = design.values() * &coefficients;
    Ok(LinearBenchmark {
        gsi: analytic_linear_gsi(&coefficients),
        curves: CurveEnsemble::new(values, None)?,
        coefficients,
        design,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    /// Curves on a 2-dimensional affine subspace.
    Plane,
    /// A 270 degree cylindrical arc with height: a curved but developable
    /// surface.
    Roll,
    /// Two well-separated planar patches with different bases, split on
    /// `x1 < 0.5`.
    TwoRegime,
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ManifoldKind::Plane => "plane",
            ManifoldKind::Roll => "roll",
            ManifoldKind::TwoRegime => "two_regime",
        })
    }
}

impl FromStr for ManifoldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "plane" => Ok(ManifoldKind::Plane),
            "roll" => Ok(ManifoldKind::Roll),
            "two_regime" => Ok(ManifoldKind::TwoRegime),
            other => Err(Error::Input(format!("unknown benchmark '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldBenchmark {
    pub design: DesignMatrix,
    pub curves: CurveEnsemble,
    /// Intrinsic coordinates, `n x 2`. Within one regime they are isometric
    /// to the curves: Euclidean distances between latent rows equal
    /// geodesic distances between curves.
    pub latent: DMatrix<f64>,
    /// Regime of every run; all zero except for `TwoRegime`.
    pub labels: Vec<usize>,
}

/// Cosine basis vector `m` of length `t`, scaled so that its squared norm is
/// `t` for every `m`.
pub fn cosine_basis(m: usize, t: usize) -> DVector<f64> {
    let tf = t as f64;
    DVector::from_fn(t, |s, _| {
        if m == 0 {
            1.0
        } else {
            2f64.sqrt() * (PI * m as f64 * (s as f64 + 0.5) / tf).cos()
        }
    })
}

const ROLL_ANGLE: f64 = 1.5 * PI;
const ROLL_HEIGHT: f64 = 2.0;
const REGIME_OFFSET: f64 = 6.0;

/// Curves driven by the first two inputs of `design`; further inputs are
/// inert.
pub fn manifold_curves(design: &DesignMatrix, t: usize, kind: ManifoldKind) -> Result<ManifoldBenchmark> {
    let (n, p) = (design.runs(), design.factors());
    if p < 2 || t < 5 || design.coding() != Coding::UnitCube {
        return Err(Error::Input(
            "manifold benchmark needs a unit-cube design with p >= 2 and T >= 5".into(),
        ));
    }
    let phi: Vec<DVector<f64>> = (0..5).map(|m| cosine_basis(m, t)).collect();
    let scale = (t as f64).sqrt();
    let x = design.values();
    let mut values = DMatrix::zeros(n, t);
    let mut latent = DMatrix::zeros(n, 2);
    let mut labels = vec![0; n];
    for i in 0..n {
        let (u, v) = (x[(i, 0)], x[(i, 1)]);
        let curve = match kind {
            ManifoldKind::Plane => {
                latent[(i, 0)] = scale * 2.0 * u;
                latent[(i, 1)] = scale * v;
                &phi[0] + &phi[1] * (2.0 * u) + &phi[2] * v
            }
            ManifoldKind::Roll => {
                let theta = ROLL_ANGLE * u;
                latent[(i, 0)] = scale * theta;
                latent[(i, 1)] = scale * ROLL_HEIGHT * v;
                &phi[0] * 3.0 + &phi[1] * theta.cos() + &phi[2] * theta.sin() + &phi[3] * (ROLL_HEIGHT * v)
            }
            ManifoldKind::TwoRegime => {
                let high = u >= 0.5;
                let w = if high { 2.0 * u - 1.0 } else { 2.0 * u };
                labels[i] = usize::from(high);
                latent[(i, 0)] = scale * w;
                latent[(i, 1)] = scale * v;
                if high {
                    &phi[0] * REGIME_OFFSET + &phi[3] * w + &phi[4] * v
                } else {
                    &phi[1] * w + &phi[2] * v
                }
            }
        };
        values.set_row(i, &curve.transpose());
    }
    Ok(ManifoldBenchmark {
        design: design.clone(),
        curves: CurveEnsemble::new(values, None)?,
        latent,
        labels,
    })
}

/// [`manifold_curves`] on a random Latin hypercube of `n` runs in `p`
/// inputs.
pub fn make_manifold_benchmark(n: usize, p: usize, t: usize, seed: u64, kind: ManifoldKind) -> Result<ManifoldBenchmark> {
    manifold_curves(&random_lhs(n, p, seed)?, t, kind)
}
