//! Scalar regressors for reduced coordinates: projection pursuit regression
//! and k-nearest-neighbor averaging.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::smoother::{gcv_bandwidth, local_linear, RidgeTable};
use crate::error::{Error, Result};
use crate::geometry::{nearest_from_distances, nearest_to, pairwise_distances};
use crate::rng::seeded;

/// One ridge function `beta * g(alpha . x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeTerm {
    /// Unit direction.
    pub direction: DVector<f64>,
    pub weight: f64,
    /// Standardized ridge function.
    pub table: RidgeTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PprModel {
    pub intercept: f64,
    pub terms: Vec<RidgeTerm>,
    /// Training residual sum of squares after 0, 1, ... terms.
    pub rss_path: Vec<f64>,
}

impl PprModel {
    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .map(|t| t.weight * t.table.eval(t.direction.dot(x)))
                .sum::<f64>()
    }
}

/// Settings of the projection pursuit fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PprOptions {
    pub max_terms: usize,
    /// Random starting directions besides the least-squares one.
    pub random_starts: usize,
    pub max_iterations: usize,
    /// Stop adding terms once the relative RSS gain falls below this.
    pub min_gain: f64,
}

impl Default for PprOptions {
    fn default() -> Self {
        Self {
            max_terms: 4,
            random_starts: 4,
            max_iterations: 30,
            min_gain: 1e-3,
        }
    }
}

fn project(x: &DMatrix<f64>, a: &DVector<f64>) -> Vec<f64> {
    (x * a).iter().copied().collect()
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Least-squares direction of `r` on the centered columns of `x`.
fn ls_direction(x: &DMatrix<f64>, r: &[f64]) -> Option<DVector<f64>> {
    let (m, p) = x.shape();
    let means = x.row_mean();
    let xc = DMatrix::from_fn(m, p, |i, j| x[(i, j)] - means[j]);
    let rv = DVector::from_column_slice(r);
    let gram = xc.transpose() * &xc + DMatrix::identity(p, p) * 1e-10;
    let beta = gram.cholesky()?.solve(&(xc.transpose() * rv));
    let n = beta.norm();
    (n > 0.0 && n.is_finite()).then(|| beta / n)
}

struct Stage {
    direction: DVector<f64>,
    fitted: Vec<f64>,
    rss: f64,
}

/// Ridge direction for residuals `r` by Gauss-Newton steps with step
/// halving, smoothing at bandwidth `h`.
fn refine_direction(x: &DMatrix<f64>, r: &[f64], start: DVector<f64>, h: f64, iterations: usize) -> Stage {
    let (m, p) = x.shape();
    let eval = |a: &DVector<f64>| {
        let v = project(x, a);
        let fit = local_linear(&v, r, h);
        let res: Vec<f64> = r.iter().zip(&fit.fitted).map(|(a, b)| a - b).collect();
        (sum_sq(&res), fit, res)
    };
    let mut a = start;
    let (mut best, mut fit, mut res) = eval(&a);
    for _ in 0..iterations {
        let jac = DMatrix::from_fn(m, p, |i, j| fit.slopes[i] * x[(i, j)]);
        let rhs = jac.transpose() * DVector::from_column_slice(&res);
        let normal = jac.transpose() * &jac + DMatrix::identity(p, p) * 1e-10;
        let Some(chol) = normal.cholesky() else { break };
        let step = chol.solve(&rhs);
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..10 {
            let cand = &a + &step * scale;
            let n = cand.norm();
            if n > 0.0 && n.is_finite() {
                let cand = cand / n;
                let (s, f, rr) = eval(&cand);
                if s < best {
                    let gain = (best - s) / best.max(f64::MIN_POSITIVE);
                    a = cand;
                    best = s;
                    fit = f;
                    res = rr;
                    improved = gain > 1e-8;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Stage {
        direction: a,
        fitted: fit.fitted,
        rss: best,
    }
}

/// Forward-stagewise projection pursuit regression.
pub fn ppr_fit(x: &DMatrix<f64>, z: &[f64], options: &PprOptions, seed: u64) -> Result<PprModel> {
    let (m, p) = x.shape();
    if z.len() != m {
        return Err(Error::Shape(format!("{m} inputs but {} targets", z.len())));
    }
    if m < 10 {
        return Err(Error::InsufficientData(format!(
            "projection pursuit needs at least 10 points, got {m}"
        )));
    }
    let intercept = z.iter().sum::<f64>() / m as f64;
    let mut r: Vec<f64> = z.iter().map(|v| v - intercept).collect();
    let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut rss = sum_sq(&r);
    let mut model = PprModel {
        intercept,
        terms: Vec::new(),
        rss_path: vec![rss],
    };
    if rss <= 1e-24 * (scale * scale).max(f64::MIN_POSITIVE) * m as f64 {
        return Ok(model);
    }
    let mut rng = seeded(seed);
    let initial = rss;
    for term in 0..options.max_terms {
        if rss <= 1e-12 * initial {
            break;
        }
        let mut starts: Vec<DVector<f64>> = Vec::new();
        if let Some(d) = ls_direction(x, &r) {
            starts.push(d);
        }
        for _ in 0..options.random_starts {
            let d = DVector::from_fn(p, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
            starts.push(d.normalize());
        }
        let mut best: Option<Stage> = None;
        for start in starts {
            let h = gcv_bandwidth(&project(x, &start), &r);
            let stage = refine_direction(x, &r, start, h, options.max_iterations);
            if best.as_ref().is_none_or(|b| stage.rss < b.rss) {
                best = Some(stage);
            }
        }
        let Some(stage) = best else { break };
        // Final smoother at the chosen direction with its own bandwidth.
        let v = project(x, &stage.direction);
        let h = gcv_bandwidth(&v, &r);
        let mut fitted = local_linear(&v, &r, h).fitted;
        let mut new_rss: f64 = r.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        if new_rss > stage.rss {
            fitted = stage.fitted;
            new_rss = stage.rss;
        }
        if !(new_rss < rss) {
            break;
        }
        let g_mean = fitted.iter().sum::<f64>() / m as f64;
        let g_sd = (fitted.iter().map(|g| (g - g_mean).powi(2)).sum::<f64>() / m as f64).sqrt();
        let weight = if g_sd > 0.0 { g_sd } else { 1.0 };
        let standardized: Vec<f64> = fitted.iter().map(|g| g / weight).collect();
        for (ri, fi) in r.iter_mut().zip(&fitted) {
            *ri -= fi;
        }
        let gain = (rss - new_rss) / rss;
        rss = new_rss;
        model.rss_path.push(rss);
        model.terms.push(RidgeTerm {
            direction: stage.direction,
            weight,
            table: RidgeTable::from_points(&v, &standardized),
        });
        debug!("ridge term {} gains {:.3e} of RSS", term + 1, gain);
        if gain < options.min_gain {
            break;
        }
    }
    Ok(model)
}

/// Mean target of the `k` nearest training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnRegressor {
    pub inputs: DMatrix<f64>,
    pub targets: Vec<f64>,
    pub k: usize,
}

impl KnnRegressor {
    /// `k = None` picks from `{1, 2, 3, 5, 8, 13, ceil(sqrt(m))}` by
    /// leave-one-out squared error.
    pub fn fit(inputs: DMatrix<f64>, targets: Vec<f64>, k: Option<usize>) -> Result<Self> {
        let m = inputs.nrows();
        if targets.len() != m || m == 0 {
            return Err(Error::Shape(format!("{m} inputs but {} targets", targets.len())));
        }
        let k = match k {
            Some(k) if k >= 1 && k <= m => k,
            Some(k) => return Err(Error::Input(format!("kNN k={k} must satisfy 1 <= k <= m={m}"))),
            None if m < 2 => 1,
            None => {
                let dist = pairwise_distances(&inputs);
                let mut best = (f64::INFINITY, 1);
                for k in super::fknn::fknn_k_grid(m) {
                    let err: f64 = (0..m)
                        .map(|i| {
                            let nb = nearest_from_distances(&dist, i, k);
                            let pred = nb.iter().map(|&j| targets[j]).sum::<f64>() / k as f64;
                            (pred - targets[i]).powi(2)
                        })
                        .sum();
                    if err < best.0 {
                        best = (err, k);
                    }
                }
                best.1
            }
        };
        Ok(Self { inputs, targets, k })
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        let near = nearest_to(&self.inputs, x, self.k);
        near.iter().map(|e| self.targets[e.0]).sum::<f64>() / near.len() as f64
    }
}

/// Regressor for one reduced coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarRegressor {
    Ppr(PprModel),
    Knn(KnnRegressor),
}

impl ScalarRegressor {
    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        match self {
            ScalarRegressor::Ppr(m) => m.predict(x),
            ScalarRegressor::Knn(m) => m.predict(x),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScalarRegressor::Ppr(_) => "ppr",
            ScalarRegressor::Knn(_) => "knn",
        }
    }
}
