//! Local-linear Gaussian-kernel smoother on a scalar predictor, with the
//! bandwidth chosen by generalized cross-validation.

/// Kernel support in bandwidths; weights beyond it are treated as zero.
const WINDOW: f64 = 4.0;

pub(crate) struct SmoothFit {
    /// Fitted values at the inputs, in input order.
    pub fitted: Vec<f64>,
    /// Local slopes at the inputs.
    pub slopes: Vec<f64>,
    /// Trace of the smoother matrix.
    pub trace: f64,
}

fn sort_order(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    order
}

/// Local-linear fit evaluated at every input value.
pub(crate) fn local_linear(v: &[f64], y: &[f64], h: f64) -> SmoothFit {
    let n = v.len();
    let order = sort_order(v);
    let vs: Vec<f64> = order.iter().map(|&i| v[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut fitted = vec![0.0; n];
    let mut slopes = vec![0.0; n];
    let mut trace = 0.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    for (pos, &i) in order.iter().enumerate() {
        let v0 = vs[pos];
        while vs[lo] < v0 - WINDOW * h {
            lo += 1;
        }
        while hi < n && vs[hi] <= v0 + WINDOW * h {
            hi += 1;
        }
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in lo..hi {
            let dv = vs[j] - v0;
            let w = (-0.5 * (dv / h).powi(2)).exp();
            s0 += w;
            s1 += w * dv;
            s2 += w * dv * dv;
            t0 += w * ys[j];
            t1 += w * dv * ys[j];
        }
        let det = s0 * s2 - s1 * s1;
        if det > 1e-12 * s0 * s2.max(f64::MIN_POSITIVE) && s2 > 0.0 {
            fitted[i] = (s2 * t0 - s1 * t1) / det;
            slopes[i] = (s0 * t1 - s1 * t0) / det;
            trace += s2 / det;
        } else {
            // Too few distinct points in the window: local constant.
            fitted[i] = t0 / s0;
            slopes[i] = 0.0;
            trace += 1.0 / s0;
        }
    }
    SmoothFit { fitted, slopes, trace }
}

fn rss(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Ten log-spaced bandwidths between 5% and 100% of the predictor spread.
pub(crate) fn bandwidth_grid(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let (a, b) = ((0.05f64).ln(), 0.0f64);
    (0..10).map(|i| sd * (a + (b - a) * i as f64 / 9.0).exp()).collect()
}

/// Bandwidth with the smallest GCV score; ties go to the wider one.
pub(crate) fn gcv_bandwidth(v: &[f64], y: &[f64]) -> f64 {
    let n = v.len() as f64;
    let grid = bandwidth_grid(v);
    let mut best = (f64::INFINITY, grid[grid.len() - 1]);
    for &h in grid.iter().rev() {
        let fit = local_linear(v, y, h);
        let denom = (1.0 - fit.trace / n).powi(2);
        if denom <= 0.0 {
            continue;
        }
        let score = rss(y, &fit.fitted) / n / denom;
        if score < best.0 {
            best = (score, h);
        }
    }
    best.1
}

/// Piecewise-linear table of a fitted ridge function, constant beyond the
/// end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeTable {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl RidgeTable {
    /// Table through `(v_i, g_i)`; repeated knots keep their mean value.
    pub fn from_points(v: &[f64], g: &[f64]) -> Self {
        let order = sort_order(v);
        let mut knots: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for i in order {
            if knots.last() == Some(&v[i]) {
                let last = values.len() - 1;
                values[last] += g[i];
                counts[last] += 1.0;
            } else {
                knots.push(v[i]);
                values.push(g[i]);
                counts.push(1.0);
            }
        }
        for (val, c) in values.iter_mut().zip(counts) {
            *val /= c;
        }
        Self { knots, values }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x <= self.knots[0] {
            return self.values[0];
        }
        if x >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let j = self.knots.partition_point(|&k| k <= x);
        let (k0, k1) = (self.knots[j - 1], self.knots[j]);
        let t = (x - k0) / (k1 - k0);
        self.values[j - 1] + t * (self.values[j] - self.values[j - 1])
    }
}
