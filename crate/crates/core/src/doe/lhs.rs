//! Latin hypercube designs optimized for the wrap-around L2 discrepancy.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{default_factor_names, Coding, DesignMatrix};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Per-coordinate kernel of the wrap-around discrepancy.
#[inline]
fn kernel(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    1.5 - d * (1.0 - d)
}

fn pair_product(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..x.ncols()).map(|l| kernel(x[(i, l)], x[(j, l)])).product()
}

pub(crate) fn wd2(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let p = x.ncols() as i32;
    let mut sum = 0.0;
    for i in 0..n {
        sum += pair_product(x, i, i);
        for j in (i + 1)..n {
            sum += 2.0 * pair_product(x, i, j);
        }
    }
    (sum / (n * n) as f64 - (4.0f64 / 3.0).powi(p)).max(0.0)
}

/// Squared wrap-around L2 discrepancy of a unit-cube design, clamped at 0.
pub fn wrap_around_discrepancy(design: &DesignMatrix) -> Result<f64> {
    if design.coding() != Coding::UnitCube {
        return Err(Error::Coding(
            "wrap-around discrepancy needs a unit-cube design".into(),
        ));
    }
    Ok(wd2(design.values()))
}

fn midpoint(k: usize, n: usize) -> f64 {
    (2 * k + 1) as f64 / (2 * n) as f64
}

fn lhs_values(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut perm: Vec<usize> = (0..n).collect();
    for l in 0..p {
        perm.shuffle(&mut rng);
        for i in 0..n {
            x[(i, l)] = midpoint(perm[i], n);
        }
    }
    x
}

fn unit_design(values: DMatrix<f64>) -> Result<DesignMatrix> {
    let p = values.ncols();
    DesignMatrix::new(values, Coding::UnitCube, Some(default_factor_names(p)))
}

/// Random midpoint Latin hypercube: every column is a permutation of
/// `(2k-1)/(2n)`, `k = 1..n`.
pub fn random_lhs(n: usize, p: usize, seed: u64) -> Result<DesignMatrix> {
    if n < 1 || p < 1 {
        return Err(Error::Input(format!("LHS needs n >= 1 and p >= 1, got n={n}, p={p}")));
    }
    unit_design(lhs_values(n, p, seed))
}

/// Outcome of an annealing run.
#[derive(Debug, Clone)]
pub struct LhsOptimization {
    pub design: DesignMatrix,
    pub initial_discrepancy: f64,
    pub final_discrepancy: f64,
    /// Best discrepancy after each improvement, starting with the initial
    /// value.
    pub history: Vec<f64>,
    pub accepted_moves: usize,
}

/// Incremental state for within-column swap moves.
struct SwapState {
    x: DMatrix<f64>,
    /// Symmetric matrix of per-pair kernel products.
    f: DMatrix<f64>,
    sum: f64,
}

impl SwapState {
    fn new(x: DMatrix<f64>) -> Self {
        let n = x.nrows();
        let mut f = DMatrix::zeros(n, n);
        let mut sum = 0.0;
        for i in 0..n {
            for j in i..n {
                let v = pair_product(&x, i, j);
                f[(i, j)] = v;
                f[(j, i)] = v;
                sum += if i == j { v } else { 2.0 * v };
            }
        }
        Self { x, f, sum }
    }

    /// Change of the double sum if rows `a` and `b` swap their entries in
    /// column `l`.
    fn delta(&self, a: usize, b: usize, l: usize) -> f64 {
        let xa = self.x[(a, l)];
        let xb = self.x[(b, l)];
        let mut d = 0.0;
        for j in 0..self.x.nrows() {
            if j == a || j == b {
                continue;
            }
            let xj = self.x[(j, l)];
            let ka = kernel(xa, xj);
            let kb = kernel(xb, xj);
            d += self.f[(a, j)] * (kb / ka - 1.0) + self.f[(b, j)] * (ka / kb - 1.0);
        }
        2.0 * d
    }

    fn apply(&mut self, a: usize, b: usize, l: usize, delta: f64) {
        self.x.swap((a, l), (b, l));
        for &r in &[a, b] {
            for j in 0..self.x.nrows() {
                if j == a || j == b {
                    continue;
                }
                let v = pair_product(&self.x, r, j);
                self.f[(r, j)] = v;
                self.f[(j, r)] = v;
            }
        }
        self.sum += delta;
    }

    fn discrepancy(&self) -> f64 {
        let n = self.x.nrows() as f64;
        (self.sum / (n * n) - (4.0f64 / 3.0).powi(self.x.ncols() as i32)).max(0.0)
    }
}

/// Simulated annealing over within-column pair swaps, starting from
/// `random_lhs(n, p, seed)`. Returns the best design visited.
pub fn optimize_lhs_traced(n: usize, p: usize, iterations: usize, seed: u64) -> Result<LhsOptimization> {
    if n < 2 || p < 1 {
        return Err(Error::Input(format!(
            "LHS optimization needs n >= 2 and p >= 1, got n={n}, p={p}"
        )));
    }
    let mut rng = seeded(seed ^ 0x5eed_1a75);
    let mut state = SwapState::new(lhs_values(n, p, seed));
    let initial = state.discrepancy();

    let propose = |rng: &mut rand_chacha::ChaCha8Rng| {
        let l = rng.random_range(0..p);
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        (a, b, l)
    };

    // Initial temperature from the typical magnitude of a move.
    let probes = 64.min(iterations.max(1));
    let mut scale = 0.0;
    for _ in 0..probes {
        let (a, b, l) = propose(&mut rng);
        scale += state.delta(a, b, l).abs();
    }
    let nn = (n * n) as f64;
    let t0 = (scale / probes as f64 / nn).max(f64::MIN_POSITIVE);
    let cooling = if iterations > 0 {
        (1e-3f64).powf(1.0 / iterations as f64)
    } else {
        1.0
    };

    let mut temperature = t0;
    let mut current = initial;
    let mut best = initial;
    let mut best_x = state.x.clone();
    let mut history = vec![initial];
    let mut accepted = 0;
    for _ in 0..iterations {
        let (a, b, l) = propose(&mut rng);
        let dsum = state.delta(a, b, l);
        let dwd = dsum / nn;
        let u: f64 = rng.random();
        if dwd <= 0.0 || u < (-dwd / temperature).exp() {
            state.apply(a, b, l, dsum);
            current += dwd;
            accepted += 1;
            if current < best {
                best = current;
                best_x.copy_from(&state.x);
                history.push(best);
            }
        }
        temperature *= cooling;
    }
    let final_discrepancy = wd2(&best_x);
    if let Some(last) = history.last_mut() {
        *last = final_discrepancy.min(*last);
    }
    Ok(LhsOptimization {
        design: unit_design(best_x)?,
        initial_discrepancy: initial,
        final_discrepancy,
        history,
        accepted_moves: accepted,
    })
}

/// Latin hypercube with low wrap-around discrepancy.
pub fn optimize_lhs(n: usize, p: usize, iterations: usize, seed: u64) -> Result<DesignMatrix> {
    optimize_lhs_traced(n, p, iterations, seed).map(|o| o.design)
}
