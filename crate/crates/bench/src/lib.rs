//! Fixed inputs shared by the benchmarks.

use funscreen_core::validation::{make_manifold_benchmark, ManifoldBenchmark, ManifoldKind};
use nalgebra::DMatrix;

pub const SEED: u64 = 2024;

pub fn roll(n: usize, t: usize) -> ManifoldBenchmark {
    make_manifold_benchmark(n, 4, t, SEED, ManifoldKind::Roll).expect("roll benchmark")
}

pub fn two_regime(n: usize, t: usize) -> ManifoldBenchmark {
    make_manifold_benchmark(n, 4, t, SEED, ManifoldKind::TwoRegime).expect("two-regime benchmark")
}

/// Design inputs as a plain matrix.
pub fn inputs(b: &ManifoldBenchmark) -> DMatrix<f64> {
    b.design.values().clone()
}
