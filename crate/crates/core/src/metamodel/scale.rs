use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-column min-max map of inputs onto `[0, 1]`. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: DVector<f64>,
    pub span: DVector<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let p = x.ncols();
        let mut min = DVector::zeros(p);
        let mut span = DVector::zeros(p);
        for j in 0..p {
            let col = x.column(j);
            let lo = col.min();
            let hi = col.max();
            min[j] = lo;
            span[j] = if hi > lo { hi - lo } else { 1.0 };
        }
        Self { min, span }
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dims() {
            return Err(Error::Shape(format!(
                "input has {} values, expected {}",
                x.len(),
                self.dims()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("input contains a non-finite value".into()));
        }
        Ok(DVector::from_fn(x.len(), |j, _| (x[j] - self.min[j]) / self.span[j]))
    }

    pub fn transform_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dims() {
            return Err(Error::Shape(format!(
                "inputs have {} columns, expected {}",
                x.ncols(),
                self.dims()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("inputs contain a non-finite value".into()));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.min[j]) / self.span[j]))
    }
}
