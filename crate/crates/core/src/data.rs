//! Curve ensembles, experimental designs and the CSV dialect shared by every
//! tabular artifact.
//!
//! The dialect is deliberately narrow: comma separator, `.` decimal point, an
//! optional single header row, UTF-8, no quoting. Numbers are written with the
//! shortest representation that parses back to the same `f64`, so a
//! load/write/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `n x T` matrix of output curves, one simulation run per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEnsemble {
    values: DMatrix<f64>,
    time_grid: Vec<f64>,
}

impl CurveEnsemble {
    /// Builds an ensemble; the time grid defaults to `1..=T`.
    pub fn new(values: DMatrix<f64>, time_grid: Option<Vec<f64>>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape(format!(
                "curve ensemble must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        let t = values.ncols();
        let time_grid = match time_grid {
            Some(grid) => {
                if grid.len() != t {
                    return Err(Error::Shape(format!(
                        "time grid has {} points but curves have {} columns",
                        grid.len(),
                        t
                    )));
                }
                if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Data("time grid must be finite and strictly increasing".into()));
                }
                grid
            }
            None => (1..=t).map(|i| i as f64).collect(),
        };
        Ok(Self { values, time_grid })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    /// Number of runs `n`.
    pub fn runs(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time samples `T`.
    pub fn time_steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn curve(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Ensemble restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = select_rows(&self.values, rows);
        Self::new(values, Some(self.time_grid.clone()))
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// How the entries of a design matrix are coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coding {
    /// Two-level factorial design, entries in `{-1, +1}`.
    Factorial,
    /// Continuous design on the unit cube, entries in `[0, 1]`.
    UnitCube,
}

/// An `n x p` matrix of input settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    coding: Coding,
    column_names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, coding: Coding, column_names: Option<Vec<String>>) -> Result<Self> {
        let p = values.ncols();
        if values.nrows() == 0 || p == 0 {
            return Err(Error::Shape("design must be non-empty".into()));
        }
        check_finite(&values)?;
        let column_names = match column_names {
            Some(names) if names.len() != p => {
                return Err(Error::Shape(format!(
                    "{} column names for {} design columns",
                    names.len(),
                    p
                )))
            }
            Some(names) => names,
            None => default_factor_names(p),
        };
        match coding {
            Coding::Factorial => {
                if let Some(v) = values.iter().find(|&&v| v != 1.0 && v != -1.0) {
                    return Err(Error::Coding(format!("factorial design entry {v} is not +1 or -1")));
                }
                let n = values.nrows();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if values.row(i) == values.row(j) {
                            return Err(Error::Coding(format!(
                                "factorial design rows {} and {} are identical",
                                i + 1,
                                j + 1
                            )));
                        }
                    }
                }
            }
            Coding::UnitCube => {
                if let Some(v) = values.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::Coding(format!("unit-cube design entry {v} lies outside [0, 1]")));
                }
            }
        }
        Ok(Self {
            values,
            coding,
            column_names,
        })
    }

    /// Infers the coding from the entries: all `±1` is factorial, all in `[0, 1]`
    /// is unit-cube.
    pub fn infer(values: DMatrix<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        let coding = if values.iter().all(|&v| v == 1.0 || v == -1.0) {
            Coding::Factorial
        } else if values.iter().all(|v| (0.0..=1.0).contains(v)) {
            Coding::UnitCube
        } else {
            return Err(Error::Coding(
                "design entries are neither all +/-1 nor all within [0, 1]".into(),
            ));
        };
        Self::new(values, coding, column_names)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn coding(&self) -> Coding {
        self.coding
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn runs(&self) -> usize {
        self.values.nrows()
    }

    pub fn factors(&self) -> usize {
        self.values.ncols()
    }
}

/// `V1..Vp`, the factor naming used by design and report artifacts.
pub fn default_factor_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("V{i}")).collect()
}

/// Column-centered ensemble together with its total inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredEnsemble {
    pub centered: DMatrix<f64>,
    pub column_means: DVector<f64>,
    pub total_inertia: f64,
}

/// Subtracts the arithmetic mean of every column and computes the total
/// inertia `trace(Yc' Yc)`.
pub fn center_and_inertia(curves: &CurveEnsemble) -> Result<CenteredEnsemble> {
    center_matrix(curves.values())
}

pub(crate) fn center_matrix(y: &DMatrix<f64>) -> Result<CenteredEnsemble> {
    let n = y.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "centering needs at least 2 runs, got {n}"
        )));
    }
    let column_means = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / n as f64));
    let mut centered = y.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        let m = column_means[j];
        col.iter_mut().for_each(|v| *v -= m);
    }
    let total_inertia = centered.iter().map(|v| v * v).sum();
    Ok(CenteredEnsemble {
        centered,
        column_means,
        total_inertia,
    })
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at row {}, column {}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// A parsed CSV table: optional header plus a numeric body.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

/// Parses CSV text in the shared dialect. Rows are 1-based in errors and count
/// the header line when present.
pub fn parse_csv(text: &str, has_header: bool) -> Result<Table> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = if has_header {
        lines
            .next()
            .map(|(_, l)| l.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
    } else {
        None
    };
    let mut width = header.as_ref().map(Vec::len);
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        let row = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Format {
                    row,
                    message: format!("expected {w} columns, found {}", cells.len()),
                })
            }
            _ => {}
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Format {
                row,
                message: format!("column {} is not a number: {:?}", col + 1, cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at row {row}, column {}",
                    col + 1
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(rows, cols, &data),
    })
}

pub fn read_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Table> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, has_header)
}

/// Renders a matrix in the shared dialect.
pub fn format_csv(header: Option<&[String]>, values: &DMatrix<f64>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in values.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, header: Option<&[String]>, values: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_csv(header, values)).map_err(|e| Error::io(path, e))
}

/// Loads a curve matrix. With a header, the header cells become the time grid
/// when they are all numeric and strictly increasing.
pub fn load_curve_matrix(path: impl AsRef<Path>, has_header: bool) -> Result<CurveEnsemble> {
    let table = read_csv(path, has_header)?;
    curves_from_table(table)
}

pub fn curves_from_table(table: Table) -> Result<CurveEnsemble> {
    let grid = table.header.and_then(|h| {
        let parsed: Option<Vec<f64>> = h.iter().map(|s| s.parse::<f64>().ok()).collect();
        parsed.filter(|g| g.iter().all(|v| v.is_finite()) && g.windows(2).all(|w| w[1] > w[0]))
    });
    CurveEnsemble::new(table.values, grid)
}

/// Writes curves with the time grid as header row.
pub fn write_curve_matrix(path: impl AsRef<Path>, curves: &CurveEnsemble) -> Result<()> {
    let header: Vec<String> = curves.time_grid().iter().map(|t| t.to_string()).collect();
    write_csv(path, Some(&header), curves.values())
}

pub fn load_design(path: impl AsRef<Path>) -> Result<DesignMatrix> {
    let table = read_csv(path, true)?;
    DesignMatrix::infer(table.values, table.header)
}

pub fn write_design(path: impl AsRef<Path>, design: &DesignMatrix) -> Result<()> {
    write_csv(path, Some(design.column_names()), design.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_small_matrix() {
        let t = parse_csv("1,2,3\n4,5,6", false).unwrap();
        let c = curves_from_table(t).unwrap();
        assert_eq!(c.runs(), 2);
        assert_eq!(c.time_steps(), 3);
        assert_eq!(c.values()[(1, 2)], 6.0);
        assert_eq!(c.time_grid(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn ragged_rows_name_the_row() {
        let err = parse_csv("1,2,3\n4,5", false).unwrap_err();
        match err {
            Error::Format { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_and_non_finite() {
        assert!(matches!(parse_csv("1,x\n", false), Err(Error::Format { row: 1, .. })));
        assert!(matches!(parse_csv("1,NaN\n", false), Err(Error::Data(_))));
        assert!(matches!(parse_csv("1,inf\n", false), Err(Error::Data(_))));
    }

    #[test]
    fn numeric_header_becomes_time_grid() {
        let t = parse_csv("0.5,1.5\n1,2\n3,4\n", true).unwrap();
        let c = curves_from_table(t).unwrap();
        assert_eq!(c.time_grid(), &[0.5, 1.5]);
        let t = parse_csv("a,b\n1,2\n", true).unwrap();
        assert_eq!(curves_from_table(t).unwrap().time_grid(), &[1.0, 2.0]);
    }

    #[test]
    fn loads_paper_sized_screening_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let m = DMatrix::from_fn(64, 512, |i, j| (i * 512 + j) as f64 * 0.25);
        write_csv(&path, None, &m).unwrap();
        let c = load_curve_matrix(&path, false).unwrap();
        assert_eq!((c.runs(), c.time_steps()), (64, 512));
    }

    #[test]
    fn constant_matrix_centers_to_zero() {
        let c = CurveEnsemble::new(DMatrix::from_element(4, 3, 7.0), None).unwrap();
        let ce = center_and_inertia(&c).unwrap();
        assert!(ce.centered.iter().all(|&v| v == 0.0));
        assert_eq!(ce.total_inertia, 0.0);
    }

    #[test]
    fn single_symmetric_column() {
        let c = CurveEnsemble::new(DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]), None).unwrap();
        let ce = center_and_inertia(&c).unwrap();
        assert_eq!(ce.centered.as_slice(), &[-1.0, 1.0]);
        assert_eq!(ce.total_inertia, 2.0);
    }

    #[test]
    fn inertia_matches_double_sum() {
        let y = DMatrix::from_row_slice(3, 2, &[0.3, -1.2, 2.5, 0.7, -0.4, 1.9]);
        let mut expected = 0.0;
        for j in 0..2 {
            let mean = (0..3).map(|i| y[(i, j)]).sum::<f64>() / 3.0;
            for i in 0..3 {
                expected += (y[(i, j)] - mean).powi(2);
            }
        }
        let ce = center_and_inertia(&CurveEnsemble::new(y, None).unwrap()).unwrap();
        assert!((ce.total_inertia - expected).abs() < 1e-14);
    }

    #[test]
    fn centering_needs_two_runs() {
        let c = CurveEnsemble::new(DMatrix::from_element(1, 3, 1.0), None).unwrap();
        assert!(matches!(center_and_inertia(&c), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn design_coding_is_enforced() {
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(DesignMatrix::infer(ok, None).unwrap().coding(), Coding::Factorial);
        let dup = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        assert!(matches!(DesignMatrix::new(dup, Coding::Factorial, None), Err(Error::Coding(_))));
        let bad = DMatrix::from_row_slice(1, 2, &[0.5, 1.5]);
        assert!(DesignMatrix::new(bad, Coding::UnitCube, None).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (2usize..6, 1usize..5).prop_flat_map(|(n, t)| {
            proptest::collection::vec(-1e6f64..1e6, n * t)
                .prop_map(move |v| DMatrix::from_row_slice(n, t, &v))
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(m in matrix_strategy()) {
            let text = format_csv(None, &m);
            let back = parse_csv(&text, false).unwrap().values;
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(format_csv(None, &back), text);
        }

        #[test]
        fn centering_is_idempotent(m in matrix_strategy()) {
            let once = center_matrix(&m).unwrap();
            let twice = center_matrix(&once.centered).unwrap();
            for (a, b) in once.centered.iter().zip(twice.centered.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs().max(1e6)));
            }
        }

        #[test]
        fn inertia_ignores_row_order(m in matrix_strategy()) {
            let n = m.nrows();
            let rev: Vec<usize> = (0..n).rev().collect();
            let a = center_matrix(&m).unwrap().total_inertia;
            let b = center_matrix(&select_rows(&m, &rev)).unwrap().total_inertia;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
