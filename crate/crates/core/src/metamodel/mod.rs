//! Curve-valued metamodels: predict an output curve from an input point by
//! clustering the training curves, reducing each cluster to a few
//! coordinates, regressing the coordinates on the inputs and mapping them
//! back to curves.

mod bundle;
mod fknn;
mod regress;
mod scale;
mod smoother;

pub use bundle::{bundle_files, load_metamodel, save_metamodel, BUNDLE_VERSION};
pub use fknn::{fknn_k_grid, fknn_predict, fknn_weights, local_sigma, Fknn};
pub use regress::{ppr_fit, KnnRegressor, PprModel, PprOptions, RidgeTerm, ScalarRegressor};
pub use scale::MinMaxScaler;
pub use smoother::RidgeTable;

use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cluster::{cluster_curves, estimate_cluster_count, ClusterOptions};
use crate::data::{center_and_inertia, CurveEnsemble};
use crate::error::{Error, Result};
use crate::fpca::{pca_decompose, truncate_components};
use crate::geometry::{dedup_rows, nearest_to};
use crate::rml::{rml_embed, rml_reconstruct};

/// How many clusters to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterSetting {
    Fixed(usize),
    /// Estimated by subsampling stability over `2..=k_max`.
    Auto { k_max: usize, subsamples: usize },
}

impl fmt::Display for ClusterSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterSetting::Fixed(k) => write!(f, "{k}"),
            ClusterSetting::Auto { .. } => write!(f, "auto"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducerKind {
    Pca,
    Rml,
    /// No reduction: functional kNN on whole curves.
    None,
}

impl fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReducerKind::Pca => "pca",
            ReducerKind::Rml => "rml",
            ReducerKind::None => "none",
        })
    }
}

impl FromStr for ReducerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pca" => Ok(ReducerKind::Pca),
            "rml" => Ok(ReducerKind::Rml),
            "none" | "fknn" => Ok(ReducerKind::None),
            other => Err(Error::Input(format!("unknown reducer '{other}' (expected pca, rml or none)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorKind {
    Ppr,
    Knn,
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressorKind::Ppr => "ppr",
            RegressorKind::Knn => "knn",
        })
    }
}

impl FromStr for RegressorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ppr" => Ok(RegressorKind::Ppr),
            "knn" => Ok(RegressorKind::Knn),
            other => Err(Error::Input(format!("unknown regressor '{other}' (expected ppr or knn)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetamodelConfig {
    pub clusters: ClusterSetting,
    pub reducer: ReducerKind,
    /// Reduced dimension; `None` means the PCA truncation by `x_percent`
    /// (and 2 for RML).
    pub dims: Option<usize>,
    pub x_percent: f64,
    pub regressor: RegressorKind,
    /// Neighbor count of the kNN regressor and of FkNN; `None` selects it by
    /// leave-one-out error.
    pub neighbors: Option<usize>,
    /// Graph neighbor count for RML; `None` uses `ceil(sqrt(m))`.
    pub rml_k: Option<usize>,
    pub ppr: PprOptions,
    pub seed: u64,
}

impl Default for MetamodelConfig {
    fn default() -> Self {
        Self {
            clusters: ClusterSetting::Fixed(1),
            reducer: ReducerKind::Pca,
            dims: None,
            x_percent: 99.0,
            regressor: RegressorKind::Ppr,
            neighbors: None,
            rml_k: None,
            ppr: PprOptions::default(),
            seed: 0,
        }
    }
}

/// Reduction fitted on one cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterReducer {
    /// Mean curve plus `T0 x T` orthonormal components.
    Pca { mean: DVector<f64>, components: DMatrix<f64> },
    /// Training curves, their coordinates and the reconstruction
    /// neighbor count.
    Rml {
        curves: DMatrix<f64>,
        coordinates: DMatrix<f64>,
        k: usize,
    },
    Fknn(Fknn),
}

impl ClusterReducer {
    pub fn kind(&self) -> ReducerKind {
        match self {
            ClusterReducer::Pca { .. } => ReducerKind::Pca,
            ClusterReducer::Rml { .. } => ReducerKind::Rml,
            ClusterReducer::Fknn(_) => ReducerKind::None,
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            ClusterReducer::Pca { components, .. } => components.nrows(),
            ClusterReducer::Rml { coordinates, .. } => coordinates.ncols(),
            ClusterReducer::Fknn(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// Training rows in this cluster.
    pub rows: Vec<usize>,
    pub reducer: ClusterReducer,
    /// One regressor per reduced coordinate.
    pub regressors: Vec<ScalarRegressor>,
}

/// Majority vote among the `k` nearest training inputs; ties go to the
/// label of the single nearest one.
#[derive(Debug, Clone, PartialEq)]
pub struct InputClassifier {
    pub inputs: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl InputClassifier {
    pub fn new(inputs: DMatrix<f64>, labels: Vec<usize>) -> Self {
        let k = ((inputs.nrows() as f64).sqrt().ceil() as usize).max(1);
        Self { inputs, labels, k }
    }

    pub fn classify(&self, x: &DVector<f64>) -> usize {
        let near = nearest_to(&self.inputs, x, self.k);
        let n_labels = self.labels.iter().max().map_or(1, |m| m + 1);
        let mut votes = vec![0usize; n_labels];
        for e in &near {
            votes[self.labels[e.0]] += 1;
        }
        let top = votes.iter().copied().max().unwrap_or(0);
        let winners: Vec<usize> = (0..n_labels).filter(|&l| votes[l] == top).collect();
        if winners.len() == 1 {
            winners[0]
        } else {
            self.labels[near[0].0]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMetamodel {
    pub config: MetamodelConfig,
    pub scaler: MinMaxScaler,
    /// Cluster of every training row.
    pub labels: Vec<usize>,
    pub classifier: InputClassifier,
    pub clusters: Vec<ClusterModel>,
    /// Time grid of the training curves.
    pub time_grid: Vec<f64>,
}

/// A predicted curve and how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub curve: DVector<f64>,
    pub cluster: usize,
    pub reducer: ReducerKind,
}

fn pca_reducer(curves: &DMatrix<f64>, dims: Option<usize>, x_percent: f64) -> Result<(ClusterReducer, DMatrix<f64>)> {
    let (m, t) = curves.shape();
    let mean = curves.row_mean().transpose();
    if m < 2 {
        return Ok((
            ClusterReducer::Pca {
                mean,
                components: DMatrix::zeros(0, t),
            },
            DMatrix::zeros(m, 0),
        ));
    }
    let centered = center_and_inertia(&CurveEnsemble::new(curves.clone(), None)?)?;
    if centered.total_inertia == 0.0 {
        return Ok((
            ClusterReducer::Pca {
                mean,
                components: DMatrix::zeros(0, t),
            },
            DMatrix::zeros(m, 0),
        ));
    }
    let pca = pca_decompose(&centered)?;
    let t0 = match dims {
        Some(d) => d.min(pca.rank()),
        None => truncate_components(&pca, x_percent)?,
    };
    let components = pca.eigenvectors.columns(0, t0).transpose();
    let scores = pca.scores.columns(0, t0).into_owned();
    Ok((
        ClusterReducer::Pca {
            mean: pca.column_means.clone(),
            components,
        },
        scores,
    ))
}

fn fit_regressors(
    x: &DMatrix<f64>,
    scores: &DMatrix<f64>,
    config: &MetamodelConfig,
    seed: u64,
) -> Result<Vec<ScalarRegressor>> {
    let m = x.nrows();
    let kind = if config.regressor == RegressorKind::Ppr && m < 10 {
        warn!("cluster of {m} curves is too small for projection pursuit; using kNN");
        RegressorKind::Knn
    } else {
        config.regressor
    };
    (0..scores.ncols())
        .into_par_iter()
        .map(|c| {
            let z: Vec<f64> = scores.column(c).iter().copied().collect();
            match kind {
                RegressorKind::Ppr => {
                    let s = seed.wrapping_mul(0x9e37_79b9).wrapping_add(c as u64);
                    ppr_fit(x, &z, &config.ppr, s).map(ScalarRegressor::Ppr)
                }
                RegressorKind::Knn => KnnRegressor::fit(x.clone(), z, config.neighbors).map(ScalarRegressor::Knn),
            }
        })
        .collect()
}

fn fit_cluster(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    rows: Vec<usize>,
    config: &MetamodelConfig,
    seed: u64,
) -> Result<ClusterModel> {
    let xc = x.select_rows(rows.iter());
    let yc = y.select_rows(rows.iter());
    let m = rows.len();
    let (reducer, scores) = match config.reducer {
        ReducerKind::None => {
            let (reps, group) = dedup_rows(&xc);
            let (xu, yu) = if reps.len() < m {
                warn!("{} duplicate inputs averaged before FkNN", m - reps.len());
                let mut yu = DMatrix::zeros(reps.len(), yc.ncols());
                let mut counts = vec![0.0; reps.len()];
                for (i, &g) in group.iter().enumerate() {
                    let mut row = yu.row_mut(g);
                    row += yc.row(i);
                    counts[g] += 1.0;
                }
                for (g, c) in counts.iter().enumerate() {
                    let mut row = yu.row_mut(g);
                    row /= *c;
                }
                (xc.select_rows(reps.iter()), yu)
            } else {
                (xc.clone(), yc.clone())
            };
            if xu.nrows() < 2 {
                let (r, s) = pca_reducer(&yu, Some(0), config.x_percent)?;
                (r, s)
            } else {
                (ClusterReducer::Fknn(Fknn::fit(xu, yu, config.neighbors)?), DMatrix::zeros(m, 0))
            }
        }
        ReducerKind::Pca => pca_reducer(&yc, config.dims, config.x_percent)?,
        ReducerKind::Rml => {
            let d = config.dims.unwrap_or(2);
            let k = config.rml_k.unwrap_or(((m as f64).sqrt().ceil() as usize).max(d + 1));
            let attempt = if k < m { rml_embed(&yc, d, k) } else {
                Err(Error::InsufficientData(format!("cluster of {m} curves is too small for k={k}")))
            };
            match attempt {
                Ok(e) => {
                    let k_rec = k.max(d + 1).min(m);
                    let scores = e.coordinates.clone();
                    (
                        ClusterReducer::Rml {
                            curves: yc.clone(),
                            coordinates: e.coordinates,
                            k: k_rec,
                        },
                        scores,
                    )
                }
                Err(err) => {
                    warn!("manifold embedding failed ({err}); falling back to PCA with {d} components");
                    pca_reducer(&yc, Some(d), config.x_percent)?
                }
            }
        }
    };
    let regressors = fit_regressors(&xc, &scores, config, seed)?;
    Ok(ClusterModel {
        rows,
        reducer,
        regressors,
    })
}

/// Fits the cluster, reduce, regress and reconstruct chain.
pub fn fit_functional_metamodel(x: &DMatrix<f64>, y: &CurveEnsemble, config: &MetamodelConfig) -> Result<FunctionalMetamodel> {
    let m = x.nrows();
    if y.runs() != m {
        return Err(Error::Shape(format!("{m} input rows but {} curves", y.runs())));
    }
    if m < 2 {
        return Err(Error::InsufficientData("a metamodel needs at least 2 training runs".into()));
    }
    if !(config.x_percent > 0.0 && config.x_percent <= 100.0) {
        return Err(Error::Input(format!("x_percent must lie in (0, 100], got {}", config.x_percent)));
    }
    if config.dims == Some(0) && config.reducer == ReducerKind::Rml {
        return Err(Error::Input("RML needs at least one dimension".into()));
    }
    let scaler = MinMaxScaler::fit(x);
    let xs = scaler.transform_rows(x)?;
    let options = ClusterOptions::default();
    let labels = match config.clusters {
        ClusterSetting::Fixed(0) => return Err(Error::Input("cluster count must be at least 1".into())),
        ClusterSetting::Fixed(1) => vec![0; m],
        ClusterSetting::Fixed(k) => cluster_curves(y, k, &options)?.labels,
        ClusterSetting::Auto { k_max, subsamples } => {
            let upper = (m / 2).saturating_sub(1);
            if m < 8 || upper < 2 {
                warn!("too few runs to estimate a cluster count; using one cluster");
                vec![0; m]
            } else {
                let est = estimate_cluster_count(y, k_max.clamp(2, upper), subsamples.max(1), config.seed, &options)?;
                match est.k {
                    Some(k) => cluster_curves(y, k, &options)?.labels,
                    None => vec![0; m],
                }
            }
        }
    };
    let k = labels.iter().max().map_or(1, |l| l + 1);
    info!("fitting {k} cluster model(s) on {m} runs");
    let clusters: Vec<ClusterModel> = (0..k)
        .into_par_iter()
        .map(|c| {
            let rows: Vec<usize> = (0..m).filter(|&i| labels[i] == c).collect();
            let seed = config.seed.wrapping_add(1000 * c as u64);
            fit_cluster(&xs, y.values(), rows, config, seed)
        })
        .collect::<Result<_>>()?;
    Ok(FunctionalMetamodel {
        config: *config,
        scaler,
        classifier: InputClassifier::new(xs, labels.clone()),
        labels,
        clusters,
        time_grid: y.time_grid().to_vec(),
    })
}

impl FunctionalMetamodel {
    pub fn time_steps(&self) -> usize {
        self.time_grid.len()
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        let xs = self.scaler.transform(x)?;
        let cluster = if self.clusters.len() == 1 { 0 } else { self.classifier.classify(&xs) };
        let model = &self.clusters[cluster];
        let coords = DVector::from_iterator(model.regressors.len(), model.regressors.iter().map(|r| r.predict(&xs)));
        let curve = match &model.reducer {
            ClusterReducer::Pca { mean, components } => mean + components.transpose() * &coords,
            ClusterReducer::Rml { curves, coordinates, k } => rml_reconstruct(curves, coordinates, &coords, *k)?,
            ClusterReducer::Fknn(f) => f.predict(&xs)?,
        };
        Ok(Prediction {
            curve,
            cluster,
            reducer: model.reducer.kind(),
        })
    }

    /// Predicted curves for every row of `x`.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rows: Vec<DVector<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict(&x.row(i).transpose()).map(|p| p.curve))
            .collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(x.nrows(), self.time_steps());
        for (i, r) in rows.iter().enumerate() {
            out.set_row(i, &r.transpose());
        }
        Ok(out)
    }
}

/// Predicted curve for one input.
pub fn predict_functional(model: &FunctionalMetamodel, x: &DVector<f64>) -> Result<Prediction> {
    model.predict(x)
}
