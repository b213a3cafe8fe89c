//! Grouping of output curves by behavior: a symmetrized kNN graph on the
//! curves, commute-time distances on that graph, Ward agglomeration, and a
//! subsampling stability estimate of the number of groups.

mod agreement;
mod graph;
mod ward;

pub use agreement::{adjusted_rand_index, matched_agreement, min_cost_assignment, NearestCentroid};
pub use graph::{build_knn_graph, commute_time_distances, NeighborGraph, Weighting};
pub use ward::{cut_dendrogram, ward_cluster, ward_dendrogram, Clustering, Merge};

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::data::CurveEnsemble;
use crate::error::{Error, Result};
use crate::geometry::dedup_rows;
use crate::rng::derived;

/// Default neighbor count for the curve graph, `ceil(sqrt(n))`.
pub fn default_graph_k(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// Settings of the curve clustering pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOptions {
    /// Graph neighbor count; `None` uses `ceil(sqrt(n))`.
    pub graph_k: Option<usize>,
    pub weighting: Weighting,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            graph_k: None,
            weighting: Weighting::Gaussian,
        }
    }
}

/// Commute-time geometry of a curve set after merging identical curves.
struct CommuteGeometry {
    /// Group index of every input row.
    group: Vec<usize>,
    /// `sqrt` of the commute times between distinct curves.
    distances: DMatrix<f64>,
    components: usize,
}

fn commute_geometry(values: &DMatrix<f64>, options: &ClusterOptions) -> Result<CommuteGeometry> {
    let (reps, group) = dedup_rows(values);
    if reps.len() < values.nrows() {
        warn!(
            "{} duplicate curves merged before graph building",
            values.nrows() - reps.len()
        );
    }
    let m = reps.len();
    if m == 1 {
        return Ok(CommuteGeometry {
            group,
            distances: DMatrix::zeros(1, 1),
            components: 1,
        });
    }
    let unique = CurveEnsemble::new(values.select_rows(reps.iter()), None)?;
    let k = options.graph_k.unwrap_or_else(|| default_graph_k(m)).clamp(1, m - 1);
    let graph = build_knn_graph(&unique, k)?;
    let components = graph.component_count();
    if components > 1 {
        debug!("curve graph has {components} components");
    }
    let ct = commute_time_distances(&graph, options.weighting)?;
    Ok(CommuteGeometry {
        group,
        distances: ct.map(f64::sqrt),
        components,
    })
}

/// Full dendrogram on the distinct curves with labels re-expanded per cut.
struct CurveDendrogram {
    geometry: CommuteGeometry,
    merges: Vec<Merge>,
}

impl CurveDendrogram {
    fn build(values: &DMatrix<f64>, options: &ClusterOptions) -> Result<Self> {
        let geometry = commute_geometry(values, options)?;
        let merges = ward_dendrogram(&geometry.distances)?;
        Ok(Self { geometry, merges })
    }

    fn unique(&self) -> usize {
        self.geometry.distances.nrows()
    }

    /// Cluster count actually produced when `k` is requested: never fewer
    /// than the graph components, never more than the distinct curves.
    fn effective_k(&self, k: usize) -> usize {
        k.max(self.geometry.components).min(self.unique())
    }

    fn cut(&self, k: usize) -> Result<Clustering> {
        let k_eff = self.effective_k(k);
        let unique_labels = cut_dendrogram(self.unique(), &self.merges, k_eff)?;
        let mut map = vec![usize::MAX; k_eff];
        let mut next = 0;
        let mut labels = Vec::with_capacity(self.geometry.group.len());
        for &g in &self.geometry.group {
            let l = unique_labels[g];
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            labels.push(map[l]);
        }
        Ok(Clustering {
            labels,
            k: k_eff,
            merges: self.merges.clone(),
        })
    }
}

/// Clusters curves into `k` groups: kNN graph, commute-time distances, Ward.
/// Identical curves share a label. A graph with more than `k` components
/// yields one cluster per component; check `Clustering::k`.
pub fn cluster_curves(curves: &CurveEnsemble, k: usize, options: &ClusterOptions) -> Result<Clustering> {
    if k < 1 || k > curves.runs() {
        return Err(Error::Input(format!(
            "cluster count {k} must lie in 1..={}",
            curves.runs()
        )));
    }
    let dendrogram = CurveDendrogram::build(curves.values(), options)?;
    if k > dendrogram.unique() {
        return Err(Error::Input(format!(
            "cluster count {k} exceeds the {} distinct curves",
            dendrogram.unique()
        )));
    }
    if dendrogram.geometry.components > k {
        warn!(
            "curve graph has {} components; returning that many clusters instead of {k}",
            dendrogram.geometry.components
        );
    }
    dendrogram.cut(k)
}

/// Stability of one candidate cluster count.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityScore {
    pub k: usize,
    /// Mean label agreement between transferred and direct clusterings.
    pub agreement: f64,
    /// Expected agreement of random labelings with `k` labels.
    pub baseline: f64,
    /// `1 - (1 - agreement) / (1 - baseline)`.
    pub stability: f64,
    /// False when most subsamples could not be split into `k` groups.
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCountEstimate {
    /// `None` when no candidate beats random labels by the required margin.
    pub k: Option<usize>,
    pub scores: Vec<StabilityScore>,
}

/// Mean agreement needed over the random baseline to claim structure.
pub const STRUCTURE_MARGIN: f64 = 1.2;

const BASELINE_DRAWS: usize = 200;

fn random_baseline(n: usize, k: usize, seed: u64) -> f64 {
    let mut rng = derived(seed, 0xba5e_0000 + k as u64);
    let mut total = 0.0;
    for _ in 0..BASELINE_DRAWS {
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        total += matched_agreement(&a, &b);
    }
    total / BASELINE_DRAWS as f64
}

/// Per-subsample agreements for every candidate, with the effective cluster
/// counts reached.
fn subsample_run(
    values: &DMatrix<f64>,
    candidates: &[usize],
    options: &ClusterOptions,
    seed: u64,
    s: usize,
) -> Result<Vec<(f64, bool)>> {
    let n = values.nrows();
    let mut rng = derived(seed, s as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (train_rows, test_rows) = order.split_at(n / 2);
    let train = values.select_rows(train_rows.iter());
    let test = values.select_rows(test_rows.iter());
    let train_tree = CurveDendrogram::build(&train, options)?;
    let test_tree = CurveDendrogram::build(&test, options)?;
    candidates
        .iter()
        .map(|&k| {
            let exact = train_tree.effective_k(k) == k && test_tree.effective_k(k) == k;
            let a = train_tree.cut(k)?;
            let b = test_tree.cut(k)?;
            let transferred = NearestCentroid::fit(&train, &a.labels).predict_rows(&test);
            Ok((matched_agreement(&transferred, &b.labels), exact))
        })
        .collect()
}

/// Chooses the number of curve groups by subsampling: each round splits the
/// curves in two halves, clusters both, transfers the first half's labels to
/// the second with a nearest-centroid rule and scores the matched agreement.
/// Scores are normalized by the agreement of random labelings. The most
/// stable admissible `k` in `2..=k_max` wins, ties going to the smaller `k`.
pub fn estimate_cluster_count(
    curves: &CurveEnsemble,
    k_max: usize,
    subsamples: usize,
    seed: u64,
    options: &ClusterOptions,
) -> Result<ClusterCountEstimate> {
    let n = curves.runs();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "cluster count estimation needs at least 8 curves, got {n}"
        )));
    }
    if k_max < 2 || k_max > n / 2 - 1 {
        return Err(Error::Input(format!(
            "k_max={k_max} must lie in 2..={} for {n} curves",
            n / 2 - 1
        )));
    }
    if subsamples < 1 {
        return Err(Error::Input("at least one subsample is required".into()));
    }
    let candidates: Vec<usize> = (2..=k_max).collect();
    let runs: Vec<Vec<(f64, bool)>> = (0..subsamples)
        .into_par_iter()
        .map(|s| subsample_run(curves.values(), &candidates, options, seed, s))
        .collect::<Result<_>>()?;
    let test_size = n - n / 2;
    let mut scores = Vec::with_capacity(candidates.len());
    for (c, &k) in candidates.iter().enumerate() {
        let agreement = runs.iter().map(|r| r[c].0).sum::<f64>() / subsamples as f64;
        let exact = runs.iter().filter(|r| r[c].1).count();
        let baseline = random_baseline(test_size, k, seed);
        scores.push(StabilityScore {
            k,
            agreement,
            baseline,
            stability: 1.0 - (1.0 - agreement) / (1.0 - baseline),
            admissible: 2 * exact > subsamples,
        });
    }
    let mut best: Option<&StabilityScore> = None;
    for s in scores.iter().filter(|s| s.admissible) {
        if best.is_none_or(|b| s.stability > b.stability + 1e-12) {
            best = Some(s);
        }
    }
    let k = best.and_then(|b| {
        if b.agreement >= STRUCTURE_MARGIN * b.baseline {
            Some(b.k)
        } else {
            None
        }
    });
    if k.is_none() {
        warn!("no cluster structure detected up to k={k_max}");
    }
    Ok(ClusterCountEstimate { k, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    /// Curves scattered around `centers`, `per` each, with labels.
    fn blobs(centers: &[f64], per: usize, spread: f64, t: usize, seed: u64) -> (CurveEnsemble, Vec<usize>) {
        let mut rng = seeded(seed);
        let n = centers.len() * per;
        let mut labels = Vec::with_capacity(n);
        let m = DMatrix::from_fn(n, t, |i, j| {
            let c = centers[i % centers.len()];
            let shape = ((j as f64 + 1.0) * (1.0 + c)).sin();
            let z: f64 = StandardNormal.sample(&mut rng);
            c * 10.0 + shape + spread * z
        });
        for i in 0..n {
            labels.push(i % centers.len());
        }
        (CurveEnsemble::new(m, None).unwrap(), labels)
    }

    #[test]
    fn two_groups_are_recovered() {
        let (curves, truth) = blobs(&[0.0, 1.0], 30, 0.2, 20, 1);
        let c = cluster_curves(&curves, 2, &ClusterOptions::default()).unwrap();
        assert_eq!(c.k, 2);
        assert!((adjusted_rand_index(&c.labels, &truth) - 1.0).abs() < 1e-12);
        let est = estimate_cluster_count(&curves, 5, 10, 3, &ClusterOptions::default()).unwrap();
        assert_eq!(est.k, Some(2));
    }

    #[test]
    fn three_groups_are_found() {
        let (curves, truth) = blobs(&[0.0, 1.0, 2.0], 25, 0.2, 15, 2);
        let est = estimate_cluster_count(&curves, 6, 10, 5, &ClusterOptions::default()).unwrap();
        assert_eq!(est.k, Some(3));
        let c = cluster_curves(&curves, 3, &ClusterOptions::default()).unwrap();
        assert!((adjusted_rand_index(&c.labels, &truth) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_blob_follows_the_margin_rule() {
        let (curves, _) = blobs(&[0.0], 60, 1.0, 10, 3);
        let est = estimate_cluster_count(&curves, 5, 10, 7, &ClusterOptions::default()).unwrap();
        let best = est
            .scores
            .iter()
            .filter(|s| s.admissible)
            .fold(None::<&StabilityScore>, |b, s| match b {
                Some(b) if b.stability >= s.stability - 1e-12 => Some(b),
                _ => Some(s),
            })
            .unwrap();
        let expect = (best.agreement >= STRUCTURE_MARGIN * best.baseline).then_some(best.k);
        assert_eq!(est.k, expect);
    }

    #[test]
    fn duplicates_share_labels() {
        let (curves, _) = blobs(&[0.0, 1.0], 10, 0.1, 8, 4);
        let mut m = curves.values().clone();
        m = m.insert_row(20, 0.0);
        m.set_row(20, &curves.values().row(3));
        let dup = CurveEnsemble::new(m, None).unwrap();
        let c = cluster_curves(&dup, 2, &ClusterOptions::default()).unwrap();
        assert_eq!(c.labels[20], c.labels[3]);
    }

    #[test]
    fn scaling_leaves_labels_unchanged() {
        let (curves, _) = blobs(&[0.0, 0.3, 0.6], 12, 0.5, 10, 5);
        let scaled = CurveEnsemble::new(curves.values() * 7.5, None).unwrap();
        let a = cluster_curves(&curves, 3, &ClusterOptions::default()).unwrap();
        let b = cluster_curves(&scaled, 3, &ClusterOptions::default()).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn deterministic_estimate() {
        let (curves, _) = blobs(&[0.0, 1.0], 20, 0.3, 10, 6);
        let a = estimate_cluster_count(&curves, 4, 6, 11, &ClusterOptions::default()).unwrap();
        let b = estimate_cluster_count(&curves, 4, 6, 11, &ClusterOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_curves() {
        let (curves, _) = blobs(&[0.0], 6, 1.0, 4, 8);
        assert!(matches!(
            estimate_cluster_count(&curves, 2, 4, 1, &ClusterOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
