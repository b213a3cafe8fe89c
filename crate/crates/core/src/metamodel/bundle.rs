//! Flat-file persistence of fitted metamodels: a `manifest.txt` of
//! `key=value` lines plus one CSV file per matrix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::regress::{KnnRegressor, PprModel, PprOptions, RidgeTerm, ScalarRegressor};
use super::smoother::RidgeTable;
use super::{
    ClusterModel, ClusterReducer, ClusterSetting, Fknn, FunctionalMetamodel, InputClassifier, MetamodelConfig,
    MinMaxScaler, ReducerKind,
};
use crate::data::{format_csv, parse_csv};
use crate::error::{Error, Result};

pub const BUNDLE_VERSION: u32 = 1;
const FORMAT: &str = "funscreen-metamodel";
const MANIFEST: &str = "manifest.txt";

#[derive(Default)]
struct Writer {
    keys: BTreeMap<String, String>,
    files: Vec<(String, String)>,
}

impl Writer {
    fn key(&mut self, k: impl Into<String>, v: impl ToString) {
        self.keys.insert(k.into(), v.to_string());
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        self.key(format!("matrix.{name}"), format!("{}x{}", m.nrows(), m.ncols()));
        self.files.push((format!("{name}.csv"), format_csv(None, m)));
    }

    fn vector(&mut self, name: &str, v: &DVector<f64>) {
        self.matrix(name, &DMatrix::from_row_slice(1, v.len(), v.as_slice()));
    }

    fn indices(&mut self, name: &str, v: &[usize]) {
        let m = DMatrix::from_iterator(v.len(), 1, v.iter().map(|&i| i as f64));
        self.matrix(name, &m);
    }
}

struct Reader<'a> {
    dir: &'a Path,
    keys: BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&self, k: &str) -> Result<&str> {
        self.keys
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Bundle(format!("manifest lacks key '{k}'")))
    }

    fn get<T: FromStr>(&self, k: &str) -> Result<T> {
        let v = self.raw(k)?;
        v.parse()
            .map_err(|_| Error::Bundle(format!("manifest key '{k}' has unreadable value '{v}'")))
    }

    fn optional<T: FromStr>(&self, k: &str) -> Result<Option<T>> {
        match self.raw(k)? {
            "auto" => Ok(None),
            _ => self.get(k).map(Some),
        }
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let shape = self.raw(&format!("matrix.{name}"))?;
        let (r, c) = shape
            .split_once('x')
            .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
            .ok_or_else(|| Error::Bundle(format!("bad shape '{shape}' for {name}")))?;
        let path = self.dir.join(format!("{name}.csv"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        if r == 0 {
            return Ok(DMatrix::zeros(0, c));
        }
        let values = parse_csv(&text, false)?.values;
        if values.shape() != (r, c) {
            return Err(Error::Bundle(format!(
                "{name}.csv is {}x{}, manifest says {r}x{c}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(values)
    }

    fn vector(&self, name: &str) -> Result<DVector<f64>> {
        let m = self.matrix(name)?;
        Ok(DVector::from_iterator(m.len(), m.iter().copied()))
    }

    fn indices(&self, name: &str) -> Result<Vec<usize>> {
        let m = self.matrix(name)?;
        m.iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Bundle(format!("{name} holds non-index value {v}")))
                }
            })
            .collect()
    }
}

fn opt_to_string(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |k| k.to_string())
}

fn write_config(w: &mut Writer, c: &MetamodelConfig) {
    match c.clusters {
        ClusterSetting::Fixed(k) => w.key("config.clusters", k),
        ClusterSetting::Auto { k_max, subsamples } => {
            w.key("config.clusters", "auto");
            w.key("config.k_max", k_max);
            w.key("config.subsamples", subsamples);
        }
    }
    w.key("config.reducer", c.reducer);
    w.key("config.dims", opt_to_string(c.dims));
    w.key("config.x_percent", c.x_percent);
    w.key("config.regressor", c.regressor);
    w.key("config.neighbors", opt_to_string(c.neighbors));
    w.key("config.rml_k", opt_to_string(c.rml_k));
    w.key("config.ppr_max_terms", c.ppr.max_terms);
    w.key("config.ppr_random_starts", c.ppr.random_starts);
    w.key("config.ppr_max_iterations", c.ppr.max_iterations);
    w.key("config.ppr_min_gain", c.ppr.min_gain);
    w.key("seed", c.seed);
}

fn read_config(r: &Reader) -> Result<MetamodelConfig> {
    let clusters = match r.raw("config.clusters")? {
        "auto" => ClusterSetting::Auto {
            k_max: r.get("config.k_max")?,
            subsamples: r.get("config.subsamples")?,
        },
        _ => ClusterSetting::Fixed(r.get("config.clusters")?),
    };
    Ok(MetamodelConfig {
        clusters,
        reducer: r.raw("config.reducer")?.parse()?,
        dims: r.optional("config.dims")?,
        x_percent: r.get("config.x_percent")?,
        regressor: r.raw("config.regressor")?.parse()?,
        neighbors: r.optional("config.neighbors")?,
        rml_k: r.optional("config.rml_k")?,
        ppr: PprOptions {
            max_terms: r.get("config.ppr_max_terms")?,
            random_starts: r.get("config.ppr_random_starts")?,
            max_iterations: r.get("config.ppr_max_iterations")?,
            min_gain: r.get("config.ppr_min_gain")?,
        },
        seed: r.get("seed")?,
    })
}

fn write_regressor(w: &mut Writer, prefix: &str, reg: &ScalarRegressor) {
    w.key(format!("{prefix}.kind"), reg.kind());
    match reg {
        ScalarRegressor::Ppr(m) => {
            w.key(format!("{prefix}.intercept"), m.intercept);
            w.key(format!("{prefix}.terms"), m.terms.len());
            let path: Vec<String> = m.rss_path.iter().map(|v| v.to_string()).collect();
            w.key(format!("{prefix}.rss_path"), path.join(" "));
            for (t, term) in m.terms.iter().enumerate() {
                w.key(format!("{prefix}.t{t}.weight"), term.weight);
                w.vector(&format!("{prefix}.t{t}.direction"), &term.direction);
                let table = DMatrix::from_fn(term.table.knots.len(), 2, |i, j| {
                    if j == 0 {
                        term.table.knots[i]
                    } else {
                        term.table.values[i]
                    }
                });
                w.matrix(&format!("{prefix}.t{t}.table"), &table);
            }
        }
        ScalarRegressor::Knn(m) => {
            w.key(format!("{prefix}.k"), m.k);
            w.matrix(&format!("{prefix}.inputs"), &m.inputs);
            w.vector(&format!("{prefix}.targets"), &DVector::from_column_slice(&m.targets));
        }
    }
}

fn read_regressor(r: &Reader, prefix: &str) -> Result<ScalarRegressor> {
    match r.raw(&format!("{prefix}.kind"))? {
        "ppr" => {
            let n_terms: usize = r.get(&format!("{prefix}.terms"))?;
            let rss_path = r
                .raw(&format!("{prefix}.rss_path"))?
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Bundle(format!("bad RSS value '{s}'"))))
                .collect::<Result<Vec<_>>>()?;
            let mut terms = Vec::with_capacity(n_terms);
            for t in 0..n_terms {
                let table = r.matrix(&format!("{prefix}.t{t}.table"))?;
                if table.nrows() == 0 || table.ncols() != 2 {
                    return Err(Error::Bundle(format!("{prefix}.t{t}.table must be a non-empty Lx2 table")));
                }
                terms.push(RidgeTerm {
                    direction: r.vector(&format!("{prefix}.t{t}.direction"))?,
                    weight: r.get(&format!("{prefix}.t{t}.weight"))?,
                    table: RidgeTable {
                        knots: table.column(0).iter().copied().collect(),
                        values: table.column(1).iter().copied().collect(),
                    },
                });
            }
            Ok(ScalarRegressor::Ppr(PprModel {
                intercept: r.get(&format!("{prefix}.intercept"))?,
                terms,
                rss_path,
            }))
        }
        "knn" => Ok(ScalarRegressor::Knn(KnnRegressor {
            inputs: r.matrix(&format!("{prefix}.inputs"))?,
            targets: r.vector(&format!("{prefix}.targets"))?.iter().copied().collect(),
            k: r.get(&format!("{prefix}.k"))?,
        })),
        other => Err(Error::Bundle(format!("unknown regressor kind '{other}'"))),
    }
}

fn write_cluster(w: &mut Writer, c: usize, model: &ClusterModel) {
    let prefix = format!("cluster{c}");
    w.key(format!("{prefix}.reducer"), model.reducer.kind());
    w.key(format!("{prefix}.regressors"), model.regressors.len());
    w.indices(&format!("{prefix}.rows"), &model.rows);
    match &model.reducer {
        ClusterReducer::Pca { mean, components } => {
            w.vector(&format!("{prefix}.mean"), mean);
            w.matrix(&format!("{prefix}.components"), components);
        }
        ClusterReducer::Rml { curves, coordinates, k } => {
            w.key(format!("{prefix}.k"), k);
            w.matrix(&format!("{prefix}.curves"), curves);
            w.matrix(&format!("{prefix}.coordinates"), coordinates);
        }
        ClusterReducer::Fknn(f) => {
            w.key(format!("{prefix}.k"), f.k);
            w.matrix(&format!("{prefix}.inputs"), &f.inputs);
            w.matrix(&format!("{prefix}.curves"), &f.curves);
            w.vector(&format!("{prefix}.sigmas"), &f.sigmas);
        }
    }
    for (j, reg) in model.regressors.iter().enumerate() {
        write_regressor(w, &format!("{prefix}.r{j}"), reg);
    }
}

fn read_cluster(r: &Reader, c: usize) -> Result<ClusterModel> {
    let prefix = format!("cluster{c}");
    let kind: ReducerKind = r.raw(&format!("{prefix}.reducer"))?.parse()?;
    let reducer = match kind {
        ReducerKind::Pca => ClusterReducer::Pca {
            mean: r.vector(&format!("{prefix}.mean"))?,
            components: r.matrix(&format!("{prefix}.components"))?,
        },
        ReducerKind::Rml => ClusterReducer::Rml {
            curves: r.matrix(&format!("{prefix}.curves"))?,
            coordinates: r.matrix(&format!("{prefix}.coordinates"))?,
            k: r.get(&format!("{prefix}.k"))?,
        },
        ReducerKind::None => ClusterReducer::Fknn(Fknn {
            inputs: r.matrix(&format!("{prefix}.inputs"))?,
            curves: r.matrix(&format!("{prefix}.curves"))?,
            sigmas: r.vector(&format!("{prefix}.sigmas"))?,
            k: r.get(&format!("{prefix}.k"))?,
        }),
    };
    let n_reg: usize = r.get(&format!("{prefix}.regressors"))?;
    if n_reg != reducer.dims() {
        return Err(Error::Bundle(format!(
            "{prefix} has {n_reg} regressors for {} coordinates",
            reducer.dims()
        )));
    }
    let regressors = (0..n_reg)
        .map(|j| read_regressor(r, &format!("{prefix}.r{j}")))
        .collect::<Result<_>>()?;
    Ok(ClusterModel {
        rows: r.indices(&format!("{prefix}.rows"))?,
        reducer,
        regressors,
    })
}

/// Manifest text and files of a bundle, in write order. The manifest comes
/// last.
pub fn bundle_files(model: &FunctionalMetamodel) -> Vec<(String, String)> {
    let mut w = Writer::default();
    w.key("format", FORMAT);
    w.key("version", BUNDLE_VERSION);
    write_config(&mut w, &model.config);
    w.key("time_steps", model.time_steps());
    w.vector("time_grid", &DVector::from_column_slice(&model.time_grid));
    w.key("inputs", model.scaler.dims());
    w.key("runs", model.labels.len());
    w.key("cluster_count", model.clusters.len());
    w.key("classifier.k", model.classifier.k);
    w.vector("scaler.min", &model.scaler.min);
    w.vector("scaler.span", &model.scaler.span);
    w.matrix("classifier.inputs", &model.classifier.inputs);
    w.indices("labels", &model.labels);
    for (c, cluster) in model.clusters.iter().enumerate() {
        write_cluster(&mut w, c, cluster);
    }
    let mut manifest = String::new();
    for (k, v) in &w.keys {
        manifest.push_str(k);
        manifest.push('=');
        manifest.push_str(v);
        manifest.push('\n');
    }
    let mut files = w.files;
    files.push((MANIFEST.to_string(), manifest));
    files
}

/// Writes the bundle into `dir` (created if missing) and returns the paths.
pub fn save_metamodel(model: &FunctionalMetamodel, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, text) in bundle_files(model) {
        let path = dir.join(&name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub(crate) fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut keys = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            row: i + 1,
            message: "expected key=value".into(),
        })?;
        keys.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(keys)
}

pub fn load_metamodel(dir: impl AsRef<Path>) -> Result<FunctionalMetamodel> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let r = Reader {
        dir,
        keys: parse_manifest(&text)?,
    };
    if r.raw("format")? != FORMAT {
        return Err(Error::Bundle(format!("{} is not a metamodel bundle", dir.display())));
    }
    let version: u32 = r.get("version")?;
    if version != BUNDLE_VERSION {
        return Err(Error::Bundle(format!(
            "bundle version {version} is not supported (expected {BUNDLE_VERSION})"
        )));
    }
    let config = read_config(&r)?;
    let n_clusters: usize = r.get("cluster_count")?;
    let clusters = (0..n_clusters).map(|c| read_cluster(&r, c)).collect::<Result<Vec<_>>>()?;
    let labels = r.indices("labels")?;
    let classifier = InputClassifier {
        inputs: r.matrix("classifier.inputs")?,
        labels: labels.clone(),
        k: r.get("classifier.k")?,
    };
    let model = FunctionalMetamodel {
        config,
        scaler: MinMaxScaler {
            min: r.vector("scaler.min")?,
            span: r.vector("scaler.span")?,
        },
        labels,
        classifier,
        clusters,
        time_grid: r.vector("time_grid")?.iter().copied().collect(),
    };
    if model.scaler.dims() != r.get::<usize>("inputs")?
        || model.labels.len() != r.get::<usize>("runs")?
        || model.time_steps() != r.get::<usize>("time_steps")?
    {
        return Err(Error::Bundle("manifest shapes disagree with the stored matrices".into()));
    }
    if model.clusters.is_empty() {
        return Err(Error::Bundle("bundle has no clusters".into()));
    }
    Ok(model)
}
