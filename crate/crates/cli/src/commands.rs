use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;

use funscreen_core::cluster::{cluster_curves, ClusterOptions};
use funscreen_core::data::{center_and_inertia, format_csv, load_curve_matrix, load_design, read_csv, CurveEnsemble};
use funscreen_core::doe::{
    alias_structure, fractional_factorial_with_runs, generate_fractional_factorial, optimize_lhs_traced,
};
use funscreen_core::fpca::{pc_correlations, pca_decompose};
use funscreen_core::gsi::{compute_gsi, dynamic_r2_csv, format_screening_report, si_table_csv, EffectSet, UNDEFINED};
use funscreen_core::metamodel::{
    bundle_files, fit_functional_metamodel, load_metamodel, ClusterSetting, MetamodelConfig, ReducerKind,
    RegressorKind,
};
use funscreen_core::validation::{cross_validate, ValidationReport};

use crate::artifacts::{RunManifest, Staging};
use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::plot::{line_plot, Series, Stroke};

fn out_dir(s: &Settings) -> Result<PathBuf> {
    Ok(PathBuf::from(s.require::<String>("out")?))
}

fn seed(s: &mut Settings) -> Result<u64> {
    let seed = s.get_or("seed", 0u64)?;
    s.resolve("seed", seed);
    Ok(seed)
}

fn grid_header(grid: &[f64]) -> Vec<String> {
    grid.iter().map(|t| t.to_string()).collect()
}

fn optional_csv(values: &[Option<f64>]) -> Vec<String> {
    values
        .iter()
        .map(|v| v.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string()))
        .collect()
}

fn load_inputs(path: &Path) -> Result<DMatrix<f64>> {
    let table = read_csv(path, true)?;
    if table.values.nrows() == 0 {
        return Err(CliError::Core(funscreen_core::Error::Data(format!(
            "{} holds no input rows",
            path.display()
        ))));
    }
    Ok(table.values)
}

pub fn doe(s: &mut Settings) -> Result<PathBuf> {
    let out = out_dir(s)?;
    let seed = seed(s)?;
    let method = s.get_or("method", "factorial".to_string())?;
    let p: usize = s.require("p")?;
    let mut stage = Staging::begin(&out)?;
    match method.as_str() {
        "factorial" => {
            let resolution = s.get_or("resolution", 4u32)?;
            s.resolve("resolution", resolution);
            let fd = match s.get::<usize>("runs")? {
                Some(runs) => fractional_factorial_with_runs(p, runs, resolution, seed)?,
                None => generate_fractional_factorial(p, resolution, seed)?,
            };
            let aliases = alias_structure(&fd.spec)?;
            stage.write("design.csv", format_csv(Some(fd.design.column_names()), fd.design.values()))?;
            let mut summary = format!("runs={}\nfactors={p}\nresolution={}\n", fd.design.runs(), aliases.resolution);
            for g in fd.spec.generator_labels() {
                writeln!(summary, "generator={g}").unwrap();
            }
            for (len, count) in &aliases.word_length_pattern {
                writeln!(summary, "words_of_length_{len}={count}").unwrap();
            }
            stage.write("generators.txt", summary)?;
            info!("{} runs at resolution {}", fd.design.runs(), aliases.resolution);
        }
        "lhs" => {
            let runs: usize = s.require("runs")?;
            let iterations = s.get_or("iterations", 10_000usize)?;
            s.resolve("iterations", iterations);
            let opt = optimize_lhs_traced(runs, p, iterations, seed)?;
            stage.write("design.csv", format_csv(Some(opt.design.column_names()), opt.design.values()))?;
            let mut trace = String::from("improvement,discrepancy\n");
            for (i, d) in opt.history.iter().enumerate() {
                writeln!(trace, "{i},{d}").unwrap();
            }
            stage.write("discrepancy.csv", trace)?;
        }
        other => return Err(CliError::Config(format!("method must be factorial or lhs, got {other:?}"))),
    }
    s.resolve("method", method);
    stage.commit("doe", s)
}

pub fn screen(s: &mut Settings) -> Result<PathBuf> {
    let out = out_dir(s)?;
    let design_path = s.input_path("design")?;
    let curves_path = s.input_path("curves")?;
    let x_percent = s.get_or("x_percent", 99.0f64)?;
    let order = s.get_or("order", 1usize)?;
    let threshold = s.get_or("threshold", 0.0f64)?;
    let plot = s.flag("plot", true)?;
    s.resolve("x_percent", x_percent);
    s.resolve("order", order);
    s.resolve("threshold", threshold);

    let design = load_design(&design_path)?;
    let curves = load_curve_matrix(&curves_path, true)?;
    if order == 0 || order > design.factors() {
        return Err(CliError::Config(format!("order must lie in 1..={}", design.factors())));
    }
    let effects = EffectSet::up_to_order(design.factors(), order);
    let report = compute_gsi(&design, &curves, &effects, x_percent)?;
    let pca = pca_decompose(&center_and_inertia(&curves)?)?;

    let mut stage = Staging::begin(&out)?;
    stage.input("design", &design_path)?;
    stage.input("curves", &curves_path)?;
    stage.write("gsi.csv", format_screening_report(&report, threshold))?;
    stage.write("si.csv", si_table_csv(&report))?;
    stage.write("dynamic_r2.csv", dynamic_r2_csv(&report.time_grid, &report.dynamic_r2))?;
    let mut eigen = String::from("component,eigenvalue,share,cumulative\n");
    let mut cumulative = 0.0;
    for (k, (l, share)) in pca.eigenvalues.iter().zip(pca.inertia_shares()).enumerate() {
        cumulative += share;
        writeln!(eigen, "{},{l},{share},{cumulative}", k + 1).unwrap();
    }
    stage.write("eigen.csv", eigen)?;
    let corr = pc_correlations(&pca, &curves, report.t0)?;
    stage.write("correlations.csv", format_csv(Some(&grid_header(curves.time_grid())), &corr))?;
    if plot {
        let series = [Series {
            name: "dynamic R2".into(),
            values: report.dynamic_r2.clone(),
            stroke: Stroke::Solid,
        }];
        stage.write_plot("dynamic_r2.svg", line_plot("Dynamic R2", "time", "R2", &report.time_grid, &series));
    }
    stage.commit("screen", s)
}

fn metamodel_config(s: &mut Settings) -> Result<MetamodelConfig> {
    let seed = seed(s)?;
    let clusters = match s.raw("clusters").unwrap_or("1") {
        "auto" => {
            let k_max = s.get_or("k_max", 6usize)?;
            let subsamples = s.get_or("subsamples", 20usize)?;
            s.resolve("k_max", k_max);
            s.resolve("subsamples", subsamples);
            ClusterSetting::Auto { k_max, subsamples }
        }
        _ => ClusterSetting::Fixed(s.get_or("clusters", 1usize)?),
    };
    let parse_err = |e: funscreen_core::Error| CliError::Config(e.to_string());
    let reducer: ReducerKind = s.raw("reducer").unwrap_or("pca").parse().map_err(parse_err)?;
    let regressor: RegressorKind = s.raw("regressor").unwrap_or("ppr").parse().map_err(parse_err)?;
    let config = MetamodelConfig {
        clusters,
        reducer,
        dims: s.get("dims")?,
        x_percent: s.get_or("x_percent", 99.0)?,
        regressor,
        neighbors: s.get("k")?,
        rml_k: s.get("rml_k")?,
        seed,
        ..Default::default()
    };
    s.resolve("clusters", config.clusters);
    s.resolve("reducer", config.reducer);
    s.resolve("regressor", config.regressor);
    s.resolve("x_percent", config.x_percent);
    Ok(config)
}

fn training_data(s: &Settings) -> Result<(PathBuf, PathBuf, DMatrix<f64>, CurveEnsemble)> {
    let inputs_path = s.input_path("inputs")?;
    let curves_path = s.input_path("curves")?;
    let x = load_inputs(&inputs_path)?;
    let y = load_curve_matrix(&curves_path, true)?;
    if x.nrows() != y.runs() {
        return Err(CliError::Core(funscreen_core::Error::Shape(format!(
            "{} input rows but {} curves",
            x.nrows(),
            y.runs()
        ))));
    }
    Ok((inputs_path, curves_path, x, y))
}

pub const BUNDLE_DIR: &str = "model";

pub fn fit(s: &mut Settings) -> Result<PathBuf> {
    let out = out_dir(s)?;
    let config = metamodel_config(s)?;
    let (inputs_path, curves_path, x, y) = training_data(s)?;
    let model = fit_functional_metamodel(&x, &y, &config)?;

    let mut stage = Staging::begin(&out)?;
    stage.input("inputs", &inputs_path)?;
    stage.input("curves", &curves_path)?;
    for (name, text) in bundle_files(&model) {
        stage.write(&format!("{BUNDLE_DIR}/{name}"), text)?;
    }
    let mut labels = String::from("run,cluster\n");
    for (i, l) in model.labels.iter().enumerate() {
        writeln!(labels, "{i},{l}").unwrap();
    }
    stage.write("labels.csv", labels)?;
    match cluster_curves(&y, model.clusters.len(), &ClusterOptions::default()) {
        Ok(c) => {
            let mut dendro = String::from("step,left,right,height,size\n");
            for (i, m) in c.merges.iter().enumerate() {
                writeln!(dendro, "{i},{},{},{},{}", m.left, m.right, m.height, m.size).unwrap();
            }
            stage.write("dendrogram.csv", dendro)?;
        }
        Err(e) => warn!("no dendrogram for these curves: {e}"),
    }
    stage.commit("fit", s)
}

/// Resolves a `fit` output directory or a bare bundle directory, verifying
/// the run manifest when there is one.
fn bundle_dir(path: &Path) -> Result<PathBuf> {
    let nested = path.join(BUNDLE_DIR);
    if nested.join("manifest.txt").exists() {
        if let Some(m) = RunManifest::read(path)? {
            m.verify(path)?;
        }
        Ok(nested)
    } else {
        Ok(path.to_path_buf())
    }
}

pub fn predict(s: &mut Settings) -> Result<PathBuf> {
    let out = out_dir(s)?;
    let model_path = s.input_path("model")?;
    let inputs_path = s.input_path("inputs")?;
    let model = load_metamodel(bundle_dir(&model_path)?)?;
    let x = load_inputs(&inputs_path)?;
    if x.ncols() != model.scaler.dims() {
        return Err(CliError::Core(funscreen_core::Error::Shape(format!(
            "model expects {} inputs, {} has {}",
            model.scaler.dims(),
            inputs_path.display(),
            x.ncols()
        ))));
    }
    let predictions = model.predict_rows(&x)?;
    let mut clusters = String::from("run,cluster\n");
    for i in 0..x.nrows() {
        let c = model.predict(&x.row(i).transpose())?.cluster;
        writeln!(clusters, "{i},{c}").unwrap();
    }
    s.resolve("seed", model.config.seed);

    let mut stage = Staging::begin(&out)?;
    stage.input("model", &model_path)?;
    stage.input("inputs", &inputs_path)?;
    stage.write("predictions.csv", format_csv(Some(&grid_header(&model.time_grid)), &predictions))?;
    stage.write("clusters.csv", clusters)?;
    stage.commit("predict", s)
}

fn reducer_label(r: ReducerKind) -> &'static str {
    match r {
        ReducerKind::Pca => "PCA",
        ReducerKind::Rml => "RML",
        ReducerKind::None => "FkNN",
    }
}

pub fn validate(s: &mut Settings) -> Result<PathBuf> {
    let out = out_dir(s)?;
    let config = metamodel_config(s)?;
    let folds = s.get_or("folds", 10usize)?;
    let compare = s.flag("compare", true)?;
    s.resolve("folds", folds);
    s.resolve("compare", compare);
    let (inputs_path, curves_path, x, y) = training_data(s)?;
    let report = cross_validate(&x, &y, folds, &config, config.seed)?;
    let grid = y.time_grid();

    let mut stage = Staging::begin(&out)?;
    stage.input("inputs", &inputs_path)?;
    stage.input("curves", &curves_path)?;
    let mut table = String::from("time,mse,q2\n");
    for (t, time) in grid.iter().enumerate() {
        let q = report.q2[t].map_or_else(|| UNDEFINED.to_string(), |v| v.to_string());
        writeln!(table, "{time},{},{q}", report.mse[t]).unwrap();
    }
    stage.write("validation.csv", table)?;
    stage.write("predictions.csv", format_csv(Some(&grid_header(grid)), &report.predictions))?;
    let mut fold_of = vec![0; x.nrows()];
    for (f, rows) in report.folds.iter().enumerate() {
        for &i in rows {
            fold_of[i] = f;
        }
    }
    let mut folds_csv = String::from("run,fold\n");
    for (i, f) in fold_of.iter().enumerate() {
        writeln!(folds_csv, "{i},{f}").unwrap();
    }
    stage.write("folds.csv", folds_csv)?;

    if compare {
        let kinds = [
            (ReducerKind::Pca, Stroke::Solid),
            (ReducerKind::Rml, Stroke::Dashed),
            (ReducerKind::None, Stroke::Dotted),
        ];
        let mut series = Vec::new();
        for (kind, stroke) in kinds {
            let r: Option<ValidationReport> = if kind == config.reducer {
                Some(report.clone())
            } else {
                let c = MetamodelConfig { reducer: kind, ..config };
                cross_validate(&x, &y, folds, &c, config.seed)
                    .map_err(|e| warn!("{} comparison skipped: {e}", reducer_label(kind)))
                    .ok()
            };
            if let Some(r) = r {
                series.push(Series {
                    name: reducer_label(kind).into(),
                    values: r.q2,
                    stroke,
                });
            }
        }
        let mut header = vec!["time".to_string()];
        header.extend(series.iter().map(|s| format!("q2_{}", s.name.to_ascii_lowercase())));
        let mut cmp = header.join(",") + "\n";
        for (t, time) in grid.iter().enumerate() {
            let cells: Vec<Option<f64>> = series.iter().map(|s| s.values[t]).collect();
            writeln!(cmp, "{time},{}", optional_csv(&cells).join(",")).unwrap();
        }
        stage.write("compare.csv", cmp)?;
        stage.write_plot(
            "q2.svg",
            line_plot("Cross-validated Q2", "time", "Q2", grid, &series),
        );
    }
    stage.commit("validate", s)
}
