//! Batch front end: `doe`, `screen`, `fit`, `predict` and `validate`, each
//! writing a directory of CSV and SVG artifacts plus a checksummed run
//! manifest.

pub mod artifacts;
mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Settings;
pub use error::{CliError, Result};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "FUNSCREEN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "funscreen", version, about = "Screening and metamodeling for curve-valued computer experiments")]
pub struct Cli {
    /// Configuration file of `key = value` lines; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a two-level fractional factorial or an optimized Latin hypercube.
    Doe(DoeArgs),
    /// Generalized sensitivity indices of a factorial design's curve outputs.
    Screen(ScreenArgs),
    /// Fit a curve-valued metamodel.
    Fit(FitArgs),
    /// Predict curves from a fitted metamodel.
    Predict(PredictArgs),
    /// K-fold cross-validation with MSE and Q2 curves.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DoeArgs {
    /// `factorial` (default) or `lhs`.
    #[arg(long)]
    pub method: Option<String>,
    /// Number of factors.
    #[arg(long)]
    pub p: Option<usize>,
    /// Target resolution of a factorial design (3 or 4).
    #[arg(long)]
    pub resolution: Option<u32>,
    /// Run count; optional for factorial designs.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Annealing iterations for `lhs`.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// Design CSV with a header row.
    #[arg(long)]
    pub design: Option<String>,
    /// Curves CSV with a header row (the time grid).
    #[arg(long)]
    pub curves: Option<String>,
    /// Inertia percentage kept when truncating components.
    #[arg(long)]
    pub x_percent: Option<f64>,
    /// Highest interaction order screened.
    #[arg(long)]
    pub order: Option<usize>,
    /// GSI percentage below which effects are left out of the ranked table.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write SVG plots (`true`/`false`).
    #[arg(long)]
    pub plot: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Curves CSV with a header row (the time grid).
    #[arg(long)]
    pub curves: Option<String>,
    /// `auto` or a cluster count.
    #[arg(long)]
    pub clusters: Option<String>,
    /// `pca`, `rml` or `none`.
    #[arg(long)]
    pub reducer: Option<String>,
    /// Reduced dimension.
    #[arg(long)]
    pub dims: Option<usize>,
    /// `ppr` or `knn`.
    #[arg(long)]
    pub regressor: Option<String>,
    /// Neighbor count of the kNN regressor and FkNN.
    #[arg(long)]
    pub k: Option<usize>,
    /// Graph neighbor count of RML.
    #[arg(long)]
    pub rml_k: Option<usize>,
    #[arg(long)]
    pub x_percent: Option<f64>,
    /// Largest cluster count tried by `clusters = auto`.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Subsamples drawn by `clusters = auto`.
    #[arg(long)]
    pub subsamples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `fit`, or a bundle directory.
    #[arg(long)]
    pub model: Option<String>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub inputs: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Also cross-validate the other reducers for the comparison plot.
    #[arg(long)]
    pub compare: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn text<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

impl OutputArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![("out", text(&self.out)), ("seed", text(&self.seed))]
    }
}

impl ModelArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("inputs", text(&self.inputs)),
            ("curves", text(&self.curves)),
            ("clusters", text(&self.clusters)),
            ("reducer", text(&self.reducer)),
            ("dims", text(&self.dims)),
            ("regressor", text(&self.regressor)),
            ("k", text(&self.k)),
            ("rml_k", text(&self.rml_k)),
            ("x_percent", text(&self.x_percent)),
            ("k_max", text(&self.k_max)),
            ("subsamples", text(&self.subsamples)),
        ]
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Doe(_) => "doe",
            Command::Screen(_) => "screen",
            Command::Fit(_) => "fit",
            Command::Predict(_) => "predict",
            Command::Validate(_) => "validate",
        }
    }

    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        let mut v = match self {
            Command::Doe(a) => vec![
                ("method", text(&a.method)),
                ("p", text(&a.p)),
                ("resolution", text(&a.resolution)),
                ("runs", text(&a.runs)),
                ("iterations", text(&a.iterations)),
            ],
            Command::Screen(a) => vec![
                ("design", text(&a.design)),
                ("curves", text(&a.curves)),
                ("x_percent", text(&a.x_percent)),
                ("order", text(&a.order)),
                ("threshold", text(&a.threshold)),
                ("plot", text(&a.plot)),
            ],
            Command::Fit(a) => a.model.pairs(),
            Command::Predict(a) => vec![("model", text(&a.model)), ("inputs", text(&a.inputs))],
            Command::Validate(a) => {
                let mut v = a.model.pairs();
                v.push(("folds", text(&a.folds)));
                v.push(("compare", text(&a.compare)));
                v
            }
        };
        let output = match self {
            Command::Doe(a) => &a.output,
            Command::Screen(a) => &a.output,
            Command::Fit(a) => &a.output,
            Command::Predict(a) => &a.output,
            Command::Validate(a) => &a.output,
        };
        v.extend(output.pairs());
        v
    }
}

/// Sizes the global worker pool from `FUNSCREEN_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A pool that already exists (repeated calls in one process) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one command and returns its output directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    configure_threads()?;
    let mut settings = Settings::load(cli.config.as_deref())?;
    settings.apply(cli.command.pairs());
    match cli.command {
        Command::Doe(_) => commands::doe(&mut settings),
        Command::Screen(_) => commands::screen(&mut settings),
        Command::Fit(_) => commands::fit(&mut settings),
        Command::Predict(_) => commands::predict(&mut settings),
        Command::Validate(_) => commands::validate(&mut settings),
    }
}
