//! Experiment harness behind the CLI: loads streams, trains, runs the
//! analyses and writes flat CSV/JSON artifacts under the output directory.
//!
//! Every artifact is a pure function of the config and seed, so reruns are
//! byte-identical.

mod config;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    load_table, prepare, prepare_for_schema, AnalysisConfig, ExperimentConfig, SearchBox, StationSet, StreamConfig,
    StreamSource,
};
pub use report::{report, ReportSummary};

use crate::analysis::{extremum_search, impact, impact_csv, AnalysisError, Direction, ExtremumResult, ImpactSummary};
use crate::artifact::{csv_string, write_atomic, write_json};
use crate::dataset::{write_dataset, write_source_csvs, DataError, Dataset, InputVariant, Splits};
use crate::network::{rmse, shape_label, Network, NetworkError};
use crate::seed;
use crate::training::{fit, grid_search, FitReport, GridResult, StopReason, TrainError};
use crate::verify::{
    dataset_violations, mean_perturbation, robustness_csv, FeatureMask, RobustnessSummary, VerifyError,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("missing artifact {}: {message}", path.display())]
    MissingArtifact { path: PathBuf, message: String },
    #[error("corrupt artifact {}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("training failed: {0}")]
    Training(#[from] TrainError),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) | ExperimentError::MissingArtifact { .. } => 3,
            ExperimentError::Training(_) | ExperimentError::Analysis(_) => 4,
            ExperimentError::Corrupt { .. } => 5,
            ExperimentError::Write { .. } => 1,
        }
    }
}

impl From<VerifyError> for ExperimentError {
    fn from(e: VerifyError) -> Self {
        ExperimentError::Analysis(e.to_string())
    }
}

impl From<AnalysisError> for ExperimentError {
    fn from(e: AnalysisError) -> Self {
        ExperimentError::Analysis(e.to_string())
    }
}

impl From<NetworkError> for ExperimentError {
    fn from(e: NetworkError) -> Self {
        ExperimentError::Analysis(e.to_string())
    }
}

type Result<T> = std::result::Result<T, ExperimentError>;

/// Where and how a command runs.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// Restrict per-stream commands to one stream.
    pub stream: Option<String>,
}

impl RunContext {
    pub fn new(config: ExperimentConfig) -> Self {
        let out = config.output_dir.clone();
        Self {
            config,
            out,
            stream: None,
        }
    }

    fn streams(&self) -> Result<Vec<&StreamConfig>> {
        match &self.stream {
            Some(name) => Ok(vec![self.config.stream(name)?]),
            None => Ok(self.config.streams.iter().collect()),
        }
    }

    fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.out.clone(), |p, s| p.join(s))
    }
}

fn json_out<T: Serialize>(path: PathBuf, value: &T, written: &mut Vec<PathBuf>) -> Result<()> {
    write_json(&path, value).map_err(|source| ExperimentError::Write {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

fn text_out(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    write_atomic(&path, text.as_bytes()).map_err(|source| ExperimentError::Write {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

fn model_out(path: PathBuf, net: &Network, written: &mut Vec<PathBuf>) -> Result<()> {
    text_out(path, &net.to_json(), written)
}

/// Reads a model artifact; absent is a data error, unparsable is corrupt.
pub fn load_model(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::MissingArtifact {
        path: path.to_path_buf(),
        message: format!("{e}; run `train` first"),
    })?;
    Network::from_json(&text).map_err(|e| ExperimentError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn variant_slug(v: InputVariant) -> String {
    v.label().to_ascii_lowercase().replace('+', "-")
}

// --- data -----------------------------------------------------------------

/// Writes each synthetic stream's per-station source files.
pub fn cmd_synth(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in ctx.streams()? {
        if !matches!(s.source, StreamSource::Synthetic { .. }) {
            log::info!("synth: stream {} reads CSV files, skipped", s.name);
            continue;
        }
        let table = load_table(&ctx.config, s)?;
        let dir = ctx.path(&["data", &s.name, "source"]);
        written.extend(write_source_csvs(&dir, &table)?);
        log::info!("synth: stream {} has {} days", s.name, table.len());
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub stream: String,
    pub variant: InputVariant,
    pub stations: Vec<String>,
    pub days: usize,
    pub samples: usize,
    pub input_dim: usize,
    pub clamped_values: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Builds the feature matrix and split of the configured variant.
pub fn cmd_ingest(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in ctx.streams()? {
        let table = load_table(&ctx.config, s)?;
        let (ds, splits) = prepare(&ctx.config, s, &table, ctx.config.variant, StationSet::All)?;
        let dir = ctx.path(&["data", &s.name]);
        write_dataset(&dir, "features", &ds)?;
        written.push(dir.join("features.csv"));
        written.push(dir.join("features.schema.json"));
        json_out(dir.join("split.json"), &splits.indices, &mut written)?;
        let summary = IngestSummary {
            stream: s.name.clone(),
            variant: ctx.config.variant,
            stations: table.stations().to_vec(),
            days: table.len(),
            samples: ds.len(),
            input_dim: ds.input_dim(),
            clamped_values: ds.clamped_values,
            train: splits.train.len(),
            validation: splits.validation.len(),
            test: splits.test.len(),
        };
        json_out(dir.join("ingest.json"), &summary, &mut written)?;
    }
    Ok(written)
}

// --- training -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Rmse {
    pub fn of(net: &Network, splits: &Splits) -> Result<Self> {
        Ok(Self {
            train: rmse(net, &splits.train)?,
            validation: rmse(net, &splits.validation)?,
            test: rmse(net, &splits.test)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stream: String,
    pub variant: InputVariant,
    pub shape: String,
    pub activation: crate::network::Activation,
    pub seed: u64,
    pub rmse_c: Rmse,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub best_iteration: usize,
    pub restart: usize,
    pub restart_losses: Vec<Option<f64>>,
}

struct Trained {
    net: Network,
    summary: TrainSummary,
    report: FitReport,
}

fn train_cell(
    ctx: &RunContext,
    stream: &StreamConfig,
    splits: &Splits,
    variant: InputVariant,
    hidden: &[usize],
    cell: &str,
) -> Result<Trained> {
    let tc = ctx.config.train_config(&stream.name, cell);
    let (net, report) = fit(hidden, ctx.config.activation, &splits.train, &splits.validation, &tc)?;
    let summary = TrainSummary {
        stream: stream.name.clone(),
        variant,
        shape: shape_label(hidden),
        activation: ctx.config.activation,
        seed: tc.seed,
        rmse_c: Rmse::of(&net, splits)?,
        iterations: report.report.iterations,
        stop_reason: report.report.stop_reason,
        best_iteration: report.report.best_iteration,
        restart: report.restart,
        restart_losses: report.restart_losses.clone(),
    };
    log::info!(
        "trained {}/{cell}: test RMSE {:.4} °C after {} iterations ({:?})",
        stream.name,
        summary.rmse_c.test,
        summary.iterations,
        summary.stop_reason
    );
    Ok(Trained { net, summary, report })
}

pub fn cmd_train(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in ctx.streams()? {
        let table = load_table(&ctx.config, s)?;
        let (_, splits) = prepare(&ctx.config, s, &table, ctx.config.variant, StationSet::All)?;
        let t = train_cell(ctx, s, &splits, ctx.config.variant, &ctx.config.shape(), "main")?;
        let dir = ctx.path(&["models", &s.name]);
        model_out(dir.join("model.json"), &t.net, &mut written)?;
        json_out(dir.join("train_report.json"), &t.summary, &mut written)?;
        json_out(dir.join("curves.json"), &t.report.report, &mut written)?;
    }
    Ok(written)
}

fn model_path(ctx: &RunContext, stream: &str, model: Option<&Path>) -> PathBuf {
    model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.path(&["models", stream, "model.json"]))
}

/// Loads a stream's model and rebuilds the data it was trained on.
fn model_and_data(ctx: &RunContext, s: &StreamConfig, model: Option<&Path>) -> Result<(Network, Dataset, Splits)> {
    let path = model_path(ctx, &s.name, model);
    let net = load_model(&path)?;
    let schema = net.schema().cloned().ok_or_else(|| ExperimentError::Corrupt {
        path: path.clone(),
        message: "model has no dataset schema".into(),
    })?;
    let table = load_table(&ctx.config, s)?;
    let (ds, splits) = prepare_for_schema(&ctx.config, s, &table, &schema)?;
    Ok((net, ds, splits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub stream: String,
    pub model: String,
    pub shape: String,
    pub rmse_c: Rmse,
}

/// RMSE of a saved model on the train, validation and test splits.
pub fn cmd_evaluate(ctx: &RunContext, model: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in ctx.streams()? {
        let (net, _, splits) = model_and_data(ctx, s, model)?;
        let ev = Evaluation {
            stream: s.name.clone(),
            model: model_path(ctx, &s.name, model).display().to_string(),
            shape: net.shape_label(),
            rmse_c: Rmse::of(&net, &splits)?,
        };
        json_out(ctx.path(&["metrics", &s.name, "evaluation.json"]), &ev, &mut written)?;
    }
    Ok(written)
}

// --- analyses -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessArtifact {
    pub stream: String,
    #[serde(flatten)]
    pub summary: RobustnessSummary,
    /// Sampled points that escaped their certified interval; must be 0.
    pub soundness_violations: usize,
    pub soundness_points: usize,
}

fn robustness_of(
    ctx: &RunContext,
    stream: &str,
    net: &Network,
    test: &Dataset,
) -> Result<(RobustnessArtifact, String)> {
    let a = &ctx.config.analysis;
    let mask = FeatureMask::for_kinds(&test.schema, &a.perturb);
    let rep = mean_perturbation(net, test, a.epsilon, &mask)?;
    let boxes = a.soundness_boxes.min(test.len());
    let violations = dataset_violations(
        net,
        test,
        a.epsilon,
        &mask,
        a.soundness_samples,
        boxes,
        seed::derive(ctx.config.seed, &format!("soundness/{stream}")),
    )?;
    if violations > 0 {
        log::error!("robustness {stream}: {violations} sampled points escaped their certified interval");
    }
    let art = RobustnessArtifact {
        stream: stream.to_string(),
        summary: rep.summary(&test.schema.feature_names),
        soundness_violations: violations,
        soundness_points: boxes * a.soundness_samples,
    };
    Ok((art, robustness_csv(&rep)))
}

pub fn cmd_robustness(ctx: &RunContext, model: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in ctx.streams()? {
        let (net, _, splits) = model_and_data(ctx, s, model)?;
        let (art, csv) = robustness_of(ctx, &s.name, &net, &splits.test)?;
        let dir = ctx.path(&["robustness", &s.name]);
        text_out(dir.join("intervals.csv"), &csv, &mut written)?;
        json_out(dir.join("summary.json"), &art, &mut written)?;
    }
    Ok(written)
}

fn extrema_of(ctx: &RunContext, stream: &str, net: &Network) -> Result<(ExtremumResult, ExtremumResult)> {
    let schema = net
        .schema()
        .ok_or_else(|| ExperimentError::Analysis("model has no schema".into()))?;
    let bx = ctx.config.analysis.search_box.to_input_box(schema)?;
    let ec = crate::analysis::ExtremumConfig {
        seed: seed::derive(ctx.config.seed, &format!("minmax/{stream}")),
        ..ctx.config.analysis.extremum
    };
    let max = extremum_search(net, &bx, Direction::Max, &ec)?;
    let min = extremum_search(net, &bx, Direction::Min, &ec)?;
    Ok((max, min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxSummary {
    pub stream: String,
    pub max_c: f64,
    pub min_c: f64,
    pub max_boundary_coordinates: usize,
    pub min_boundary_coordinates: usize,
    pub restarts: usize,
}

pub fn cmd_minmax(ctx: &RunContext, model: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in ctx.streams()? {
        let path = model_path(ctx, &s.name, model);
        let net = load_model(&path)?;
        let (max, min) = extrema_of(ctx, &s.name, &net)?;
        let dir = ctx.path(&["minmax", &s.name]);
        json_out(dir.join("max.json"), &max.to_json_value(), &mut written)?;
        json_out(dir.join("min.json"), &min.to_json_value(), &mut written)?;
        let summary = MinMaxSummary {
            stream: s.name.clone(),
            max_c: max.best_output_c,
            min_c: min.best_output_c,
            max_boundary_coordinates: max.boundary_coordinate_count,
            min_boundary_coordinates: min.boundary_coordinate_count,
            restarts: ctx.config.analysis.extremum.restarts,
        };
        json_out(dir.join("summary.json"), &summary, &mut written)?;
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactMedians {
    pub stream: String,
    pub n_samples: usize,
    pub features: Vec<ImpactSummary>,
}

pub fn cmd_impact(ctx: &RunContext, model: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in ctx.streams()? {
        let (net, _, splits) = model_and_data(ctx, s, model)?;
        let rep = impact(&net, &splits.test)?;
        let dir = ctx.path(&["impact", &s.name]);
        text_out(dir.join("impact.csv"), &impact_csv(&rep), &mut written)?;
        let medians = ImpactMedians {
            stream: s.name.clone(),
            n_samples: rep.n_samples,
            features: rep.medians(),
        };
        json_out(dir.join("medians.json"), &medians, &mut written)?;
    }
    Ok(written)
}

// --- sweep ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    #[serde(flatten)]
    pub train: TrainSummary,
    pub mean_perturb_c: f64,
    pub mean_center_deviation_c: f64,
    pub max_c: f64,
    pub min_c: f64,
    pub soundness_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCellMetrics {
    #[serde(flatten)]
    pub train: TrainSummary,
    pub station_set: StationSet,
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn input_row_label(v: InputVariant, set: StationSet, sets: &[StationSet]) -> String {
    match (set, sets.len()) {
        (_, 1) => v.label().to_string(),
        (StationSet::All, _) => format!("{} (all stations)", v.label()),
        (StationSet::First, _) => format!("{} (1 station)", v.label()),
    }
}

/// Input-combination sweep (RMSE per variant and stream) and architecture
/// sweep (RMSE, MeanPerturb, Max, Min per shape and stream).
pub fn cmd_sweep(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let streams = ctx.streams()?;
    let mut written = Vec::new();
    let mut table1: Vec<Vec<String>> = Vec::new();
    let mut row_labels = Vec::new();
    for &set in &cfg.station_sets {
        for &v in &cfg.variants {
            row_labels.push((v, set));
        }
    }
    let mut t1_cells: Vec<Vec<f64>> = vec![Vec::new(); row_labels.len()];
    let mut table2 = Vec::new();

    for s in &streams {
        let table = load_table(cfg, s)?;

        let inputs = row_labels
            .par_iter()
            .map(|&(v, set)| {
                let (_, splits) = prepare(cfg, s, &table, v, set)?;
                let cell = format!("{}-{}", variant_slug(v), set.slug());
                let t = train_cell(ctx, s, &splits, v, &cfg.shape(), &format!("inputs/{cell}"))?;
                Ok((cell, set, t))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, (cell, set, t)) in inputs.into_iter().enumerate() {
            let dir = ctx.path(&["sweep", &s.name, "inputs", &cell]);
            model_out(dir.join("model.json"), &t.net, &mut written)?;
            let m = InputCellMetrics {
                train: t.summary,
                station_set: set,
            };
            t1_cells[i].push(m.train.rmse_c.test);
            json_out(dir.join("metrics.json"), &m, &mut written)?;
        }

        let (_, splits) = prepare(cfg, s, &table, cfg.variant, StationSet::All)?;
        let shapes = cfg
            .architectures
            .par_iter()
            .map(|a| {
                let hidden = crate::network::parse_shape(a).map_err(ExperimentError::Config)?;
                let label = shape_label(&hidden);
                let t = train_cell(ctx, s, &splits, cfg.variant, &hidden, &format!("shapes/{label}"))?;
                let (rob, _) = robustness_of(ctx, &s.name, &t.net, &splits.test)?;
                let (max, min) = extrema_of(ctx, &s.name, &t.net)?;
                Ok((
                    label,
                    t.net,
                    ShapeMetrics {
                        train: t.summary,
                        mean_perturb_c: rob.summary.mean_perturb,
                        mean_center_deviation_c: rob.summary.mean_center_deviation,
                        max_c: max.best_output_c,
                        min_c: min.best_output_c,
                        soundness_violations: rob.soundness_violations,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        for (label, net, m) in shapes {
            let dir = ctx.path(&["sweep", &s.name, "shapes", &label]);
            model_out(dir.join("model.json"), &net, &mut written)?;
            json_out(dir.join("metrics.json"), &m, &mut written)?;
            table2.push(vec![
                s.name.clone(),
                label,
                fmt4(m.train.rmse_c.test),
                fmt4(m.mean_perturb_c),
                fmt4(m.max_c),
                fmt4(m.min_c),
            ]);
        }

        if let Some(space) = &cfg.grid {
            let results: Vec<GridResult> = grid_search(
                space,
                &splits,
                &cfg.training,
                seed::derive(cfg.seed, &format!("grid/{}", s.name)),
            )
            .map_err(ExperimentError::Config)?;
            let csv = csv_string(
                &[
                    "rank",
                    "shape",
                    "activation",
                    "validation_rmse",
                    "test_rmse",
                    "iterations",
                    "error",
                ],
                results.iter().enumerate().map(|(rank, r)| {
                    vec![
                        (rank + 1).to_string(),
                        r.shape.clone(),
                        r.activation.name().to_string(),
                        r.validation_rmse.map(fmt4).unwrap_or_default(),
                        r.test_rmse.map(fmt4).unwrap_or_default(),
                        r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                        r.error.clone().unwrap_or_default(),
                    ]
                }),
            );
            text_out(ctx.path(&["sweep", &s.name, "grid.csv"]), &csv, &mut written)?;
        }
    }

    for (i, (v, set)) in row_labels.iter().enumerate() {
        let mut row = vec![input_row_label(*v, *set, &cfg.station_sets)];
        row.extend(t1_cells[i].iter().map(|&x| fmt4(x)));
        table1.push(row);
    }
    let mut header = vec!["input".to_string()];
    header.extend(streams.iter().map(|s| s.name.clone()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    text_out(
        ctx.path(&["sweep", "table1.csv"]),
        &csv_string(&header_refs, &table1),
        &mut written,
    )?;
    text_out(
        ctx.path(&["sweep", "table2.csv"]),
        &csv_string(&["stream", "shape", "rmse", "mean_perturb", "max", "min"], &table2),
        &mut written,
    )?;
    Ok(written)
}
