use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::analysis::ExtremumConfig;
use crate::dataset::{
    build_features_with, ingest, split_with, synthesize, Dataset, DatasetSchema, FeatureConfig, FeatureKind,
    InputVariant, JoinedTable, NormalizationSpec, SplitStrategy, Splits, SynthConfig,
};
use crate::network::{parse_shape, Activation};
use crate::seed;
use crate::training::{GridSpace, TrainConfig, PRESET_SHAPES};
use crate::verify::{InputBox, PerturbedKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamSource {
    Synthetic {
        #[serde(default)]
        synth: SynthConfig,
    },
    /// One air-temperature file per station, one hydrology file.
    Csv { air: Vec<PathBuf>, hydro: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub name: String,
    #[serde(flatten)]
    pub source: StreamSource,
}

/// Which air-temperature stations feed the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationSet {
    #[default]
    All,
    /// Only the first listed station.
    First,
}

impl StationSet {
    pub fn slug(self) -> &'static str {
        match self {
            StationSet::All => "all",
            StationSet::First => "first",
        }
    }
}

/// Closed physical ranges, per feature kind, for the min/max search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBox {
    pub air_c: [f64; 2],
    pub runoff_m3s: [f64; 2],
    pub day: [f64; 2],
}

impl Default for SearchBox {
    /// The whole normalized domain.
    fn default() -> Self {
        let n = NormalizationSpec::default();
        Self {
            air_c: [n.temp_min, n.temp_max],
            runoff_m3s: [n.runoff_min, n.runoff_max],
            day: [0.0, 1.0 / n.day_scale],
        }
    }
}

impl SearchBox {
    pub fn to_input_box(&self, schema: &DatasetSchema) -> Result<InputBox, ExperimentError> {
        let norm = &schema.normalization;
        let (lo, hi): (Vec<f64>, Vec<f64>) = schema
            .feature_kinds()
            .iter()
            .map(|k| {
                let [a, b] = match k {
                    FeatureKind::Air { .. } => self.air_c,
                    FeatureKind::Runoff { .. } => self.runoff_m3s,
                    FeatureKind::DayOfYear => self.day,
                };
                (
                    k.normalize(norm, a).clamp(0.0, 1.0),
                    k.normalize(norm, b).clamp(0.0, 1.0),
                )
            })
            .unzip();
        InputBox::new(lo, hi).map_err(|e| ExperimentError::Config(format!("analysis.search_box: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Perturbation radius in normalized units.
    pub epsilon: f64,
    pub perturb: Vec<PerturbedKind>,
    pub extremum: ExtremumConfig,
    pub search_box: SearchBox,
    /// Sampled soundness spot check: boxes per stream and points per box.
    pub soundness_boxes: usize,
    pub soundness_samples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            perturb: vec![PerturbedKind::Air, PerturbedKind::Runoff],
            extremum: ExtremumConfig::default(),
            search_box: SearchBox::default(),
            soundness_boxes: 20,
            soundness_samples: 1000,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_variants() -> Vec<InputVariant> {
    InputVariant::ALL.to_vec()
}

fn default_station_sets() -> Vec<StationSet> {
    vec![StationSet::All]
}

fn default_variant() -> InputVariant {
    InputVariant::AirRunoffDay
}

fn default_architecture() -> String {
    "9-7-13".into()
}

fn default_architectures() -> Vec<String> {
    PRESET_SHAPES.iter().map(|(name, _)| name.to_string()).collect()
}

fn default_lag_window() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub streams: Vec<StreamConfig>,
    /// Input combinations of the input sweep.
    #[serde(default = "default_variants")]
    pub variants: Vec<InputVariant>,
    #[serde(default = "default_station_sets")]
    pub station_sets: Vec<StationSet>,
    /// Input combination for `train`, the analyses and the architecture sweep.
    #[serde(default = "default_variant")]
    pub variant: InputVariant,
    #[serde(default = "default_architecture")]
    pub architecture: String,
    /// Shapes of the architecture sweep.
    #[serde(default = "default_architectures")]
    pub architectures: Vec<String>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub split: SplitStrategy,
    #[serde(default = "default_lag_window")]
    pub lag_window: usize,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Optional grid search, run by `sweep` when present.
    #[serde(default)]
    pub grid: Option<GridSpace>,
}

impl ExperimentConfig {
    /// Parses JSON or TOML (by extension; otherwise JSON is tried first).
    /// Relative CSV paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let mut cfg = match ext {
            "toml" => Self::from_toml(&text),
            "json" => Self::from_json(&text),
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text)),
        }
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut cfg.streams {
            if let StreamSource::Csv { air, hydro } = &mut s.source {
                for p in air.iter_mut() {
                    *p = base.join(&*p);
                }
                *hydro = base.join(&*hydro);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        if self.streams.is_empty() {
            return fail("at least one stream is required".into());
        }
        let mut names = HashSet::new();
        for s in &self.streams {
            let ok = !s.name.is_empty()
                && s.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return fail(format!(
                    "stream name `{}` must be non-empty ASCII letters, digits, '-' or '_'",
                    s.name
                ));
            }
            if !names.insert(&s.name) {
                return fail(format!("duplicate stream name `{}`", s.name));
            }
            match &s.source {
                StreamSource::Synthetic { synth } => synth
                    .validate()
                    .map_err(|e| ExperimentError::Config(format!("stream {}: {e}", s.name)))?,
                StreamSource::Csv { air, .. } if air.is_empty() => {
                    return fail(format!("stream {}: no air-temperature files", s.name));
                }
                StreamSource::Csv { .. } => {}
            }
        }
        if self.variants.is_empty() || self.station_sets.is_empty() {
            return fail("at least one variant and one station set are required".into());
        }
        if self.architectures.is_empty() {
            return fail("at least one architecture is required".into());
        }
        for a in std::iter::once(&self.architecture).chain(&self.architectures) {
            parse_shape(a).map_err(|e| ExperimentError::Config(format!("architecture `{a}`: {e}")))?;
        }
        if self.lag_window == 0 {
            return fail("lag_window must be at least 1".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return fail("output_dir must not be empty".into());
        }
        self.training
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let a = &self.analysis;
        if a.epsilon.is_nan() || a.epsilon < 0.0 {
            return fail("analysis.epsilon must be non-negative".into());
        }
        if a.extremum.restarts == 0 || a.extremum.step_size.is_nan() || a.extremum.step_size <= 0.0 {
            return fail("analysis.extremum needs restarts >= 1 and step_size > 0".into());
        }
        let sb = &a.search_box;
        for (name, [l, h]) in [("air_c", sb.air_c), ("runoff_m3s", sb.runoff_m3s), ("day", sb.day)] {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return fail(format!("analysis.search_box.{name} must be a finite [low, high] range"));
            }
        }
        if let Some(g) = &self.grid {
            g.validate().map_err(ExperimentError::Config)?;
        }
        Ok(())
    }

    pub fn stream(&self, name: &str) -> Result<&StreamConfig, ExperimentError> {
        self.streams
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ExperimentError::Config(format!("no stream named `{name}` in the config")))
    }

    pub fn shape(&self) -> Vec<usize> {
        parse_shape(&self.architecture).expect("validated")
    }

    /// Training settings for one (stream, cell) pair; independent of which
    /// other cells run.
    pub fn train_config(&self, stream: &str, cell: &str) -> TrainConfig {
        TrainConfig {
            seed: seed::derive(self.seed, &format!("train/{stream}/{cell}")),
            ..self.training
        }
    }

    pub fn split_seed(&self, stream: &str) -> u64 {
        seed::derive(self.seed, &format!("split/{stream}"))
    }
}

/// Raw joined table of a stream.
pub fn load_table(cfg: &ExperimentConfig, stream: &StreamConfig) -> Result<JoinedTable, ExperimentError> {
    match &stream.source {
        StreamSource::Synthetic { synth } => {
            let synth = SynthConfig {
                seed: seed::derive(cfg.seed ^ synth.seed, &format!("synth/{}", stream.name)),
                ..synth.clone()
            };
            Ok(synthesize(&synth)?)
        }
        StreamSource::Csv { air, hydro } => Ok(ingest(air, hydro)?),
    }
}

/// Features for a variant over a station set, with the stream's split.
pub fn prepare(
    cfg: &ExperimentConfig,
    stream: &StreamConfig,
    table: &JoinedTable,
    variant: InputVariant,
    stations: StationSet,
) -> Result<(Dataset, Splits), ExperimentError> {
    let table = match stations {
        StationSet::All => table.clone(),
        StationSet::First => table.select_stations(&[0])?,
    };
    let fc = FeatureConfig::new(table.n_stations(), variant).with_lag_window(cfg.lag_window);
    let ds = build_features_with(&table, &fc, NormalizationSpec::default())?;
    let splits = split_with(&ds, cfg.split_seed(&stream.name), cfg.split)?;
    Ok((ds, splits))
}

/// Rebuilds the exact features and split a saved model was trained on.
pub fn prepare_for_schema(
    cfg: &ExperimentConfig,
    stream: &StreamConfig,
    table: &JoinedTable,
    schema: &DatasetSchema,
) -> Result<(Dataset, Splits), ExperimentError> {
    let idx = schema
        .station_names
        .iter()
        .map(|n| {
            table.stations().iter().position(|s| s == n).ok_or_else(|| {
                ExperimentError::Data(crate::dataset::DataError::Schema(format!(
                    "model expects station `{n}`, stream {} does not have it",
                    stream.name
                )))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = table.select_stations(&idx)?;
    let ds = build_features_with(&table, &schema.features, schema.normalization)?;
    if !ds.schema.is_compatible(schema) {
        return Err(ExperimentError::Data(crate::dataset::DataError::Schema(
            "rebuilt features differ from the model's schema".into(),
        )));
    }
    let splits = split_with(&ds, cfg.split_seed(&stream.name), cfg.split)?;
    Ok((ds, splits))
}
