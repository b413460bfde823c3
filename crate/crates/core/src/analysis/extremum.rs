use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::network::Network;
use crate::verify::InputBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Max => 1.0,
            Direction::Min => -1.0,
        }
    }

    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Max => a > b,
            Direction::Min => a < b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremumConfig {
    pub restarts: usize,
    pub steps: usize,
    /// Normalized input units per step.
    pub step_size: f64,
    pub seed: u64,
}

impl Default for ExtremumConfig {
    fn default() -> Self {
        Self {
            restarts: 256,
            steps: 500,
            step_size: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartEndpoint {
    pub restart: usize,
    /// Normalized output at the final iterate.
    pub endpoint_output: f64,
    /// Best normalized output visited along the trajectory.
    pub best_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledValue {
    pub feature: String,
    pub normalized: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremumResult {
    pub direction: Direction,
    pub best_input: Vec<f64>,
    pub best_input_labeled: Vec<LabeledValue>,
    /// Normalized network output at `best_input`.
    pub best_output: f64,
    pub best_output_c: f64,
    pub best_restart: usize,
    pub boundary_coordinate_count: usize,
    pub restarts: Vec<RestartEndpoint>,
    /// Restarts dropped because a gradient was not finite.
    pub discarded_restarts: Vec<usize>,
}

impl ExtremumResult {
    /// The report shape written to disk.
    pub fn to_json_value(&self) -> serde_json::Value {
        let denorm: BTreeMap<&str, f64> = self
            .best_input_labeled
            .iter()
            .map(|l| (l.feature.as_str(), l.value))
            .collect();
        serde_json::json!({
            "direction": self.direction,
            "best_output_c": self.best_output_c,
            "best_output_normalized": self.best_output,
            "best_input_normalized": self.best_input,
            "best_input_denormalized": denorm,
            "boundary_coordinate_count": self.boundary_coordinate_count,
            "best_restart": self.best_restart,
            "discarded_restarts": self.discarded_restarts,
            "restarts": self.restarts,
        })
    }
}

struct Trajectory {
    endpoint_output: f64,
    best_output: f64,
    best_x: Vec<f64>,
}

fn run_restart(
    net: &Network,
    bx: &InputBox,
    dir: Direction,
    cfg: &ExtremumConfig,
    restart: usize,
) -> Result<Option<Trajectory>, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut x: Vec<f64> = bx
        .lo()
        .iter()
        .zip(bx.hi())
        .map(|(&l, &h)| if l < h { rng.random_range(l..=h) } else { l })
        .collect();
    let step = dir.sign() * cfg.step_size;
    let mut best_output = f64::NAN;
    let mut best_x = x.clone();
    let mut y = f64::NAN;
    for it in 0..=cfg.steps {
        let (value, grad) = net.output_gradient(&x)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            log::warn!("extremum restart {restart}: non-finite gradient at step {it}, discarded");
            return Ok(None);
        }
        y = value;
        if it == 0 || dir.better(value, best_output) {
            best_output = value;
            best_x.copy_from_slice(&x);
        }
        if it == cfg.steps {
            break;
        }
        for (v, g) in x.iter_mut().zip(&grad) {
            *v += step * g;
        }
        bx.project(&mut x);
    }
    Ok(Some(Trajectory {
        endpoint_output: y,
        best_output,
        best_x,
    }))
}

/// Multi-start projected gradient ascent (or descent) on the network
/// output over `bx`. Restart `r` draws its start from stream `r` of the
/// seeded generator, so adding restarts never changes the earlier ones.
pub fn extremum_search(
    net: &Network,
    bx: &InputBox,
    dir: Direction,
    cfg: &ExtremumConfig,
) -> Result<ExtremumResult, AnalysisError> {
    if cfg.restarts == 0 || cfg.step_size.is_nan() || cfg.step_size <= 0.0 {
        return Err(AnalysisError::InvalidConfig);
    }
    if bx.dim() != net.input_dim() {
        return Err(crate::verify::VerifyError::Dimension {
            expected: net.input_dim(),
            got: bx.dim(),
        }
        .into());
    }
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(net, bx, dir, cfg, r))
        .collect::<Result<Vec<_>, _>>()?;

    let mut restarts = Vec::new();
    let mut discarded = Vec::new();
    let mut best: Option<(usize, &Trajectory)> = None;
    for (r, run) in runs.iter().enumerate() {
        match run {
            None => discarded.push(r),
            Some(t) => {
                restarts.push(RestartEndpoint {
                    restart: r,
                    endpoint_output: t.endpoint_output,
                    best_output: t.best_output,
                });
                if best.is_none_or(|(_, b)| dir.better(t.best_output, b.best_output)) {
                    best = Some((r, t));
                }
            }
        }
    }
    let (best_restart, t) = best.ok_or(AnalysisError::AllRestartsFailed)?;

    let boundary_coordinate_count = t
        .best_x
        .iter()
        .zip(bx.lo().iter().zip(bx.hi()))
        .filter(|(&v, (&l, &h))| l < h && (v == l || v == h))
        .count();
    let norm = net.normalization();
    let best_input_labeled = match net.schema() {
        Some(s) => s
            .feature_kinds()
            .iter()
            .zip(&s.feature_names)
            .zip(&t.best_x)
            .map(|((k, name), &v)| LabeledValue {
                feature: name.clone(),
                normalized: v,
                value: k.denormalize(&norm, v),
            })
            .collect(),
        None => t
            .best_x
            .iter()
            .enumerate()
            .map(|(i, &v)| LabeledValue {
                feature: format!("x{i}"),
                normalized: v,
                value: v,
            })
            .collect(),
    };
    Ok(ExtremumResult {
        direction: dir,
        best_input: t.best_x.clone(),
        best_input_labeled,
        best_output: t.best_output,
        best_output_c: norm.denormalize_temperature(t.best_output),
        best_restart,
        boundary_coordinate_count,
        restarts,
        discarded_restarts: discarded,
    })
}
