use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::deeppoly::{analyze_point, output_bounds};
use super::{neighborhood, FeatureMask, InputBox, VerifyError};
use crate::artifact::csv_string;
use crate::dataset::Dataset;
use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInterval {
    pub date: NaiveDate,
    pub prediction_c: f64,
    pub lb_c: f64,
    pub ub_c: f64,
    pub width_c: f64,
    pub center_deviation_c: f64,
}

/// Aggregate statistics, without the per-sample rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    /// Mean certified interval width, °C.
    pub mean_perturb: f64,
    /// Mean of `max(ub - f(x), f(x) - lb)`, °C.
    pub mean_center_deviation: f64,
    pub max_width: f64,
    pub epsilon: f64,
    /// Names of the perturbed input features.
    pub mask: Vec<String>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub epsilon: f64,
    pub mask: FeatureMask,
    pub samples: Vec<SampleInterval>,
    pub mean_perturb: f64,
    pub mean_center_deviation: f64,
}

impl RobustnessReport {
    pub fn summary(&self, feature_names: &[String]) -> RobustnessSummary {
        let mask = self
            .mask
            .0
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| feature_names.get(i).cloned().unwrap_or_else(|| format!("x{i}")))
            .collect();
        RobustnessSummary {
            mean_perturb: self.mean_perturb,
            mean_center_deviation: self.mean_center_deviation,
            max_width: self.samples.iter().map(|s| s.width_c).fold(0.0, f64::max),
            epsilon: self.epsilon,
            mask,
            n_samples: self.samples.len(),
        }
    }
}

/// Certified intervals for every sample's ε-neighborhood.
pub fn mean_perturbation(
    net: &Network,
    ds: &Dataset,
    eps: f64,
    mask: &FeatureMask,
) -> Result<RobustnessReport, VerifyError> {
    if ds.is_empty() {
        return Err(VerifyError::Empty);
    }
    net.check_dataset(ds)?;
    let samples = ds
        .samples
        .par_iter()
        .map(|s| {
            let iv = analyze_point(net, &s.x, eps, mask)?;
            Ok(SampleInterval {
                date: s.date,
                prediction_c: iv.center,
                lb_c: iv.lb,
                ub_c: iv.ub,
                width_c: iv.width(),
                center_deviation_c: iv.center_deviation(),
            })
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let n = samples.len() as f64;
    let mean_perturb = samples.iter().map(|s| s.width_c).sum::<f64>() / n;
    let mean_center_deviation = samples.iter().map(|s| s.center_deviation_c).sum::<f64>() / n;
    Ok(RobustnessReport {
        epsilon: eps,
        mask: mask.clone(),
        samples,
        mean_perturb,
        mean_center_deviation,
    })
}

pub fn robustness_csv(report: &RobustnessReport) -> String {
    csv_string(
        &["date", "prediction_c", "lb_c", "ub_c", "width_c"],
        report.samples.iter().map(|s| {
            vec![
                s.date.to_string(),
                s.prediction_c.to_string(),
                s.lb_c.to_string(),
                s.ub_c.to_string(),
                s.width_c.to_string(),
            ]
        }),
    )
}

/// Counts uniformly sampled points of `bx` whose output escapes the
/// certified bounds. Any nonzero count is a soundness bug.
pub fn sampled_violations(net: &Network, bx: &InputBox, n: usize, seed: u64) -> Result<usize, VerifyError> {
    let bounds = output_bounds(net, bx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = vec![0.0; bx.dim()];
    let mut violations = 0;
    for _ in 0..n {
        for (v, (l, h)) in y.iter_mut().zip(bx.lo().iter().zip(bx.hi())) {
            *v = if l < h { rng.random_range(*l..=*h) } else { *l };
        }
        if !bounds.contains(net.predict(&y)?) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Soundness spot check over the neighborhoods of a few dataset samples.
pub fn dataset_violations(
    net: &Network,
    ds: &Dataset,
    eps: f64,
    mask: &FeatureMask,
    per_box: usize,
    max_boxes: usize,
    seed: u64,
) -> Result<usize, VerifyError> {
    let step = (ds.len() / max_boxes.max(1)).max(1);
    ds.samples
        .iter()
        .step_by(step)
        .take(max_boxes)
        .enumerate()
        .map(|(i, s)| {
            let bx = neighborhood(&s.x, eps, mask)?;
            sampled_violations(net, &bx, per_box, seed ^ i as u64)
        })
        .sum()
}
