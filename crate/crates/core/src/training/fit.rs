use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::initialize;
use super::{train, TrainConfig, TrainError, TrainReport};
use crate::dataset::Dataset;
use crate::network::{Activation, Network};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Which restart was kept.
    pub restart: usize,
    /// Best validation loss of each restart (`None` if it diverged).
    pub restart_losses: Vec<Option<f64>>,
    pub report: TrainReport,
}

/// Initializes and trains `cfg.restarts` networks, keeping the one with the
/// lowest best-validation loss. Ties go to the earlier restart.
pub fn fit(
    hidden: &[usize],
    activation: Activation,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, FitReport), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let runs: Vec<Result<(Network, TrainReport), TrainError>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let s = seed::derive(cfg.seed, &format!("init/{r}"));
            let net = initialize(hidden, cfg.init, activation, train_set, s)?;
            train(&net, train_set, val_set, cfg)
        })
        .collect();
    let restart_losses: Vec<Option<f64>> = runs
        .iter()
        .map(|r| r.as_ref().ok().map(|(_, rep)| rep.best_validation_loss))
        .collect();
    let best = restart_losses
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    let mut runs = runs;
    match best {
        Some(i) => {
            let (net, report) = runs.swap_remove(i).expect("restart succeeded");
            Ok((
                net,
                FitReport {
                    restart: i,
                    restart_losses,
                    report,
                },
            ))
        }
        None => Err(runs.swap_remove(0).expect_err("all restarts failed")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_features, split, synthesize, FeatureConfig, InputVariant, SynthConfig};

    #[test]
    fn keeps_lowest_validation_loss() {
        let t = synthesize(&SynthConfig {
            n_days: 300,
            ..SynthConfig::default()
        })
        .unwrap();
        let ds = build_features(&t, &FeatureConfig::new(2, InputVariant::AirRunoff)).unwrap();
        let sp = split(&ds, 1).unwrap();
        let cfg = TrainConfig {
            restarts: 3,
            max_iterations: 30,
            ..TrainConfig::default()
        };
        let (net, rep) = fit(&[4], Activation::Relu, &sp.train, &sp.validation, &cfg).unwrap();
        assert_eq!(rep.restart_losses.len(), 3);
        let min = rep
            .restart_losses
            .iter()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(rep.report.best_validation_loss, min);
        let again = fit(&[4], Activation::Relu, &sp.train, &sp.validation, &cfg).unwrap().0;
        assert_eq!(net, again);
    }
}
