use std::ops::ControlFlow;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::init::InitScheme;
use super::lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsError, LbfgsStop};
use super::TrainError;
use crate::dataset::Dataset;
use crate::network::Network;

/// Scale on which the validation loss is compared against `stop_tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationScale {
    /// Mean squared error in °C².
    #[default]
    Celsius,
    /// Mean squared error of the normalized targets.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub stop_tolerance: f64,
    pub patience: usize,
    pub lbfgs_history: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search_steps: usize,
    pub gradient_tolerance: f64,
    pub validation_scale: ValidationScale,
    /// Independent initializations tried by [`fit`](super::fit); the one
    /// with the lowest validation loss wins.
    pub restarts: usize,
    pub init: InitScheme,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            stop_tolerance: 1e-4,
            patience: 10,
            lbfgs_history: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_steps: 25,
            gradient_tolerance: 1e-10,
            validation_scale: ValidationScale::Celsius,
            restarts: 8,
            init: InitScheme::DataCentered,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            max_iterations: self.max_iterations,
            history: self.lbfgs_history,
            c1: self.c1,
            c2: self.c2,
            max_line_search_steps: self.max_line_search_steps,
            gradient_tolerance: self.gradient_tolerance,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.restarts == 0 {
            return Err(TrainError::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(TrainError::InvalidConfig("patience must be at least 1".into()));
        }
        if self.stop_tolerance.is_nan() || self.stop_tolerance < 0.0 {
            return Err(TrainError::InvalidConfig("stop_tolerance must be non-negative".into()));
        }
        self.lbfgs()
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Gradient vanished.
    Converged,
    /// Validation loss stopped improving.
    Patience,
    MaxIterations,
    /// No step along the L-BFGS or steepest-descent direction lowered the loss.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub final_train_loss: f64,
    pub best_validation_loss: f64,
    pub best_iteration: usize,
    pub stop_reason: StopReason,
    pub validation_scale: ValidationScale,
    /// Training MSE (normalized) per iteration, index 0 is the initial network.
    pub train_curve: Vec<f64>,
    /// Validation loss on `validation_scale` per iteration.
    pub validation_curve: Vec<f64>,
}

/// Tracks the best validation loss and stops once it has not dropped by
/// at least `tolerance` within `patience` consecutive iterations.
///
/// Slow steady progress counts: the reference is the best loss when the
/// current window opened, not the previous iteration.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    tolerance: f64,
    patience: usize,
    best: f64,
    best_iteration: usize,
    reference: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(tolerance: f64, patience: usize, initial_loss: f64) -> Self {
        Self {
            tolerance,
            patience,
            best: initial_loss,
            best_iteration: 0,
            reference: initial_loss,
            stale: 0,
        }
    }

    /// Records a loss; returns true once patience is exhausted.
    pub fn observe(&mut self, iteration: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_iteration = iteration;
        }
        if self.best <= self.reference - self.tolerance {
            self.reference = self.best;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_iteration(&self) -> usize {
        self.best_iteration
    }

    pub fn is_best(&self, iteration: usize) -> bool {
        self.best_iteration == iteration
    }
}

fn design(ds: &Dataset) -> (Array2<f64>, Array1<f64>) {
    let mut x = Array2::zeros((ds.len(), ds.input_dim()));
    for (n, s) in ds.samples.iter().enumerate() {
        x.row_mut(n).iter_mut().zip(&s.x).for_each(|(a, b)| *a = *b);
    }
    (x, ds.samples.iter().map(|s| s.target).collect())
}

/// Full-batch L-BFGS on the training MSE with early stopping on the
/// validation loss. Returns the parameters with the best validation loss.
pub fn train(
    net: &Network,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::EmptySet);
    }
    net.check_dataset(train_set)?;
    net.check_dataset(val_set)?;

    let (x_train, t_train) = design(train_set);
    let scale = match cfg.validation_scale {
        ValidationScale::Celsius => val_set.schema.normalization.temp_span().powi(2),
        ValidationScale::Normalized => 1.0,
    };
    let validation_loss = |n: &Network| n.mse(&val_set.samples).map(|v| v * scale);

    let mut scratch = net.clone();
    let x0 = net.flat_params();
    let initial_val = validation_loss(net)?;
    let initial_train = net.mse(&train_set.samples)?;
    let mut stopper = EarlyStopping::new(cfg.stop_tolerance, cfg.patience, initial_val);
    let mut best_params = x0.clone();
    let mut train_curve = vec![initial_train];
    let mut validation_curve = vec![initial_val];
    let mut hit_patience = false;
    let mut callback_error = None;

    let objective = |p: &[f64]| {
        let mut n = net.clone();
        if n.set_flat_params(p).is_err() {
            return (f64::NAN, vec![f64::NAN; p.len()]);
        }
        match n.loss_and_flat_grad(x_train.view(), t_train.view()) {
            Ok(v) => v,
            Err(_) => (f64::NAN, vec![f64::NAN; p.len()]),
        }
    };
    let on_iteration = |iteration: usize, p: &[f64], value: f64| {
        if let Err(e) = scratch.set_flat_params(p) {
            callback_error = Some(e);
            return ControlFlow::Break(());
        }
        let v = match validation_loss(&scratch) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                callback_error = Some(e);
                return ControlFlow::Break(());
            }
        };
        train_curve.push(value);
        validation_curve.push(v);
        let stop = stopper.observe(iteration, v);
        if stopper.is_best(iteration) {
            best_params.copy_from_slice(p);
        }
        if stop {
            hit_patience = true;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };

    let result = lbfgs_minimize(objective, &x0, &cfg.lbfgs(), on_iteration);
    if let Some(e) = callback_error {
        return Err(e.into());
    }
    let (iterations, final_train_loss, stop_reason) = match result {
        Ok(out) => {
            let reason = match out.stop {
                LbfgsStop::Converged => StopReason::Converged,
                LbfgsStop::MaxIterations => StopReason::MaxIterations,
                LbfgsStop::Callback if hit_patience => StopReason::Patience,
                LbfgsStop::Callback => StopReason::MaxIterations,
            };
            (out.iterations, out.value, reason)
        }
        Err(LbfgsError::LineSearchFailed { iteration, value, .. }) => (iteration - 1, value, StopReason::Stalled),
        Err(LbfgsError::NonFinite { iteration, .. }) => {
            let mut last = net.clone();
            last.set_flat_params(&best_params)?;
            return Err(TrainError::Diverged {
                iteration,
                last_finite: Box::new(last),
            });
        }
        Err(e @ LbfgsError::InvalidConfig(_)) => return Err(TrainError::InvalidConfig(e.to_string())),
    };

    let mut best = net.clone();
    best.set_flat_params(&best_params)?;
    let report = TrainReport {
        iterations,
        final_train_loss,
        best_validation_loss: stopper.best(),
        best_iteration: stopper.best_iteration(),
        stop_reason,
        validation_scale: cfg.validation_scale,
        train_curve,
        validation_curve,
    };
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_validation_loss_exhausts_patience() {
        let mut es = EarlyStopping::new(1e-4, 10, 1.0);
        let stops: Vec<bool> = (1..=10).map(|i| es.observe(i, 1.0)).collect();
        assert!(stops[..9].iter().all(|s| !s));
        assert!(stops[9]);
        assert_eq!(es.best_iteration(), 0);
    }

    #[test]
    fn slow_cumulative_progress_keeps_training() {
        // 0.4e-2 per step never beats the previous value by 1e-2, but three
        // steps together do.
        let mut es = EarlyStopping::new(1e-2, 3, 1.0);
        for i in 1..=30 {
            assert!(!es.observe(i, 1.0 - 0.004 * i as f64), "stopped at {i}");
        }
        assert_eq!(es.best_iteration(), 30);
    }

    #[test]
    fn sub_tolerance_window_stops_but_tracks_best() {
        let mut es = EarlyStopping::new(1e-2, 3, 1.0);
        assert!(!es.observe(1, 0.999));
        assert!(!es.observe(2, 0.998));
        assert!(es.observe(3, 0.997));
        assert_eq!(es.best(), 0.997);
        assert_eq!(es.best_iteration(), 3);
    }

    #[test]
    fn real_improvement_resets_patience() {
        let mut es = EarlyStopping::new(1e-2, 2, 1.0);
        assert!(!es.observe(1, 1.0));
        assert!(!es.observe(2, 0.5));
        assert!(!es.observe(3, 0.5));
        assert!(es.observe(4, 0.6));
        assert_eq!(es.best_iteration(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lbfgs_history: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
