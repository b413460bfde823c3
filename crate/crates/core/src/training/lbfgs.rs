//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

/// Pairs with `s.y` at or below this are not stored.
pub const CURVATURE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    /// Objective evaluations allowed per line search (bracketing plus zoom).
    pub max_line_search_steps: usize,
    /// Converged once the gradient's max-norm drops to this.
    pub gradient_tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_steps: 25,
            gradient_tolerance: 1e-10,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<(), LbfgsError> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(LbfgsError::InvalidConfig(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1 (got c1={}, c2={})",
                self.c1, self.c2
            )));
        }
        if self.history == 0 {
            return Err(LbfgsError::InvalidConfig("history must be at least 1".into()));
        }
        if self.max_line_search_steps == 0 {
            return Err(LbfgsError::InvalidConfig("line search needs at least one step".into()));
        }
        if self.gradient_tolerance.is_nan() || self.gradient_tolerance < 0.0 {
            return Err(LbfgsError::InvalidConfig(
                "gradient tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStop {
    Converged,
    MaxIterations,
    /// The per-iteration callback asked to stop.
    Callback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub stop: LbfgsStop,
    /// Accepted objective values, starting with the value at `x0`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LbfgsError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        /// Last point with a finite objective and gradient, if any.
        last_x: Option<Vec<f64>>,
        last_value: Option<f64>,
    },
    #[error("line search failed at iteration {iteration} (objective {value}), also along steepest descent")]
    LineSearchFailed { iteration: usize, x: Vec<f64>, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    rho: f64,
}

impl CurvaturePair {
    /// None when the pair fails the curvature condition.
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Option<Self> {
        let sy = dot(&s, &y);
        (sy > CURVATURE_EPS && sy.is_finite()).then(|| Self { s, y, rho: 1.0 / sy })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Search direction `-H g` from the two-loop recursion. The initial inverse
/// Hessian is `gamma I` with `gamma = s.y / y.y` of the newest pair, or 1
/// without pairs.
pub fn two_loop_direction(grad: &[f64], pairs: &VecDeque<CurvaturePair>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let gamma = pairs.back().map(|p| dot(&p.s, &p.y) / dot(&p.y, &p.y)).unwrap_or(1.0);
    q.iter_mut().for_each(|v| *v *= gamma);
    for (p, a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Relative objective slack allowed by the approximate Wolfe test.
const APPROX_WOLFE_EPS: f64 = 1e-12;

#[derive(Clone)]
struct Trial {
    alpha: f64,
    value: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

enum Search {
    Accepted(Trial),
    Failed,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    best: Option<Trial>,
    last: Option<Trial>,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    /// None when the budget is spent; non-finite trials come back with +inf.
    fn eval(&mut self, alpha: f64) -> Option<(f64, f64)> {
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(xi, di)| xi + alpha * di).collect();
        let (value, grad) = (self.f)(&x);
        if !value.is_finite() || !all_finite(&grad) {
            return Some((f64::INFINITY, f64::NAN));
        }
        let slope = dot(&grad, self.d);
        let trial = Trial { alpha, value, x, grad };
        if self.best.as_ref().is_none_or(|b| value < b.value) {
            self.best = Some(trial.clone());
        }
        self.last = Some(trial);
        Some((value, slope))
    }

    fn armijo(&self, alpha: f64, value: f64) -> bool {
        value <= self.f0 + self.c1 * alpha * self.slope0
    }

    fn curvature(&self, slope: f64) -> bool {
        slope.abs() <= -self.c2 * self.slope0
    }

    /// Approximate Wolfe conditions: near a minimum the Armijo decrease is
    /// lost in rounding, but the directional derivative is still reliable.
    /// The value may exceed `f0` only by a rounding-sized amount.
    fn approximate_wolfe(&self, value: f64, slope: f64) -> bool {
        value <= self.f0 + APPROX_WOLFE_EPS * self.f0.abs()
            && (2.0 * self.c1 - 1.0) * self.slope0 >= slope
            && self.curvature(slope)
    }

    fn take(&mut self, alpha: f64) -> Search {
        if let Some(t) = self.last.take().filter(|t| t.alpha == alpha) {
            return Search::Accepted(t);
        }
        match self.best.take() {
            Some(t) if t.alpha == alpha => Search::Accepted(t),
            other => {
                self.best = other;
                self.fallback()
            }
        }
    }

    fn fallback(&mut self) -> Search {
        match self.best.take() {
            Some(t) if t.value < self.f0 => Search::Accepted(t),
            _ => Search::Failed,
        }
    }

    fn run(mut self, alpha0: f64) -> Search {
        let (mut prev_alpha, mut prev_value, mut prev_slope) = (0.0, self.f0, self.slope0);
        let mut alpha = alpha0;
        let mut first = true;
        loop {
            let Some((value, slope)) = self.eval(alpha) else {
                return self.fallback();
            };
            if !value.is_finite() {
                // Overshot into a non-finite region: shrink toward the last good point.
                alpha = 0.5 * (prev_alpha + alpha);
                continue;
            }
            if self.approximate_wolfe(value, slope) {
                return self.take(alpha);
            }
            if !self.armijo(alpha, value) || (!first && value >= prev_value) {
                return self.zoom((prev_alpha, prev_value, prev_slope), (alpha, value, slope));
            }
            if self.curvature(slope) {
                return self.take(alpha);
            }
            if slope >= 0.0 {
                return self.zoom((alpha, value, slope), (prev_alpha, prev_value, prev_slope));
            }
            (prev_alpha, prev_value, prev_slope) = (alpha, value, slope);
            alpha *= 2.0;
            first = false;
        }
    }

    fn zoom(&mut self, mut lo: (f64, f64, f64), mut hi: (f64, f64, f64)) -> Search {
        loop {
            let alpha = interpolate(lo, hi);
            let Some((value, slope)) = self.eval(alpha) else {
                return self.fallback();
            };
            if value.is_finite() && self.approximate_wolfe(value, slope) {
                return self.take(alpha);
            }
            if !value.is_finite() || !self.armijo(alpha, value) || value >= lo.1 {
                hi = (alpha, value, slope);
            } else {
                if self.curvature(slope) {
                    return self.take(alpha);
                }
                if slope * (hi.0 - lo.0) >= 0.0 {
                    hi = lo;
                }
                lo = (alpha, value, slope);
            }
            if (hi.0 - lo.0).abs() <= f64::EPSILON * lo.0.abs().max(1e-300) {
                return self.fallback();
            }
        }
    }
}

/// Minimizer of the cubic through both end points, kept away from the
/// interval ends; falls back to bisection.
fn interpolate(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (x0, f0, g0) = a;
    let (x1, f1, g1) = b;
    let (lo, hi) = if x0 < x1 { (x0, x1) } else { (x1, x0) };
    let mid = 0.5 * (x0 + x1);
    if !(f1.is_finite() && g1.is_finite()) {
        return mid;
    }
    let d1 = g0 + g1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1 * d1 - g0 * g1;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (x1 - x0).signum() * disc.sqrt();
    let denom = g1 - g0 + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let x = x1 - (x1 - x0) * (g1 + d2 - d1) / denom;
    let margin = 0.1 * (hi - lo);
    if x.is_finite() && x >= lo + margin && x <= hi - margin {
        x
    } else {
        mid
    }
}

/// Minimizes `objective` (returning value and gradient) from `x0`.
///
/// `on_iteration(iteration, x, value)` runs after every accepted step and
/// can stop the run early.
pub fn lbfgs_minimize<F, C>(
    mut objective: F,
    x0: &[f64],
    cfg: &LbfgsConfig,
    mut on_iteration: C,
) -> Result<LbfgsOutcome, LbfgsError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    C: FnMut(usize, &[f64], f64) -> ControlFlow<()>,
{
    cfg.validate()?;
    let mut x = x0.to_vec();
    let (mut value, mut grad) = objective(&x);
    if !value.is_finite() || !all_finite(&grad) || grad.len() != x.len() {
        return Err(LbfgsError::NonFinite {
            iteration: 0,
            last_x: None,
            last_value: None,
        });
    }
    let mut values = vec![value];
    let mut pairs: VecDeque<CurvaturePair> = VecDeque::with_capacity(cfg.history);
    let done = |stop, x, value, gradient, iterations, values| {
        Ok(LbfgsOutcome {
            x,
            value,
            gradient,
            iterations,
            stop,
            values,
        })
    };

    if max_abs(&grad) <= cfg.gradient_tolerance {
        return done(LbfgsStop::Converged, x, value, grad, 0, values);
    }

    for iteration in 1..=cfg.max_iterations {
        let mut accepted = None;
        for attempt in 0..2 {
            let steepest = attempt == 1 || pairs.is_empty();
            if steepest {
                pairs.clear();
            }
            let mut d = two_loop_direction(&grad, &pairs);
            let mut slope = dot(&grad, &d);
            if slope.is_nan() || slope >= 0.0 || !all_finite(&d) {
                pairs.clear();
                d = grad.iter().map(|g| -g).collect();
                slope = dot(&grad, &d);
            }
            let alpha0 = if pairs.is_empty() {
                (1.0 / dot(&grad, &grad).sqrt()).min(1.0)
            } else {
                1.0
            };
            let search = LineSearch {
                f: &mut objective,
                x: &x,
                d: &d,
                f0: value,
                slope0: slope,
                c1: cfg.c1,
                c2: cfg.c2,
                budget: cfg.max_line_search_steps,
                best: None,
                last: None,
            };
            if let Search::Accepted(t) = search.run(alpha0) {
                accepted = Some(t);
                break;
            }
            if steepest {
                break;
            }
        }
        let Some(trial) = accepted else {
            return Err(LbfgsError::LineSearchFailed { iteration, x, value });
        };

        let s: Vec<f64> = trial.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        if let Some(pair) = CurvaturePair::new(s, y) {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back(pair);
        }
        x = trial.x;
        value = trial.value;
        grad = trial.grad;
        values.push(value);

        if on_iteration(iteration, &x, value).is_break() {
            return done(LbfgsStop::Callback, x, value, grad, iteration, values);
        }
        if max_abs(&grad) <= cfg.gradient_tolerance {
            return done(LbfgsStop::Converged, x, value, grad, iteration, values);
        }
    }
    let iterations = cfg.max_iterations;
    done(LbfgsStop::MaxIterations, x, value, grad, iterations, values)
}
