//! Sound output intervals for ReLU networks over input boxes.
//!
//! Each neuron carries concrete bounds plus symbolic affine lower and upper
//! bounds. Pre-activation bounds are obtained by substituting the symbolic
//! bounds of every earlier layer back to the inputs and evaluating the
//! resulting affine form over the box; unstable ReLUs use the triangle
//! relaxation with the area heuristic for the lower face.

mod deeppoly;
mod robustness;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSchema, FeatureKind};
use crate::network::NetworkError;

pub use deeppoly::{
    analyze_box, analyze_point, interval_bounds, output_bounds, propagate, relu_relaxation, AbstractState, AffineExpr,
    HiddenLayerState, LinearBound, NeuronBounds, OutputInterval, ReluRelaxation,
};
pub use robustness::{
    dataset_violations, mean_perturbation, robustness_csv, sampled_violations, RobustnessReport, RobustnessSummary,
    SampleInterval,
};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("activation `{0}` is not supported by the verifier (ReLU only)")]
    UnsupportedActivation(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("perturbation radius must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("lower bound {l} exceeds upper bound {u}")]
    InvertedBounds { l: f64, u: f64 },
    #[error("box has {got} dimensions, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Axis-aligned input box in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl InputBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, VerifyError> {
        if lo.len() != hi.len() {
            return Err(VerifyError::InvalidBox(format!(
                "lower has {} entries, upper has {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.is_empty() {
            return Err(VerifyError::InvalidBox("box has no dimensions".into()));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) {
                return Err(VerifyError::InvalidBox(format!("coordinate {i} is not finite")));
            }
            if l > h {
                return Err(VerifyError::InvalidBox(format!("coordinate {i}: {l} > {h}")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: &[f64]) -> Result<Self, VerifyError> {
        Self::new(x.to_vec(), x.to_vec())
    }

    /// The whole normalized domain `[0, 1]^d`.
    pub fn unit(d: usize) -> Self {
        Self {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim()
            && y.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn project(&self, y: &mut [f64]) {
        for (v, (l, h)) in y.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn contains_box(&self, other: &InputBox) -> bool {
        self.dim() == other.dim()
            && self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }
}

/// Which input coordinates a perturbation may move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask(pub Vec<bool>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbedKind {
    Air,
    Runoff,
    DayOfYear,
}

impl FeatureMask {
    pub fn all(d: usize) -> Self {
        Self(vec![true; d])
    }

    /// Air temperature and runoff coordinates, day of year held fixed.
    pub fn default_for(schema: &DatasetSchema) -> Self {
        Self::for_kinds(schema, &[PerturbedKind::Air, PerturbedKind::Runoff])
    }

    pub fn for_kinds(schema: &DatasetSchema, kinds: &[PerturbedKind]) -> Self {
        Self(
            schema
                .feature_kinds()
                .iter()
                .map(|k| match k {
                    FeatureKind::Air { .. } => kinds.contains(&PerturbedKind::Air),
                    FeatureKind::Runoff { .. } => kinds.contains(&PerturbedKind::Runoff),
                    FeatureKind::DayOfYear => kinds.contains(&PerturbedKind::DayOfYear),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `[x_i - eps, x_i + eps]` clamped to `[0, 1]` on masked coordinates,
/// `[x_i, x_i]` elsewhere.
pub fn neighborhood(x: &[f64], eps: f64, mask: &FeatureMask) -> Result<InputBox, VerifyError> {
    if eps.is_nan() || eps < 0.0 {
        return Err(VerifyError::NegativeEpsilon(eps));
    }
    if mask.len() != x.len() {
        return Err(VerifyError::Dimension {
            expected: x.len(),
            got: mask.len(),
        });
    }
    let mut lo = Vec::with_capacity(x.len());
    let mut hi = Vec::with_capacity(x.len());
    for (&v, &m) in x.iter().zip(&mask.0) {
        if m {
            lo.push((v - eps).clamp(0.0, 1.0).min(v));
            hi.push((v + eps).clamp(0.0, 1.0).max(v));
        } else {
            lo.push(v);
            hi.push(v);
        }
    }
    InputBox::new(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureConfig, InputVariant, NormalizationSpec};

    #[test]
    fn zero_radius_is_point() {
        let x = [0.2, 0.5, 0.9];
        let b = neighborhood(&x, 0.0, &FeatureMask::all(3)).unwrap();
        assert_eq!(b, InputBox::point(&x).unwrap());
    }

    #[test]
    fn clamped_at_zero() {
        let b = neighborhood(&[0.005], 0.01, &FeatureMask::all(1)).unwrap();
        assert_eq!(b.lo(), &[0.0]);
        assert!((b.hi()[0] - 0.015).abs() < 1e-15);
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(matches!(
            neighborhood(&[0.5], -0.1, &FeatureMask::all(1)),
            Err(VerifyError::NegativeEpsilon(_))
        ));
    }

    #[test]
    fn default_mask_holds_day_fixed() {
        let schema = DatasetSchema::new(
            FeatureConfig::new(2, InputVariant::AirRunoffDay),
            NormalizationSpec::default(),
            vec![],
        );
        let mask = FeatureMask::default_for(&schema);
        assert_eq!(mask.0.iter().filter(|m| **m).count(), 12);
        assert!(!mask.0[12]);
        let x: Vec<f64> = (0..13).map(|i| 0.05 + i as f64 * 0.07).collect();
        for eps in [0.0, 0.01, 0.3, 2.0] {
            let b = neighborhood(&x, eps, &mask).unwrap();
            assert_eq!(b.lo()[12], x[12]);
            assert_eq!(b.hi()[12], x[12]);
        }
    }

    #[test]
    fn box_validation() {
        assert!(InputBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(InputBox::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(InputBox::new(vec![f64::NAN], vec![1.0]).is_err());
        let b = InputBox::unit(2);
        assert!(b.contains(&[0.0, 1.0]));
        assert!(!b.contains(&[0.0, 1.1]));
    }
}
