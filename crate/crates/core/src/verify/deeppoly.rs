use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{neighborhood, FeatureMask, InputBox, VerifyError};
use crate::network::{Activation, Network};

// Outward widening applied at every concretization, relative to the size of
// the terms summed. Covers round-off in the substituted coefficients.
const ROUNDING_MARGIN: f64 = 1e-12;

/// `slope * z + intercept` in a single variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBound {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearBound {
    pub const ZERO: LinearBound = LinearBound {
        slope: 0.0,
        intercept: 0.0,
    };
    pub const IDENTITY: LinearBound = LinearBound {
        slope: 1.0,
        intercept: 0.0,
    };

    pub fn eval(&self, z: f64) -> f64 {
        self.slope * z + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReluRelaxation {
    pub lower: LinearBound,
    pub upper: LinearBound,
}

/// Triangle relaxation of `max(0, z)` on `[l, u]`.
pub fn relu_relaxation(l: f64, u: f64) -> Result<ReluRelaxation, VerifyError> {
    if l.is_nan() || u.is_nan() || l > u {
        return Err(VerifyError::InvertedBounds { l, u });
    }
    if l >= 0.0 {
        return Ok(ReluRelaxation {
            lower: LinearBound::IDENTITY,
            upper: LinearBound::IDENTITY,
        });
    }
    if u <= 0.0 {
        return Ok(ReluRelaxation {
            lower: LinearBound::ZERO,
            upper: LinearBound::ZERO,
        });
    }
    let lambda = u / (u - l);
    let lower = if u > -l {
        LinearBound::IDENTITY
    } else {
        LinearBound::ZERO
    };
    Ok(ReluRelaxation {
        lower,
        upper: LinearBound {
            slope: lambda,
            intercept: -lambda * l,
        },
    })
}

/// Coefficient vector plus constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(v).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Bounds of the expression over a box of its variables.
    pub fn concretize(&self, lo: &[f64], hi: &[f64]) -> NeuronBounds {
        let (l, u) = concretize_row(self.coeffs.iter().copied(), self.constant, lo, hi);
        NeuronBounds { l, u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronBounds {
    pub l: f64,
    pub u: f64,
}

impl NeuronBounds {
    pub fn width(&self) -> f64 {
        self.u - self.l
    }

    pub fn contains(&self, v: f64) -> bool {
        self.l <= v && v <= self.u
    }
}

/// One hidden layer of the abstract state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayerState {
    /// Concrete pre-activation bounds.
    pub pre: Vec<NeuronBounds>,
    /// Concrete post-activation bounds.
    pub post: Vec<NeuronBounds>,
    pub relaxations: Vec<ReluRelaxation>,
    /// Symbolic post-activation bounds over the previous layer's outputs
    /// (or the inputs for the first layer).
    pub lower: Vec<AffineExpr>,
    pub upper: Vec<AffineExpr>,
    /// Pre-activation bounds substituted all the way to the inputs.
    pub input_lower: Vec<AffineExpr>,
    pub input_upper: Vec<AffineExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractState {
    pub input: InputBox,
    pub hidden: Vec<HiddenLayerState>,
    /// Output bounds in normalized units.
    pub output: NeuronBounds,
    pub output_lower: AffineExpr,
    pub output_upper: AffineExpr,
}

impl AbstractState {
    pub fn unstable_neurons(&self) -> usize {
        self.hidden
            .iter()
            .flat_map(|h| &h.pre)
            .filter(|b| b.l < 0.0 && b.u > 0.0)
            .count()
    }
}

/// Certified output range in °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputInterval {
    pub lb: f64,
    pub ub: f64,
    pub center: f64,
}

impl OutputInterval {
    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    /// Largest possible departure from the center prediction.
    pub fn center_deviation(&self) -> f64 {
        (self.ub - self.center).max(self.center - self.lb).max(0.0)
    }
}

fn concretize_row(coeffs: impl Iterator<Item = f64>, constant: f64, lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let mut l = constant;
    let mut u = constant;
    let mut mag = constant.abs();
    for ((c, &a), &b) in coeffs.zip(lo).zip(hi) {
        if c >= 0.0 {
            l += c * a;
            u += c * b;
        } else {
            l += c * b;
            u += c * a;
        }
        mag += c.abs() * a.abs().max(b.abs());
    }
    let m = ROUNDING_MARGIN * (1.0 + mag);
    (l - m, u + m)
}

fn check_supported(net: &Network, bx: &InputBox) -> Result<(), VerifyError> {
    if net.activation() != Activation::Relu && net.layers().len() > 1 {
        return Err(VerifyError::UnsupportedActivation(net.activation().name().into()));
    }
    if bx.dim() != net.input_dim() {
        return Err(VerifyError::Dimension {
            expected: net.input_dim(),
            got: bx.dim(),
        });
    }
    Ok(())
}

/// Interval image of `W a + b` for `a` in the given bounds.
fn interval_affine(w: ArrayView2<f64>, b: ArrayView1<f64>, lo: &[f64], hi: &[f64]) -> Vec<NeuronBounds> {
    w.outer_iter()
        .zip(b)
        .map(|(row, &bias)| {
            let (l, u) = concretize_row(row.iter().copied(), bias, lo, hi);
            NeuronBounds { l, u }
        })
        .collect()
}

/// Substitutes `W_k a_{k-1} + b_k` back to an affine form over the inputs,
/// choosing the upper (or lower) relaxation of every hidden neuron by the
/// sign of its coefficient.
fn back_substitute(net: &Network, hidden: &[HiddenLayerState], k: usize, upper: bool) -> (Array2<f64>, Array1<f64>) {
    let layers = net.layers();
    let mut coef = layers[k].weights.clone();
    let mut constant = layers[k].biases.clone();
    for j in (0..k).rev() {
        let relax = &hidden[j].relaxations;
        // Coefficients over a_j become coefficients over z_j.
        for (mut row, c0) in coef.outer_iter_mut().zip(constant.iter_mut()) {
            for (c, r) in row.iter_mut().zip(relax) {
                let bound = if (*c >= 0.0) == upper { r.upper } else { r.lower };
                *c0 += *c * bound.intercept;
                *c *= bound.slope;
            }
        }
        constant += &coef.dot(&layers[j].biases);
        coef = coef.dot(&layers[j].weights);
    }
    (coef, constant)
}

fn to_exprs(coef: &Array2<f64>, constant: &Array1<f64>) -> Vec<AffineExpr> {
    coef.outer_iter()
        .zip(constant)
        .map(|(row, &c)| AffineExpr {
            coeffs: row.to_vec(),
            constant: c,
        })
        .collect()
}

/// Full abstract state over a box. Every neuron's bounds come from
/// back-substitution to the inputs, intersected with the interval image of
/// the previous layer's bounds, so they are never looser than plain
/// interval propagation.
pub fn propagate(net: &Network, bx: &InputBox) -> Result<AbstractState, VerifyError> {
    check_supported(net, bx)?;
    let layers = net.layers();
    let last = layers.len() - 1;
    let mut hidden: Vec<HiddenLayerState> = Vec::with_capacity(last);
    let mut prev_lo = bx.lo().to_vec();
    let mut prev_hi = bx.hi().to_vec();

    for (k, layer) in layers.iter().enumerate() {
        let (cu, ku) = back_substitute(net, &hidden, k, true);
        let (cl, kl) = back_substitute(net, &hidden, k, false);
        let ibp = interval_affine(layer.weights.view(), layer.biases.view(), &prev_lo, &prev_hi);
        let bounds: Vec<NeuronBounds> = ibp
            .iter()
            .enumerate()
            .map(|(i, ib)| {
                let (l, _) = concretize_row(cl.row(i).iter().copied(), kl[i], bx.lo(), bx.hi());
                let (_, u) = concretize_row(cu.row(i).iter().copied(), ku[i], bx.lo(), bx.hi());
                let (l, u) = (l.max(ib.l), u.min(ib.u));
                NeuronBounds {
                    l: l.min(u),
                    u: u.max(l),
                }
            })
            .collect();

        if k == last {
            let output = bounds[0];
            return Ok(AbstractState {
                input: bx.clone(),
                hidden,
                output,
                output_lower: to_exprs(&cl, &kl).remove(0),
                output_upper: to_exprs(&cu, &ku).remove(0),
            });
        }

        let relaxations = bounds
            .iter()
            .map(|b| relu_relaxation(b.l, b.u))
            .collect::<Result<Vec<_>, _>>()?;
        let post: Vec<NeuronBounds> = bounds
            .iter()
            .map(|b| NeuronBounds {
                l: b.l.max(0.0),
                u: b.u.max(0.0),
            })
            .collect();
        let symbolic = |pick: fn(&ReluRelaxation) -> LinearBound| -> Vec<AffineExpr> {
            layer
                .weights
                .outer_iter()
                .zip(&layer.biases)
                .zip(&relaxations)
                .map(|((row, &b), r)| {
                    let lb = pick(r);
                    AffineExpr {
                        coeffs: row.iter().map(|w| lb.slope * w).collect(),
                        constant: lb.slope * b + lb.intercept,
                    }
                })
                .collect()
        };
        let lower = symbolic(|r| r.lower);
        let upper = symbolic(|r| r.upper);
        prev_lo = post.iter().map(|b| b.l).collect();
        prev_hi = post.iter().map(|b| b.u).collect();
        hidden.push(HiddenLayerState {
            pre: bounds,
            post,
            relaxations,
            lower,
            upper,
            input_lower: to_exprs(&cl, &kl),
            input_upper: to_exprs(&cu, &ku),
        });
    }
    unreachable!("network has at least one layer")
}

/// Output bounds in normalized units.
pub fn output_bounds(net: &Network, bx: &InputBox) -> Result<NeuronBounds, VerifyError> {
    Ok(propagate(net, bx)?.output)
}

/// Plain interval propagation, for comparison. Valid for any monotone
/// activation.
pub fn interval_bounds(net: &Network, bx: &InputBox) -> Result<NeuronBounds, VerifyError> {
    if bx.dim() != net.input_dim() {
        return Err(VerifyError::Dimension {
            expected: net.input_dim(),
            got: bx.dim(),
        });
    }
    let act = net.activation();
    let last = net.layers().len() - 1;
    let mut lo = bx.lo().to_vec();
    let mut hi = bx.hi().to_vec();
    for (k, layer) in net.layers().iter().enumerate() {
        let b = interval_affine(layer.weights.view(), layer.biases.view(), &lo, &hi);
        if k == last {
            return Ok(b[0]);
        }
        lo = b.iter().map(|v| act.apply(v.l)).collect();
        hi = b.iter().map(|v| act.apply(v.u)).collect();
    }
    unreachable!("network has at least one layer")
}

/// Output interval in °C; the center is the prediction at the box midpoint.
pub fn analyze_box(net: &Network, bx: &InputBox) -> Result<OutputInterval, VerifyError> {
    let out = output_bounds(net, bx)?;
    let center = net.predict(&bx.center())?;
    Ok(denormalized(net, out, center))
}

/// Output interval for the ε-neighborhood of `x`, centered on `f(x)`.
pub fn analyze_point(net: &Network, x: &[f64], eps: f64, mask: &FeatureMask) -> Result<OutputInterval, VerifyError> {
    let bx = neighborhood(x, eps, mask)?;
    let out = output_bounds(net, &bx)?;
    let center = net.predict(x)?;
    Ok(denormalized(net, out, center))
}

fn denormalized(net: &Network, out: NeuronBounds, center: f64) -> OutputInterval {
    let norm = net.normalization();
    // The margin may push a bound a hair past an exact center.
    let l = out.l.min(center);
    let u = out.u.max(center);
    OutputInterval {
        lb: norm.denormalize_temperature(l),
        ub: norm.denormalize_temperature(u),
        center: norm.denormalize_temperature(center),
    }
}
