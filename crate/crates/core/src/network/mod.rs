//! Fully connected regression networks: evaluation, exact reverse-mode
//! gradients and the JSON model format.

mod backprop;
mod io;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetSchema, NormalizationSpec, Sample};

pub use backprop::{GradientBundle, LayerGradient};
pub use io::{load, save, ModelFile, FORMAT_VERSION};

pub const MAX_HIDDEN_LAYERS: usize = 3;
pub const MAX_HIDDEN_NEURONS: usize = 90;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("network invariant violated: {0}")]
    Invariant(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("empty dataset")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Tanh];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative with respect to the pre-activation `z`, given `a = apply(z)`.
    /// ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// One affine map `z = W a + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>) -> Result<Self, NetworkError> {
        if weights.nrows() != biases.len() {
            return Err(NetworkError::Invariant(format!(
                "layer has {} weight rows but {} biases",
                weights.nrows(),
                biases.len()
            )));
        }
        Ok(Self { weights, biases })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Pre- and post-activation values of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

/// Hidden layers use `activation`; the last layer is affine with a single
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
    activation: Activation,
    schema: Option<DatasetSchema>,
}

/// Checks the architecture family limits on a list of hidden widths.
pub fn validate_shape(hidden: &[usize]) -> Result<(), NetworkError> {
    if hidden.len() > MAX_HIDDEN_LAYERS {
        return Err(NetworkError::Invariant(format!(
            "{} hidden layers exceed the maximum of {MAX_HIDDEN_LAYERS}",
            hidden.len()
        )));
    }
    if hidden.contains(&0) {
        return Err(NetworkError::Invariant(
            "hidden layers must have at least one neuron".into(),
        ));
    }
    let total: usize = hidden.iter().sum();
    if total > MAX_HIDDEN_NEURONS {
        return Err(NetworkError::Invariant(format!(
            "{total} hidden neurons exceed the maximum of {MAX_HIDDEN_NEURONS}"
        )));
    }
    Ok(())
}

impl Network {
    pub fn new(
        layers: Vec<DenseLayer>,
        activation: Activation,
        schema: Option<DatasetSchema>,
    ) -> Result<Self, NetworkError> {
        let Some(last) = layers.last() else {
            return Err(NetworkError::Invariant("network needs at least one layer".into()));
        };
        if last.out_dim() != 1 {
            return Err(NetworkError::Invariant(format!(
                "output layer must have one neuron, has {}",
                last.out_dim()
            )));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NetworkError::Invariant(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        if layers[0].in_dim() == 0 {
            return Err(NetworkError::Invariant("input dimension must be positive".into()));
        }
        let hidden: Vec<usize> = layers[..layers.len() - 1].iter().map(DenseLayer::out_dim).collect();
        validate_shape(&hidden)?;
        let finite = layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(NetworkError::Invariant("non-finite parameter".into()));
        }
        let net = Self {
            layers,
            activation,
            schema: None,
        };
        match schema {
            Some(s) => net.with_schema(s),
            None => Ok(net),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(hidden: &[usize], input_dim: usize, activation: Activation, seed: u64) -> Result<Self, NetworkError> {
        validate_shape(hidden)?;
        if input_dim == 0 {
            return Err(NetworkError::Invariant("input dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
                DenseLayer {
                    weights,
                    biases: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self::new(layers, activation, None)
    }

    pub fn with_schema(mut self, schema: DatasetSchema) -> Result<Self, NetworkError> {
        schema.validate().map_err(|e| NetworkError::Schema(e.to_string()))?;
        if schema.input_dim() != self.input_dim() {
            return Err(NetworkError::Schema(format!(
                "schema describes {} features but the first layer takes {}",
                schema.input_dim(),
                self.input_dim()
            )));
        }
        self.schema = Some(schema);
        Ok(self)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn schema(&self) -> Option<&DatasetSchema> {
        self.schema.as_ref()
    }

    /// Normalization used to report outputs in °C; defaults when no schema is attached.
    pub fn normalization(&self) -> NormalizationSpec {
        self.schema.as_ref().map(|s| s.normalization).unwrap_or_default()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(DenseLayer::out_dim)
            .collect()
    }

    pub fn shape_label(&self) -> String {
        shape_label(&self.hidden_widths())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NetworkError> {
        if params.len() != self.n_params() {
            return Err(NetworkError::Dimension {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().expect("length checked");
            }
            for b in l.biases.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetworkError> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardCache), NetworkError> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut a: Vec<f64> = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &a);
            a = if k == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            post.push(a.clone());
        }
        let y = a[0];
        Ok((
            y,
            ForwardCache {
                input: x.to_vec(),
                pre,
                post,
            },
        ))
    }

    /// Network output in normalized units.
    pub fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a: Vec<f64> = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &a);
            if k != last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a[0])
    }

    pub fn predict_celsius(&self, x: &[f64]) -> Result<f64, NetworkError> {
        Ok(self.normalization().denormalize_temperature(self.predict(x)?))
    }

    /// Output value and its gradient with respect to the input.
    pub fn output_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), NetworkError> {
        let (y, cache) = self.forward(x)?;
        let last = self.layers.len() - 1;
        let mut delta = vec![1.0];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if k != last {
                for (j, d) in delta.iter_mut().enumerate() {
                    *d *= self.activation.derivative(cache.pre[k][j], cache.post[k][j]);
                }
            }
            let mut prev = vec![0.0; layer.in_dim()];
            for (j, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (i, p) in prev.iter_mut().enumerate() {
                        *p += d * layer.weights[[j, i]];
                    }
                }
            }
            delta = prev;
        }
        Ok((y, delta))
    }

    pub(crate) fn check_dataset(&self, ds: &Dataset) -> Result<(), NetworkError> {
        if ds.input_dim() != self.input_dim() {
            return Err(NetworkError::Schema(format!(
                "dataset has {} features, network expects {}",
                ds.input_dim(),
                self.input_dim()
            )));
        }
        if let Some(s) = &self.schema {
            if !s.is_compatible(&ds.schema) {
                return Err(NetworkError::Schema(
                    "dataset features or normalization differ from the model's schema".into(),
                ));
            }
        }
        Ok(())
    }

    /// Mean squared error over normalized targets.
    pub fn mse(&self, samples: &[Sample]) -> Result<f64, NetworkError> {
        if samples.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut sum = 0.0;
        for s in samples {
            let r = self.predict(&s.x)? - s.target;
            sum += r * r;
        }
        Ok(sum / samples.len() as f64)
    }
}

/// Root mean squared error in °C.
pub fn rmse(net: &Network, ds: &Dataset) -> Result<f64, NetworkError> {
    if ds.is_empty() {
        return Err(NetworkError::Empty);
    }
    net.check_dataset(ds)?;
    let norm = ds.schema.normalization;
    let mut sum = 0.0;
    for s in &ds.samples {
        let r = norm.denormalize_temperature(net.predict(&s.x)?) - norm.denormalize_temperature(s.target);
        sum += r * r;
    }
    Ok((sum / ds.len() as f64).sqrt())
}

pub fn shape_label(hidden: &[usize]) -> String {
    if hidden.is_empty() {
        return "linear".to_string();
    }
    hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

/// Parses `"9-7-13"` style shapes (`"linear"` or `""` for no hidden layer).
pub fn parse_shape(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("linear") {
        return Ok(Vec::new());
    }
    s.split(['-', 'x', ','])
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad shape `{s}`: {e}")))
        .collect()
}

fn affine(layer: &DenseLayer, a: &[f64]) -> Vec<f64> {
    layer
        .weights
        .rows()
        .into_iter()
        .zip(layer.biases.iter())
        .map(|(row, &b)| row.iter().zip(a).fold(b, |acc, (w, x)| acc + w * x))
        .collect()
}
