use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::network::{Network, NetworkError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Glorot-uniform weights, zero biases.
    Glorot,
    /// Glorot weights; each hidden bias places the neuron's pre-activation
    /// threshold at a random quantile (10–90 %) of its training-set values,
    /// and the output bias matches the mean target.
    #[default]
    DataCentered,
}

/// Fresh network for `hidden` under `scheme`. Biases are fitted to the
/// training inputs, which matters because the fixed normalization packs
/// most features into a narrow band where zero-bias ReLUs act linearly.
pub fn initialize(
    hidden: &[usize],
    scheme: InitScheme,
    activation: crate::network::Activation,
    train: &Dataset,
    seed: u64,
) -> Result<Network, NetworkError> {
    let net = Network::init(hidden, train.input_dim(), activation, seed)?.with_schema(train.schema.clone())?;
    match scheme {
        InitScheme::Glorot => Ok(net),
        InitScheme::DataCentered => center_biases(net, train, seed),
    }
}

fn center_biases(net: Network, train: &Dataset, seed: u64) -> Result<Network, NetworkError> {
    if train.is_empty() {
        return Err(NetworkError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b1a5);
    let n = train.len();
    let mut a = Array2::from_shape_fn((n, train.input_dim()), |(i, j)| train.samples[i].x[j]);
    let mut layers = net.layers().to_vec();
    let last = layers.len() - 1;
    let act = net.activation();
    for layer in &mut layers[..last] {
        let z = a.dot(&layer.weights.t());
        let mut biases = Array1::zeros(layer.out_dim());
        for (j, col) in z.axis_iter(Axis(1)).enumerate() {
            let mut v = col.to_vec();
            v.sort_by(f64::total_cmp);
            let q: f64 = rng.random_range(0.1..0.9);
            biases[j] = -v[((n - 1) as f64 * q).round() as usize];
        }
        a = (z + &biases).mapv(|v| act.apply(v));
        layer.biases = biases;
    }
    let out = &mut layers[last];
    let mean_pre = a.dot(&out.weights.row(0)).mean().unwrap_or(0.0);
    let mean_target = train.samples.iter().map(|s| s.target).sum::<f64>() / n as f64;
    out.biases[0] = mean_target - mean_pre;
    Network::new(layers, act, net.schema().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_features, synthesize, FeatureConfig, InputVariant, SynthConfig};
    use crate::network::Activation;

    #[test]
    fn thresholds_fall_inside_the_data() {
        let t = synthesize(&SynthConfig {
            n_days: 200,
            ..SynthConfig::default()
        })
        .unwrap();
        let ds = build_features(&t, &FeatureConfig::new(2, InputVariant::AirRunoffDay)).unwrap();
        let net = initialize(&[8], InitScheme::DataCentered, Activation::Relu, &ds, 4).unwrap();
        let (mut active, mut total) = (0usize, 0usize);
        for s in &ds.samples {
            let (_, cache) = net.forward(&s.x).unwrap();
            active += cache.pre[0].iter().filter(|z| **z > 0.0).count();
            total += cache.pre[0].len();
        }
        let frac = active as f64 / total as f64;
        assert!((0.1..0.9).contains(&frac), "{frac}");
        let mean_pred = ds.samples.iter().map(|s| net.predict(&s.x).unwrap()).sum::<f64>() / ds.len() as f64;
        let mean_t = ds.samples.iter().map(|s| s.target).sum::<f64>() / ds.len() as f64;
        assert!((mean_pred - mean_t).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let t = synthesize(&SynthConfig {
            n_days: 80,
            ..SynthConfig::default()
        })
        .unwrap();
        let ds = build_features(&t, &FeatureConfig::new(2, InputVariant::Air)).unwrap();
        let a = initialize(&[5, 3], InitScheme::DataCentered, Activation::Relu, &ds, 9).unwrap();
        let b = initialize(&[5, 3], InitScheme::DataCentered, Activation::Relu, &ds, 9).unwrap();
        assert_eq!(a, b);
        let g = initialize(&[5, 3], InitScheme::Glorot, Activation::Relu, &ds, 9).unwrap();
        assert!(g.layers()[0].biases.iter().all(|b| *b == 0.0));
    }
}
