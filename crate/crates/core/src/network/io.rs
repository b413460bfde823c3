use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, Network, NetworkError};
use crate::artifact::write_atomic;
use crate::dataset::DatasetSchema;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// On-disk JSON model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub shape: Vec<usize>,
    pub input_dim: usize,
    pub activation: Activation,
    pub layers: Vec<LayerRecord>,
    pub schema: Option<DatasetSchema>,
}

impl From<&Network> for ModelFile {
    fn from(net: &Network) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            shape: net.hidden_widths(),
            input_dim: net.input_dim(),
            activation: net.activation(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    rows: l.out_dim(),
                    cols: l.in_dim(),
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
            schema: net.schema().cloned(),
        }
    }
}

impl TryFrom<ModelFile> for Network {
    type Error = NetworkError;

    fn try_from(file: ModelFile) -> Result<Self, Self::Error> {
        if file.format_version != FORMAT_VERSION {
            return Err(NetworkError::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, r)| {
                let weights = Array2::from_shape_vec((r.rows, r.cols), r.weights)
                    .map_err(|e| NetworkError::Format(format!("layer {k}: {e}")))?;
                DenseLayer::new(weights, Array1::from(r.biases))
                    .map_err(|e| NetworkError::Format(format!("layer {k}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let net = Network::new(layers, file.activation, None).map_err(|e| NetworkError::Format(e.to_string()))?;
        if net.hidden_widths() != file.shape {
            return Err(NetworkError::Format(format!(
                "declared shape {:?} does not match layer weights {:?}",
                file.shape,
                net.hidden_widths()
            )));
        }
        if net.input_dim() != file.input_dim {
            return Err(NetworkError::Format(format!(
                "declared input_dim {} does not match first layer ({})",
                file.input_dim,
                net.input_dim()
            )));
        }
        match file.schema {
            Some(schema) => net.with_schema(schema),
            None => Ok(net),
        }
    }
}

impl Network {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| NetworkError::Format(e.to_string()))?;
        Network::try_from(file)
    }
}

pub fn save(net: &Network, path: &Path) -> Result<(), NetworkError> {
    write_atomic(path, net.to_json().as_bytes()).map_err(|source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Network, NetworkError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Network::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureConfig, InputVariant, NormalizationSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema(n_stations: usize) -> DatasetSchema {
        DatasetSchema::new(
            FeatureConfig::new(n_stations, InputVariant::AirRunoffDay),
            NormalizationSpec::default(),
            vec![],
        )
    }

    #[test]
    fn roundtrip_preserves_outputs_exactly() {
        let net = Network::init(&[9, 7, 13], 13, Activation::Relu, 21)
            .unwrap()
            .with_schema(schema(2))
            .unwrap();
        let mut perturbed = net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f64> = net
            .flat_params()
            .iter()
            .map(|v| v + rng.random_range(-0.1..0.1))
            .collect();
        perturbed.set_flat_params(&p).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&perturbed, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, perturbed);
        for _ in 0..100 {
            let x: Vec<f64> = (0..13).map(|_| rng.random()).collect();
            assert_eq!(
                back.predict(&x).unwrap().to_bits(),
                perturbed.predict(&x).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let net = Network::init(&[3], 2, Activation::Relu, 0).unwrap();
        let mut file = ModelFile::from(&net);
        file.format_version = 99;
        let text = serde_json::to_string(&file).unwrap();
        assert!(matches!(Network::from_json(&text), Err(NetworkError::Format(_))));
    }

    #[test]
    fn schema_station_count_must_match_weights() {
        let net = Network::init(&[4], 13, Activation::Relu, 0).unwrap();
        let mut file = ModelFile::from(&net);
        file.schema = Some(schema(3)); // 17 features
        let text = serde_json::to_string(&file).unwrap();
        assert!(Network::from_json(&text).is_err());
    }

    #[test]
    fn corrupt_files_rejected() {
        assert!(Network::from_json("{not json").is_err());
        let net = Network::init(&[3], 2, Activation::Relu, 0).unwrap();
        let mut file = ModelFile::from(&net);
        file.layers[0].weights.pop();
        assert!(Network::from_json(&serde_json::to_string(&file).unwrap()).is_err());
        let mut file = ModelFile::from(&net);
        file.shape = vec![4];
        assert!(Network::from_json(&serde_json::to_string(&file).unwrap()).is_err());
    }
}
