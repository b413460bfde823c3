use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::artifact::csv_string;
use crate::dataset::Dataset;
use crate::network::Network;

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImpact {
    pub feature: String,
    /// `∂L/∂x_i` per sample, `L` the squared error (normalized units).
    pub signed: Vec<f64>,
    pub abs: Vec<f64>,
    pub median_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub n_samples: usize,
    pub features: Vec<FeatureImpact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub feature: String,
    pub median_abs: f64,
    pub median_signed: f64,
}

impl ImpactReport {
    pub fn medians(&self) -> Vec<ImpactSummary> {
        self.features
            .iter()
            .map(|f| ImpactSummary {
                feature: f.feature.clone(),
                median_abs: f.median_abs,
                median_signed: median(&f.signed),
            })
            .collect()
    }
}

/// Per-sample, per-feature gradient of the sample's squared error.
pub fn impact(net: &Network, ds: &Dataset) -> Result<ImpactReport, AnalysisError> {
    if ds.is_empty() {
        return Err(AnalysisError::Empty);
    }
    net.check_dataset(ds)?;
    let rows = ds
        .samples
        .par_iter()
        .map(|s| {
            let g = net.gradients(std::slice::from_ref(s))?;
            Ok(g.input_grads.row(0).to_vec())
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let features = ds
        .schema
        .feature_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let signed: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let abs: Vec<f64> = signed.iter().map(|v| v.abs()).collect();
            FeatureImpact {
                feature: name.clone(),
                median_abs: median(&abs),
                signed,
                abs,
            }
        })
        .collect();
    Ok(ImpactReport {
        n_samples: ds.len(),
        features,
    })
}

/// Long-format rows: one per feature and sample.
pub fn impact_csv(report: &ImpactReport) -> String {
    csv_string(
        &["feature_label", "sample_index", "impact_signed", "impact_abs"],
        report.features.iter().flat_map(|f| {
            f.signed
                .iter()
                .zip(&f.abs)
                .enumerate()
                .map(move |(i, (s, a))| vec![f.feature.clone(), i.to_string(), s.to_string(), a.to_string()])
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_features, synthesize, FeatureConfig, InputVariant, SynthConfig};
    use crate::network::{Activation, DenseLayer};
    use ndarray::{Array1, Array2};

    fn dataset() -> Dataset {
        let t = synthesize(&SynthConfig {
            n_days: 40,
            ..SynthConfig::default()
        })
        .unwrap();
        build_features(&t, &FeatureConfig::new(2, InputVariant::AirRunoffDay)).unwrap()
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn linear_closed_form_and_dead_input() {
        let ds = dataset();
        let d = ds.input_dim();
        let mut w: Vec<f64> = (0..d).map(|i| 0.1 * (i as f64 + 1.0)).collect();
        w[2] = 0.0;
        let net = Network::new(
            vec![DenseLayer::new(
                Array2::from_shape_vec((1, d), w.clone()).unwrap(),
                Array1::from(vec![0.05]),
            )
            .unwrap()],
            Activation::Relu,
            Some(ds.schema.clone()),
        )
        .unwrap();
        let rep = impact(&net, &ds).unwrap();
        assert_eq!(rep.features.len(), d);
        assert!(rep.features[2].signed.iter().all(|v| *v == 0.0));
        assert_eq!(rep.features[2].median_abs, 0.0);
        for (k, s) in ds.samples.iter().enumerate() {
            let y = net.predict(&s.x).unwrap();
            for i in 0..d {
                let expect = 2.0 * (y - s.target) * w[i];
                assert!((rep.features[i].signed[k] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_invariant_medians() {
        let ds = dataset();
        let net = Network::init(&[4], ds.input_dim(), Activation::Relu, 1)
            .unwrap()
            .with_schema(ds.schema.clone())
            .unwrap();
        let a = impact(&net, &ds).unwrap();
        let rev: Vec<usize> = (0..ds.len()).rev().collect();
        let b = impact(&net, &ds.subset(&rev)).unwrap();
        assert_eq!(a.medians(), b.medians());
        let csv = impact_csv(&a);
        assert!(csv.starts_with("feature_label,sample_index,impact_signed,impact_abs\n"));
        assert_eq!(csv.lines().count(), 1 + ds.len() * ds.input_dim());
    }
}
