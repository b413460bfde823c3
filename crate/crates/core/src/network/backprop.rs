use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{Network, NetworkError};
use crate::dataset::Sample;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Mean-squared-error loss on a batch with its exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub loss: f64,
    pub param_grads: Vec<LayerGradient>,
    /// Row `n` holds dL/dx for sample `n` (L is the batch mean).
    pub input_grads: Array2<f64>,
}

impl GradientBundle {
    /// Parameter gradient in [`Network::flat_params`] order.
    pub fn flat_param_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.param_grads {
            out.extend(g.weights.iter());
            out.extend(g.biases.iter());
        }
        out
    }
}

impl Network {
    pub fn gradients(&self, batch: &[Sample]) -> Result<GradientBundle, NetworkError> {
        if batch.is_empty() {
            return Err(NetworkError::Empty);
        }
        let d = self.input_dim();
        let mut x = Array2::zeros((batch.len(), d));
        for (n, s) in batch.iter().enumerate() {
            if s.x.len() != d {
                return Err(NetworkError::Schema(format!(
                    "sample {n} has {} features, network expects {d}",
                    s.x.len()
                )));
            }
            x.row_mut(n).assign(&ArrayView1::from(&s.x[..]));
        }
        let t: Array1<f64> = batch.iter().map(|s| s.target).collect();
        self.gradients_batch(x.view(), t.view())
    }

    /// Reverse-mode pass over a batch `x` (`n x d`) with targets `t`.
    pub fn gradients_batch(&self, x: ArrayView2<f64>, t: ArrayView1<f64>) -> Result<GradientBundle, NetworkError> {
        let n = x.nrows();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        if x.ncols() != self.input_dim() {
            return Err(NetworkError::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if t.len() != n {
            return Err(NetworkError::Dimension {
                expected: n,
                got: t.len(),
            });
        }
        let layers = self.layers();
        let last = layers.len() - 1;
        let act = self.activation();

        // post[0] is the input; pre[k], post[k + 1] belong to layer k.
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(layers.len() + 1);
        post.push(x.to_owned());
        for (k, layer) in layers.iter().enumerate() {
            let mut z = post[k].dot(&layer.weights.t());
            z += &layer.biases;
            let a = if k == last { z.clone() } else { z.mapv(|v| act.apply(v)) };
            pre.push(z);
            post.push(a);
        }

        let y = post[last + 1].column(0);
        let residual = &y - &t;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / n as f64;

        let mut delta: Array2<f64> = residual.mapv(|r| 2.0 * r / n as f64).insert_axis(Axis(1));
        let mut grads = Vec::with_capacity(layers.len());
        let mut input_grads = Array2::zeros((0, 0));
        for k in (0..layers.len()).rev() {
            let layer = &layers[k];
            let weights = delta.t().dot(&post[k]);
            let biases = delta.sum_axis(Axis(0));
            grads.push(LayerGradient { weights, biases });
            let mut upstream = delta.dot(&layer.weights);
            if k > 0 {
                ndarray::Zip::from(&mut upstream)
                    .and(&pre[k - 1])
                    .and(&post[k])
                    .for_each(|g, &z, &a| *g *= act.derivative(z, a));
                delta = upstream;
            } else {
                input_grads = upstream;
            }
        }
        grads.reverse();
        Ok(GradientBundle {
            loss,
            param_grads: grads,
            input_grads,
        })
    }

    /// Loss and flat parameter gradient, for optimizers.
    pub fn loss_and_flat_grad(&self, x: ArrayView2<f64>, t: ArrayView1<f64>) -> Result<(f64, Vec<f64>), NetworkError> {
        let b = self.gradients_batch(x, t)?;
        Ok((b.loss, b.flat_param_grads()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, DenseLayer};
    use chrono::NaiveDate;
    use ndarray::{arr1, arr2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(x: Vec<f64>, target: f64) -> Sample {
        Sample {
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            x,
            target,
        }
    }

    #[test]
    fn linear_closed_form() {
        let w = [0.4, -1.3, 2.0];
        let l = DenseLayer::new(arr2(&[w]), arr1(&[0.25])).unwrap();
        let net = Network::new(vec![l], Activation::Relu, None).unwrap();
        let x = vec![0.1, 0.7, 0.3];
        let t = 0.5;
        let y = net.predict(&x).unwrap();
        let g = net.gradients(&[sample(x.clone(), t)]).unwrap();
        assert!((g.loss - (y - t).powi(2)).abs() < 1e-15);
        for i in 0..3 {
            assert!((g.input_grads[[0, i]] - 2.0 * (y - t) * w[i]).abs() < 1e-14);
            assert!((g.param_grads[0].weights[[0, i]] - 2.0 * (y - t) * x[i]).abs() < 1e-14);
        }
        assert!((g.param_grads[0].biases[0] - 2.0 * (y - t)).abs() < 1e-14);
    }

    #[test]
    fn dead_input_has_zero_gradient() {
        let mut net = Network::init(&[6, 4], 5, Activation::Relu, 11).unwrap();
        let mut layers = net.layers().to_vec();
        layers[0].weights.column_mut(2).fill(0.0);
        net = Network::new(layers, Activation::Relu, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch: Vec<Sample> = (0..8)
            .map(|_| sample((0..5).map(|_| rng.random()).collect(), rng.random()))
            .collect();
        let g = net.gradients(&batch).unwrap();
        assert!(g.input_grads.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_shapes_and_errors() {
        let net = Network::init(&[3], 2, Activation::Tanh, 0).unwrap();
        assert!(matches!(net.gradients(&[]), Err(NetworkError::Empty)));
        assert!(net.gradients(&[sample(vec![0.1], 0.0)]).is_err());
        let g = net
            .gradients(&[sample(vec![0.1, 0.2], 0.0), sample(vec![0.3, 0.4], 1.0)])
            .unwrap();
        assert_eq!(g.input_grads.dim(), (2, 2));
        assert_eq!(g.flat_param_grads().len(), net.n_params());
        assert!(g.loss >= 0.0);
    }

    #[test]
    fn output_gradient_matches_loss_gradient_chain_rule() {
        let net = Network::init(&[5, 4], 3, Activation::Sigmoid, 4).unwrap();
        let x = vec![0.2, 0.5, 0.9];
        let (y, dfdx) = net.output_gradient(&x).unwrap();
        let t = 0.1;
        let g = net.gradients(&[sample(x, t)]).unwrap();
        for i in 0..3 {
            assert!((g.input_grads[[0, i]] - 2.0 * (y - t) * dfdx[i]).abs() < 1e-13);
        }
    }
}
