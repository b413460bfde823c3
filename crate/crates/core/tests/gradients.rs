mod common;

use common::{away_from_kinks, gradient_check, random_net, sample};
use hydroverify::network::Activation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn batch(rng: &mut ChaCha8Rng, net: &hydroverify::network::Network, n: usize) -> Vec<hydroverify::dataset::Sample> {
    let d = net.input_dim();
    let mut out = Vec::new();
    while out.len() < n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        if net.activation() != Activation::Relu || away_from_kinks(net, &x, 1e-3) {
            let t = rng.random_range(0.0..1.0);
            out.push(sample(x, t));
        }
    }
    out
}

fn check(act: Activation, shapes: &[&[usize]], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..20 {
        let hidden = shapes[trial % shapes.len()];
        let d = rng.random_range(2..10);
        let net = random_net(&mut rng, d, hidden, act);
        let n = rng.random_range(1..8);
        let b = batch(&mut rng, &net, n);
        let (p, x) = gradient_check(&net, &b, H);
        assert!(p < TOL, "{act:?} trial {trial}: parameter gradient rel err {p:e}");
        assert!(x < TOL, "{act:?} trial {trial}: input gradient rel err {x:e}");
    }
}

#[test]
fn relu_gradients_match_central_differences() {
    check(Activation::Relu, &[&[5], &[4, 5, 6], &[9, 7, 13]], 1);
}

#[test]
fn tanh_gradients_match_central_differences() {
    check(Activation::Tanh, &[&[5], &[6, 4]], 2);
}

#[test]
fn sigmoid_gradients_match_central_differences() {
    check(Activation::Sigmoid, &[&[3], &[7, 7, 7]], 3);
}

#[test]
fn batch_loss_is_the_mean_squared_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = random_net(&mut rng, 3, &[4], Activation::Relu);
    let b = batch(&mut rng, &net, 5);
    let g = net.gradients(&b).unwrap();
    let manual: f64 = b
        .iter()
        .map(|s| (net.predict(&s.x).unwrap() - s.target).powi(2))
        .sum::<f64>()
        / 5.0;
    assert!((g.loss - manual).abs() < 1e-14);
    assert_eq!(g.input_grads.dim(), (5, 3));
}
