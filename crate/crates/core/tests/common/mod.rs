//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use hydroverify::network::{Activation, DenseLayer, Network};
use hydroverify::verify::InputBox;
use ndarray::{Array1, Array2};
use rand::Rng;

/// Random ReLU (or other) net with Glorot-scale weights and biases in
/// [-0.5, 0.5], so that a typical box contains unstable neurons.
pub fn random_net<R: Rng>(rng: &mut R, input_dim: usize, hidden: &[usize], act: Activation) -> Network {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(1);
    let layers = dims
        .windows(2)
        .map(|w| {
            let lim = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let weights = Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-lim..lim));
            let biases = Array1::from_shape_fn(w[1], |_| rng.random_range(-0.5..0.5));
            DenseLayer::new(weights, biases).unwrap()
        })
        .collect();
    Network::new(layers, act, None).unwrap()
}

/// Box with random center in [0,1]^d and per-coordinate radius up to `max_radius`.
pub fn random_box<R: Rng>(rng: &mut R, d: usize, max_radius: f64) -> InputBox {
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for _ in 0..d {
        let c: f64 = rng.random_range(0.0..1.0);
        let r: f64 = rng.random_range(0.0..max_radius);
        lo.push((c - r).max(0.0));
        hi.push((c + r).min(1.0));
    }
    InputBox::new(lo, hi).unwrap()
}

pub fn uniform_in<R: Rng>(rng: &mut R, bx: &InputBox) -> Vec<f64> {
    bx.lo()
        .iter()
        .zip(bx.hi())
        .map(|(&l, &h)| if l < h { rng.random_range(l..=h) } else { l })
        .collect()
}

/// Plain interval arithmetic, written independently of the library.
pub fn naive_interval(net: &Network, bx: &InputBox) -> (f64, f64) {
    let mut lo = bx.lo().to_vec();
    let mut hi = bx.hi().to_vec();
    let last = net.layers().len() - 1;
    for (k, layer) in net.layers().iter().enumerate() {
        let mut nlo = Vec::with_capacity(layer.out_dim());
        let mut nhi = Vec::with_capacity(layer.out_dim());
        for j in 0..layer.out_dim() {
            let (mut l, mut u) = (layer.biases[j], layer.biases[j]);
            for i in 0..layer.in_dim() {
                let w = layer.weights[[j, i]];
                let (a, b) = (w * lo[i], w * hi[i]);
                l += a.min(b);
                u += a.max(b);
            }
            if k != last {
                l = l.max(0.0);
                u = u.max(0.0);
            }
            nlo.push(l);
            nhi.push(u);
        }
        lo = nlo;
        hi = nhi;
    }
    (lo[0], hi[0])
}

/// Exact-range lower/upper estimate on a 2-D box: a dense grid plus corners.
pub fn brute_force_range_2d(net: &Network, bx: &InputBox, n: usize) -> (f64, f64) {
    let (lo, hi) = (bx.lo(), bx.hi());
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    let mut visit = |x: [f64; 2]| {
        let y = net.predict(&x).unwrap();
        best.0 = best.0.min(y);
        best.1 = best.1.max(y);
    };
    for i in 0..n {
        for j in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let s = j as f64 / (n - 1) as f64;
            visit([lo[0] + t * (hi[0] - lo[0]), lo[1] + s * (hi[1] - lo[1])]);
        }
    }
    for &a in &[lo[0], hi[0]] {
        for &b in &[lo[1], hi[1]] {
            visit([a, b]);
        }
    }
    best
}

/// Single-layer affine network `y = w·x + b`.
pub fn linear_net(w: &[f64], b: f64) -> Network {
    Network::new(
        vec![DenseLayer::new(
            Array2::from_shape_vec((1, w.len()), w.to_vec()).unwrap(),
            Array1::from(vec![b]),
        )
        .unwrap()],
        Activation::Relu,
        None,
    )
    .unwrap()
}

/// ReLU net that is strictly monotone in every input on the unit cube:
/// non-negative weights after the first layer, first-layer column `i`
/// carrying the sign `signs[i]`, and a first hidden unit whose bias keeps
/// it active everywhere. The other units still have kinks inside the cube.
pub fn monotone_net<R: Rng>(rng: &mut R, signs: &[f64], hidden: &[usize]) -> Network {
    let mut dims = vec![signs.len()];
    dims.extend_from_slice(hidden);
    dims.push(1);
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let weights = Array2::from_shape_fn((w[1], w[0]), |(_, i)| {
                let m = rng.random_range(0.2..1.0);
                if k == 0 {
                    signs[i] * m
                } else {
                    m
                }
            });
            let mut biases = Array1::from_shape_fn(w[1], |_| rng.random_range(0.0..0.5));
            if k == 0 {
                biases[0] = weights.row(0).mapv(f64::abs).sum() + 0.1;
            }
            DenseLayer::new(weights, biases).unwrap()
        })
        .collect();
    Network::new(layers, Activation::Relu, None).unwrap()
}

/// Relative error with an absolute floor for near-zero entries.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

pub fn sample(x: Vec<f64>, target: f64) -> hydroverify::dataset::Sample {
    hydroverify::dataset::Sample {
        date: chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(),
        x,
        target,
    }
}

/// True when every hidden pre-activation of `x` is at least `margin` away
/// from the ReLU kink.
pub fn away_from_kinks(net: &Network, x: &[f64], margin: f64) -> bool {
    let (_, cache) = net.forward(x).unwrap();
    let last = cache.pre.len() - 1;
    cache.pre[..last].iter().flatten().all(|z| z.abs() > margin)
}

/// Largest relative error between analytic and central-difference gradients
/// of the batch MSE, over parameters and inputs.
pub fn gradient_check(net: &Network, batch: &[hydroverify::dataset::Sample], h: f64) -> (f64, f64) {
    let g = net.gradients(batch).unwrap();
    let analytic = g.flat_param_grads();
    let p0 = net.flat_params();
    let mut worst_param: f64 = 0.0;
    let mut probe = net.clone();
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + h;
        probe.set_flat_params(&p).unwrap();
        let up = probe.mse(batch).unwrap();
        p[i] = p0[i] - h;
        probe.set_flat_params(&p).unwrap();
        let down = probe.mse(batch).unwrap();
        worst_param = worst_param.max(rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
    let mut worst_input: f64 = 0.0;
    for k in 0..batch.len() {
        for i in 0..batch[k].x.len() {
            let mut shifted = batch.to_vec();
            shifted[k].x[i] += h;
            let up = net.mse(&shifted).unwrap();
            shifted[k].x[i] -= 2.0 * h;
            let down = net.mse(&shifted).unwrap();
            worst_input = worst_input.max(rel_err(g.input_grads[[k, i]], (up - down) / (2.0 * h)));
        }
    }
    (worst_param, worst_input)
}

/// Features of a default synthetic stream with the given layout.
pub fn synth_dataset(
    n_stations: usize,
    variant: hydroverify::dataset::InputVariant,
    n_days: usize,
    seed: u64,
) -> hydroverify::dataset::Dataset {
    use hydroverify::dataset::{build_features, synthesize, FeatureConfig, SynthConfig};
    let cfg = SynthConfig {
        n_days,
        n_stations,
        seed,
        ..SynthConfig::default()
    };
    let table = synthesize(&cfg).unwrap();
    build_features(&table, &FeatureConfig::new(n_stations, variant)).unwrap()
}

/// `f(x) = ½ xᵀAx − bᵀx` with eigenvalues spread over `[1, cond]` in a random
/// orthonormal basis. Returns `(A, b, x*)`.
pub fn random_quadratic<R: Rng>(rng: &mut R, n: usize, cond: f64) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let mut q: Array2<f64> = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
    for j in 0..n {
        for k in 0..j {
            let dot = q.column(j).dot(&q.column(k));
            let ck = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-dot, &ck);
        }
        let norm: f64 = q.column(j).dot(&q.column(j));
        let norm = norm.sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    let eig = Array1::from_shape_fn(n, |i| 1.0 + (cond - 1.0) * i as f64 / (n - 1) as f64);
    let a = q.dot(&Array2::from_diag(&eig)).dot(&q.t());
    let xstar = Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0));
    let b = a.dot(&xstar);
    (a, b, xstar)
}

pub fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
    let (a, b) = (x[0], x[1]);
    let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
    let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
    (f, g)
}

/// Station counts of the six study streams and their published feature
/// counts for A, A+R, A+D and A+R+D.
pub const STREAM_SHAPES: [(&str, usize, [usize; 4]); 6] = [
    ("Aubach", 2, [8, 12, 9, 13]),
    ("Abens", 3, [12, 16, 13, 17]),
    ("Bernauer Ache", 3, [12, 16, 13, 17]),
    ("Grosse Ohe", 4, [16, 20, 17, 21]),
    ("Otterbach", 2, [8, 12, 9, 13]),
    ("Sulzbach", 2, [8, 12, 9, 13]),
];

/// A small two-stream experiment that runs in seconds.
pub const SMOKE_CONFIG: &str = r#"
seed = 3
output_dir = "out"
architecture = "4-5-6"
architectures = ["4-5-6", "9-7-13"]

[[streams]]
name = "alpha"
kind = "synthetic"
[streams.synth]
n_days = 400
n_stations = 2

[[streams]]
name = "beta"
kind = "synthetic"
[streams.synth]
n_days = 300
n_stations = 3
station_offsets = [0.0, 0.5, -1.0]

[training]
restarts = 2
max_iterations = 150

[analysis]
soundness_boxes = 5
soundness_samples = 100

[analysis.extremum]
restarts = 16
steps = 100
"#;

pub fn write_config(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("experiment.toml");
    std::fs::write(&p, body).unwrap();
    p
}

/// Every file under `root`, relative path to contents, sorted.
pub fn snapshot(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(base: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}
