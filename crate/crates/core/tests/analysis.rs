mod common;

use common::{linear_net, monotone_net, random_box, random_net, synth_dataset, uniform_in};
use hydroverify::analysis::{extremum_search, impact, impact_csv, median, Direction, ExtremumConfig};
use hydroverify::dataset::InputVariant;
use hydroverify::network::{Activation, DenseLayer, Network};
use hydroverify::verify::InputBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(restarts: usize, seed: u64) -> ExtremumConfig {
    ExtremumConfig {
        restarts,
        seed,
        ..ExtremumConfig::default()
    }
}

#[test]
fn linear_nets_reach_the_optimal_corner() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let d = rng.random_range(1..9);
        let w: Vec<f64> = (0..d)
            .map(|_| {
                let m = rng.random_range(0.1..2.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let net = linear_net(&w, 0.3);
        let bx = random_box(&mut rng, d, 0.4);
        let argmax: Vec<f64> = (0..d)
            .map(|i| if w[i] > 0.0 { bx.hi()[i] } else { bx.lo()[i] })
            .collect();
        let argmin: Vec<f64> = (0..d)
            .map(|i| if w[i] > 0.0 { bx.lo()[i] } else { bx.hi()[i] })
            .collect();
        let mx = extremum_search(&net, &bx, Direction::Max, &cfg(8, 1)).unwrap();
        let mn = extremum_search(&net, &bx, Direction::Min, &cfg(8, 1)).unwrap();
        assert_eq!(mx.best_input, argmax);
        assert_eq!(mn.best_input, argmin);
        assert_eq!(mx.best_output, net.predict(&argmax).unwrap());
    }
}

#[test]
fn best_output_matches_a_forward_pass_and_stays_in_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let net = random_net(&mut rng, 5, &[9, 7], Activation::Relu);
    let bx = random_box(&mut rng, 5, 0.5);
    for dir in [Direction::Min, Direction::Max] {
        let r = extremum_search(&net, &bx, dir, &cfg(32, 2)).unwrap();
        assert!(bx.contains(&r.best_input));
        assert_eq!(r.best_output, net.predict(&r.best_input).unwrap());
        assert_eq!(r.restarts.len(), 32);
        assert!(r.discarded_restarts.is_empty());
    }
}

#[test]
fn search_beats_uniform_sampling_on_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut wins = 0;
    for t in 0..10 {
        let d = rng.random_range(2..8);
        let net = random_net(&mut rng, d, &[9, 7, 13], Activation::Relu);
        let bx = InputBox::unit(d);
        let sampled = (0..10_000)
            .map(|_| net.predict(&uniform_in(&mut rng, &bx)).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let r = extremum_search(&net, &bx, Direction::Max, &cfg(256, t)).unwrap();
        if r.best_output >= sampled {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}/10");
}

#[test]
fn monotone_nets_peak_on_the_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..10 {
        let d = rng.random_range(2..10);
        let signs: Vec<f64> = (0..d).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let net = monotone_net(&mut rng, &signs, &[6, 4]);
        let bx = random_box(&mut rng, d, 0.4);
        let r = extremum_search(&net, &bx, Direction::Max, &cfg(16, 3)).unwrap();
        for (i, &v) in r.best_input.iter().enumerate() {
            let want = if signs[i] > 0.0 { bx.hi()[i] } else { bx.lo()[i] };
            assert_eq!(v, want, "coordinate {i}");
        }
    }
}

#[test]
fn search_is_reproducible_and_restarts_are_nested() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let net = random_net(&mut rng, 4, &[8, 8], Activation::Relu);
    let bx = InputBox::unit(4);
    let a = extremum_search(&net, &bx, Direction::Min, &cfg(24, 9)).unwrap();
    let b = extremum_search(&net, &bx, Direction::Min, &cfg(24, 9)).unwrap();
    assert_eq!(a, b);
    let more = extremum_search(&net, &bx, Direction::Min, &cfg(48, 9)).unwrap();
    assert_eq!(&more.restarts[..24], &a.restarts[..]);
    assert!(more.best_output <= a.best_output);
}

#[test]
fn invalid_search_configs_are_rejected() {
    let net = linear_net(&[1.0], 0.0);
    let bx = InputBox::unit(1);
    assert!(extremum_search(&net, &bx, Direction::Max, &cfg(0, 0)).is_err());
    let bad = ExtremumConfig {
        step_size: 0.0,
        ..cfg(4, 0)
    };
    assert!(extremum_search(&net, &bx, Direction::Max, &bad).is_err());
    assert!(extremum_search(&net, &InputBox::unit(2), Direction::Max, &cfg(4, 0)).is_err());
}

/// Random ReLU net whose first-layer columns listed in `dead` are zero.
fn with_dead_inputs(rng: &mut ChaCha8Rng, d: usize, dead: &[usize]) -> Network {
    let net = random_net(rng, d, &[6, 5], Activation::Relu);
    let mut layers: Vec<DenseLayer> = net.layers().to_vec();
    for &i in dead {
        layers[0].weights.column_mut(i).fill(0.0);
    }
    Network::new(layers, Activation::Relu, None).unwrap()
}

#[test]
fn dead_inputs_have_exactly_zero_impact() {
    let ds = synth_dataset(2, InputVariant::AirRunoffDay, 200, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let dead = [1, 8, 12];
    let net = with_dead_inputs(&mut rng, ds.input_dim(), &dead);
    let rep = impact(&net, &ds).unwrap();
    assert_eq!(rep.n_samples, ds.len());
    for &i in &dead {
        assert!(rep.features[i].signed.iter().all(|&g| g == 0.0), "feature {i}");
        assert_eq!(rep.features[i].median_abs, 0.0);
    }
    assert!(rep.features[0].abs.iter().any(|&g| g > 0.0));
}

#[test]
fn linear_impacts_follow_the_closed_form() {
    let ds = synth_dataset(2, InputVariant::AirRunoff, 150, 5);
    let w: Vec<f64> = (0..ds.input_dim()).map(|i| 0.3 - 0.05 * i as f64).collect();
    let net = linear_net(&w, 0.1);
    let rep = impact(&net, &ds).unwrap();
    for (n, s) in ds.samples.iter().enumerate() {
        let y = 0.1 + w.iter().zip(&s.x).map(|(a, b)| a * b).sum::<f64>();
        for (i, f) in rep.features.iter().enumerate() {
            let expected = 2.0 * (y - s.target) * w[i];
            assert!((f.signed[n] - expected).abs() < 1e-10);
            assert_eq!(f.abs[n], f.signed[n].abs());
        }
    }
    assert_eq!(rep.features[0].feature, ds.schema.feature_names[0]);
}

#[test]
fn impact_csv_has_one_row_per_feature_and_sample() {
    let ds = synth_dataset(2, InputVariant::Air, 40, 6);
    let net = linear_net(&vec![0.1; ds.input_dim()], 0.0);
    let rep = impact(&net, &ds).unwrap();
    let csv = impact_csv(&rep);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "feature_label,sample_index,impact_signed,impact_abs"
    );
    assert_eq!(lines.count(), ds.len() * ds.input_dim());
}

#[test]
fn medians() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    assert_eq!(median(&[7.0]), 7.0);
}

#[test]
fn impact_rejects_mismatched_data() {
    let ds = synth_dataset(2, InputVariant::Air, 40, 7);
    let net = linear_net(&[1.0; 3], 0.0);
    assert!(impact(&net, &ds).is_err());
}
