use benn_core::analysis::{
    compute_b, compute_b_monte_carlo, robustness_random, robustness_trained, stability_track, verify_theorem1,
    OutputKind, PerturbationSpec, Regime, Target,
};
use benn_core::data::{make_toy, ToySpec};
use benn_core::nn::{Network, NetworkConfig};
use benn_core::{rng, RealTensor};
use std::f64::consts::PI;

/// With `x ~ N(0, 1)` and `Δ ~ N(0, σ²)`, the flip probability of `sign(x)`
/// is `arctan(σ) / π`, so `E[γ²] = 4 arctan(σ) / π`.
fn b_oracle(sigma: f64) -> f64 {
    4.0 / PI * sigma.atan()
}

#[test]
fn b_matches_arctan_form() {
    for sigma in [3.0, 1.5, 1.0, 0.5, 0.1, 0.01, 0.001, 1e-4] {
        let b = compute_b(sigma).unwrap();
        assert!((b - b_oracle(sigma)).abs() < 1e-7 * b_oracle(sigma), "σ={sigma}: {b}");
    }
}

#[test]
fn b_table_values() {
    for (sigma, b) in [(1.5, 1.25), (1.0, 1.0), (0.5, 0.59), (0.1, 0.13)] {
        assert!((compute_b(sigma).unwrap() - b).abs() < 0.01);
    }
    for (sigma, b) in [(0.01, 0.013), (0.001, 0.0013)] {
        assert!((compute_b(sigma).unwrap() - b).abs() < 0.05 * b);
    }
}

#[test]
fn b_monte_carlo_agrees() {
    for sigma in [1.0, 0.3] {
        let est = compute_b_monte_carlo(sigma, 200_000, &mut rng::stream(5, 0)).unwrap();
        assert!((est.mean - b_oracle(sigma)).abs() < 4.0 * est.std_err);
    }
}

#[test]
fn stability_of_alternating_stream() {
    let acc: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.8 } else { 0.9 }).collect();
    let expect = (0.0025f64 * 20.0 / 19.0).sqrt();
    assert!((stability_track(&acc, 20).unwrap().std - expect).abs() < 1e-12);
    assert_eq!(stability_track(&[0.7; 25], 20).unwrap().std, 0.0);
    assert!(stability_track(&acc[..19], 20).is_err());
}

#[test]
fn theorem1_real_regime_small() {
    let rep = verify_theorem1(64, 0.7, 0.3, &[2, 4], 20_000, 1).unwrap();
    let real = rep.rows.iter().find(|r| r.regime == Regime::Real && r.k == 1).unwrap();
    let cf = 64.0 * 0.49 * 0.09;
    assert!((real.closed_form - cf).abs() < 1e-12);
    assert!((real.measured - cf).abs() < 3.0 * real.std_err);
}

#[test]
fn linear_net_output_change_is_analytic() {
    let cfg = NetworkConfig::parse("input 32\nclasses 2\nfc width=2\n").unwrap();
    let x = RealTensor::from_fn(&[16, 32], |i| ((i * 37 % 19) as f32 / 9.5) - 1.0);
    let (sigma_w, sigma2) = (0.8f64, 0.01f64);
    let spec = PerturbationSpec { target: Target::Input, sigma2, trials: 20, seed: 3 };
    let est = robustness_random(&cfg, &spec, 400, sigma_w as f32, &x, OutputKind::Logits).unwrap();
    let expect = 2.0 * 32.0 * sigma_w * sigma_w * sigma2;
    assert!((est.mean - expect).abs() < 3.0 * est.std_err, "{} ± {} vs {expect}", est.mean, est.std_err);
}

#[test]
fn zero_noise_changes_nothing() {
    let data = make_toy(&ToySpec::blobs(200, 3, &[10], 0.5, 2)).unwrap();
    let cfg = NetworkConfig::parse("input 10\nclasses 3\nfc width=8 weight=1 act=1\nbatchnorm\nfc width=3\n").unwrap();
    let net = Network::new(&cfg, 0).unwrap();
    for target in [Target::Input, Target::Weights] {
        let spec = PerturbationSpec { target, sigma2: 0.0, trials: 3, seed: 1 };
        assert_eq!(robustness_trained(&net, &data, &spec, 50).unwrap().mean, 0.0);
        let est = robustness_random(&cfg, &spec, 2, 1.0, data.images(), OutputKind::Softmax).unwrap();
        assert_eq!(est.mean, 0.0);
    }
}

#[test]
fn larger_noise_moves_outputs_more() {
    let cfg = NetworkConfig::parse("input 16\nclasses 4\nfc width=16 weight=1 act=1\nfc width=4 weight=1 act=1\n").unwrap();
    let x = RealTensor::from_fn(&[32, 16], |i| ((i * 13 % 17) as f32 / 8.5) - 1.0);
    let at = |sigma2| {
        let spec = PerturbationSpec { target: Target::Input, sigma2, trials: 10, seed: 8 };
        robustness_random(&cfg, &spec, 30, 1.0, &x, OutputKind::Softmax).unwrap()
    };
    let (lo, hi) = (at(0.001), at(0.01));
    assert!(hi.mean - lo.mean > 3.0 * (hi.std_err.powi(2) + lo.std_err.powi(2)).sqrt());
}
