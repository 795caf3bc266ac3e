use benn_core::nn::{softmax_cross_entropy, Mode, Network, NetworkConfig};
use benn_core::{rng, RealTensor};

fn random_input(shape: &[usize], scale: f32, seed: u64) -> RealTensor {
    let mut r = rng::stream(seed, 9);
    RealTensor::from_fn(shape, |_| scale * rng::normal_f32(&mut r))
}

fn loss(net: &mut Network, x: &RealTensor, labels: &[usize]) -> f64 {
    let logits = net.forward(x, Mode::Train).unwrap();
    f64::from(softmax_cross_entropy(&logits, labels, None).unwrap().0)
}

#[test]
fn input_gradient_matches_finite_differences() {
    let cfg = NetworkConfig::parse(
        "input 2x6x6\nclasses 3\nconv depth=3 kernel=3 padding=1\nbatchnorm\nrelu\nmaxpool kernel=2\n\
         conv depth=4 kernel=3\nhardtanh\navgpool global\nfc width=5\nrelu\nfc width=3\n",
    )
    .unwrap();
    let mut net = Network::new(&cfg, 3).unwrap();
    let x = random_input(&[4, 2, 6, 6], 1.0, 1);
    let labels = [0, 2, 1, 2];
    let logits = net.forward(&x, Mode::Train).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels, None).unwrap();
    let grad = net.backward(&dlogits).unwrap();
    let eps = 1e-2f32;
    for i in (0..x.len()).step_by(7) {
        let mut plus = x.clone();
        plus.values_mut()[i] += eps;
        let mut minus = x.clone();
        minus.values_mut()[i] -= eps;
        let fd = (loss(&mut net, &plus, &labels) - loss(&mut net, &minus, &labels)) / (2.0 * f64::from(eps));
        let g = f64::from(grad.values()[i]);
        assert!((fd - g).abs() <= 2e-3 + 2e-2 * g.abs(), "input {i}: analytic {g} vs numeric {fd}");
    }
}

/// Loss of `fc -> sign -> fc -> sign -> fc` where each sign is replaced by
/// its clipped-identity surrogate linearised at the reference activations.
struct Surrogate {
    w: Vec<Vec<f64>>,
    shapes: Vec<(usize, usize)>,
    b: Vec<Vec<f64>>,
}

fn htanh(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

fn sgn(v: f64) -> f64 {
    if v >= 0.0 { 1.0 } else { -1.0 }
}

impl Surrogate {
    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (o, n) = self.shapes[l];
        (0..o).map(|r| self.b[l][r] + (0..n).map(|c| self.w[l][r * n + c] * x[c]).sum::<f64>()).collect()
    }

    fn act(z: &[f64], z0: &[f64]) -> Vec<f64> {
        z.iter().zip(z0).map(|(&v, &r)| sgn(r) + htanh(v) - htanh(r)).collect()
    }

    /// Loss as a function of the first pre-sign activations `z1`.
    fn loss(&self, z1: &[f64], z1_ref: &[f64], label: usize) -> f64 {
        let z2_ref = self.affine(1, &Self::act(z1_ref, z1_ref));
        let z2 = self.affine(1, &Self::act(z1, z1_ref));
        let logits = self.affine(2, &Self::act(&z2, &z2_ref));
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        lse - logits[label]
    }
}

#[test]
fn ste_gradient_matches_clipped_identity() {
    let cfg = NetworkConfig::parse("input 5\nclasses 3\nfc width=6\nbinact\nfc width=4\nbinact\nfc width=3\n").unwrap();
    let mut net = Network::new(&cfg, 11).unwrap();
    let x = random_input(&[1, 5], 2.0, 4);
    let label = 1;
    let logits = net.forward(&x, Mode::Eval).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &[label], None).unwrap();
    let trace = net.backward_trace(&dlogits).unwrap();
    let state = net.state();
    let get = |name: &str| state.iter().find(|a| a.name == name).unwrap();
    let sur = Surrogate {
        w: ["0.weight", "2.weight", "4.weight"].iter().map(|n| get(n).values.iter().map(|&v| f64::from(v)).collect()).collect(),
        shapes: ["0.weight", "2.weight", "4.weight"].iter().map(|n| (get(n).shape[0], get(n).shape[1])).collect(),
        b: ["0.bias", "2.bias", "4.bias"].iter().map(|n| get(n).values.iter().map(|&v| f64::from(v)).collect()).collect(),
    };
    let x64: Vec<f64> = x.values().iter().map(|&v| f64::from(v)).collect();
    let z1 = sur.affine(0, &x64);
    let sur_logits = sur.affine(2, &Surrogate::act(&sur.affine(1, &Surrogate::act(&z1, &z1)), &sur.affine(1, &Surrogate::act(&z1, &z1))));
    for (a, b) in sur_logits.iter().zip(logits.values()) {
        assert!((a - f64::from(*b)).abs() < 1e-4, "surrogate forward disagrees: {a} vs {b}");
    }
    assert!(z1.iter().any(|v| v.abs() > 1.0) && z1.iter().any(|v| v.abs() < 1.0));
    let grad = trace[1].values();
    let eps = 1e-6;
    for i in 0..z1.len() {
        if z1[i].abs() > 1.0 {
            assert_eq!(grad[i], 0.0, "unit {i} saturated at {} but got gradient", z1[i]);
            continue;
        }
        let (mut p, mut m) = (z1.clone(), z1.clone());
        p[i] += eps;
        m[i] -= eps;
        let fd = (sur.loss(&p, &z1, label) - sur.loss(&m, &z1, label)) / (2.0 * eps);
        assert!((fd - f64::from(grad[i])).abs() < 1e-4, "unit {i}: {} vs {fd}", grad[i]);
    }
}
