use benn_core::nn::{binarize_forward, quantize_k_bit, sign, ste_backward};
use benn_core::RealTensor;
use proptest::prelude::*;

#[test]
fn sign_of_zero_is_positive() {
    assert_eq!(sign(0.0), 1.0);
    assert_eq!(sign(-0.0), 1.0);
    assert_eq!(sign(-1e-30), -1.0);
}

#[test]
fn two_bit_levels() {
    let x = RealTensor::vector(&[-1.0, -0.5, -0.2, 0.0, 0.4, 1.0]);
    let q = quantize_k_bit(&x, 2).unwrap();
    let third = 1.0 / 3.0;
    let expect = [-1.0, -third, -third, third, third, 1.0];
    for (a, b) in q.values().iter().zip(expect) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

proptest! {
    #[test]
    fn quantization_is_idempotent(v in prop::collection::vec(-2.0f32..2.0, 1..64), k in 2u8..9) {
        let x = RealTensor::vector(&v);
        let once = quantize_k_bit(&x, k).unwrap();
        let twice = quantize_k_bit(&once, k).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
        let levels = ((1u32 << k) - 1) as f32;
        for &q in once.values() {
            prop_assert!((-1.0..=1.0).contains(&q));
            let step = (q + 1.0) * 0.5 * levels;
            prop_assert!((step - step.round()).abs() < 1e-3);
        }
    }

    #[test]
    fn ste_passes_only_inside_unit_interval(v in prop::collection::vec(-3.0f32..3.0, 1..64)) {
        let x = RealTensor::vector(&v);
        let up = RealTensor::from_fn(&[v.len()], |i| i as f32 + 1.0);
        let g = ste_backward(&up, &x).unwrap();
        for (i, (&xi, &gi)) in v.iter().zip(g.values()).enumerate() {
            prop_assert_eq!(gi, if xi.abs() <= 1.0 { i as f32 + 1.0 } else { 0.0 });
        }
        let b = binarize_forward(&x).unwrap();
        prop_assert!(b.values().iter().all(|s| *s == 1.0 || *s == -1.0));
    }
}
