//! Elementwise binarization, straight-through gradients and k-bit uniform
//! quantization.

use alloc::vec::Vec;

use crate::math;
use crate::tensor::RealTensor;
use crate::{Error, Result};

/// `Sign(x)` with `Sign(0) = +1`.
#[inline]
pub fn sign(x: f32) -> f32 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn binarize_forward(x: &RealTensor) -> Result<RealTensor> {
    x.check_finite()?;
    Ok(RealTensor::from_fn(x.shape(), |i| sign(x.values()[i])))
}

/// Passes the upstream gradient where `|x| <= 1` and zeroes it elsewhere.
pub fn ste_backward(upstream: &RealTensor, x_at_forward: &RealTensor) -> Result<RealTensor> {
    if upstream.shape() != x_at_forward.shape() {
        return Err(Error::shape(x_at_forward.shape(), upstream.shape()));
    }
    let mut out = upstream.clone();
    ste_mask_in_place(out.values_mut(), x_at_forward.values());
    Ok(out)
}

#[inline]
pub(crate) fn ste_mask_in_place(grad: &mut [f32], x: &[f32]) {
    for (g, &v) in grad.iter_mut().zip(x) {
        if !(v.abs() <= 1.0) {
            *g = 0.0;
        }
    }
}

pub(crate) fn check_bits(k: u8) -> Result<()> {
    if (2..=8).contains(&k) {
        Ok(())
    } else {
        Err(Error::invalid(alloc::format!("quantization bits must be in 2..=8, got {k}")))
    }
}

/// Uniform `2^k`-level quantizer on `[-1, 1]`, rounding half up.
#[inline]
pub(crate) fn quantize_scalar(x: f32, k: u8) -> f32 {
    let steps = ((1u32 << k) - 1) as f32;
    let c = x.clamp(-1.0, 1.0);
    math::roundf((c + 1.0) * 0.5 * steps) / steps * 2.0 - 1.0
}

pub fn quantize_k_bit(x: &RealTensor, k: u8) -> Result<RealTensor> {
    check_bits(k)?;
    Ok(RealTensor::from_fn(x.shape(), |i| quantize_scalar(x.values()[i], k)))
}

/// Row-wise softmax of a `[batch x classes]` logit matrix.
pub fn softmax_rows(logits: &RealTensor) -> RealTensor {
    let c = logits.row_len();
    let mut out = logits.clone();
    if c == 0 {
        return out;
    }
    for row in out.values_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for v in row.iter_mut() {
            *v = math::expf(*v - max);
            sum += *v as f64;
        }
        let inv = (1.0 / sum) as f32;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows(t: &RealTensor) -> Vec<usize> {
    let c = t.row_len().max(1);
    t.values().chunks(c).map(argmax).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn binarize_examples() {
        let y = binarize_forward(&RealTensor::vector(&[0.3, -0.7, 0.0])).unwrap();
        assert_eq!(y.values(), &[1.0, -1.0, 1.0]);
        let y = binarize_forward(&RealTensor::vector(&[-0.1, -5.0, -1e-30])).unwrap();
        assert_eq!(y.values(), &[-1.0; 3]);
        assert!(binarize_forward(&RealTensor::vector(&[f32::INFINITY])).is_err());
    }

    #[test]
    fn ste_closed_interval() {
        let x = RealTensor::vector(&[0.5, 2.0, -1.0]);
        let up = RealTensor::vector(&[1.0, 1.0, 1.0]);
        assert_eq!(ste_backward(&up, &x).unwrap().values(), &[1.0, 0.0, 1.0]);
        let zeros = RealTensor::zeros(&[3]);
        let up = RealTensor::vector(&[0.3, -2.0, 7.0]);
        assert_eq!(ste_backward(&up, &zeros).unwrap(), up);
        assert!(ste_backward(&RealTensor::zeros(&[2]), &zeros).is_err());
    }

    #[test]
    fn quantize_two_bit_levels() {
        // Levels {-1, -1/3, 1/3, 1}; 0 sits exactly between -1/3 and 1/3 and rounds up.
        let q = quantize_k_bit(&RealTensor::vector(&[0.0]), 2).unwrap();
        assert!((q.values()[0] - 1.0 / 3.0).abs() < 1e-7);
        let levels = [-1.0f32, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for &l in &levels {
            let q = quantize_scalar(l, 2);
            assert!((q - l).abs() < 1e-6);
        }
    }

    #[test]
    fn quantize_rejects_bad_bits() {
        let x = RealTensor::zeros(&[1]);
        assert!(quantize_k_bit(&x, 1).is_err());
        assert!(quantize_k_bit(&x, 9).is_err());
    }

    #[test]
    fn softmax_and_argmax() {
        let l = RealTensor::new(&[2, 3], vec![0.0, 0.0, 0.0, 1.0, 3.0, 3.0]).unwrap();
        let p = softmax_rows(&l);
        for r in 0..2 {
            let s: f32 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert_eq!(argmax_rows(&p), vec![0, 1]);
    }
}
