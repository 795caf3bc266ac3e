use alloc::vec::Vec;

use crate::math;

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl Estimate {
    /// Mean and standard error of i.i.d. samples.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = if n == 0 { 0.0 } else { xs.iter().sum::<f64>() / n as f64 };
        let std_err = if n < 2 { 0.0 } else { sample_std(xs) / math::sqrt(n as f64) };
        Estimate { mean, std_err, samples: n }
    }

    /// True when `self` exceeds `other` by at least `z` combined standard errors.
    pub fn exceeds(&self, other: &Estimate, z: f64) -> bool {
        self.mean - other.mean >= z * math::sqrt(self.std_err * self.std_err + other.std_err * other.std_err)
    }
}

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the sample variance under a Gaussian approximation,
    /// `var * sqrt(2 / (n - 1))`.
    pub fn variance_std_err(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.variance() * math::sqrt(2.0 / (self.n - 1) as f64)
        }
    }

    pub fn mean_estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean,
            std_err: if self.n < 2 { 0.0 } else { math::sqrt(self.variance() / self.n as f64) },
            samples: self.n as usize,
        }
    }
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    let mut m = Moments::default();
    xs.iter().for_each(|&x| m.push(x));
    math::sqrt(m.variance())
}

/// Sum in ascending order so the result does not depend on input order.
pub fn canonical_sum(xs: &mut Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_stream_std() {
        let xs: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.8 } else { 0.9 }).collect();
        assert!((sample_std(&xs) - 0.051_298_917_604_257_7).abs() < 1e-12);
    }

    #[test]
    fn constant_stream() {
        assert_eq!(sample_std(&[0.7; 20]), 0.0);
        let e = Estimate::from_samples(&[2.0, 4.0]);
        assert_eq!(e.mean, 3.0);
        assert!((e.std_err - 1.0).abs() < 1e-12);
    }
}
