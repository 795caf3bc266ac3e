//! The sign-flip variance `B(σ) = E[(sign(x + Δx) - sign(x))^2]` for
//! `x ~ N(0, 1)` and `Δx ~ N(0, σ^2)`.

use alloc::vec::Vec;

use super::stats::Estimate;
use crate::rng::{self, Rng};
use crate::{math, Error, Result};

const TOLERANCE: f64 = 1e-11;
const MAX_DEPTH: u32 = 24;
/// Gaussian tails beyond this many standard deviations are dropped.
const TRUNCATION: f64 = 8.0;

/// `B(σ) = 4 (Pr(γ = 2) + Pr(γ = -2)) = 8 Pr(γ = 2)` by symmetry, where
/// `Pr(γ = 2) = ∫_{x<0} φ(x) ∫_{Δ > -x} φ_σ(Δ) dΔ dx`, evaluated by nested
/// adaptive Simpson quadrature.
pub fn compute_b(sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(8.0 * flip_probability(sigma))
}

/// `Pr(x < 0, x + Δx > 0)`.
fn flip_probability(sigma: f64) -> f64 {
    // the inner integral vanishes once -x exceeds the Δ truncation
    let lo = -(TRUNCATION * sigma).min(TRUNCATION);
    let outer = |x: f64| math::normal_pdf(x, 1.0) * upper_mass(-x, sigma);
    adaptive_simpson(&outer, lo, 0.0, TOLERANCE)
}

/// `∫_{t}^{∞} φ_σ(Δ) dΔ` truncated at `TRUNCATION σ`, by quadrature.
fn upper_mass(t: f64, sigma: f64) -> f64 {
    let hi = TRUNCATION * sigma;
    let lo = t.max(-hi);
    if lo >= hi {
        return 0.0;
    }
    adaptive_simpson(&|d: f64| math::normal_pdf(d, sigma), lo, hi, TOLERANCE)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // split at fixed breakpoints first so narrow peaks are always sampled
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (l, r) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fl, fm, fr) = (f(l), f(0.5 * (l + r)), f(r));
            let whole = (r - l) / 6.0 * (fl + 4.0 * fm + fr);
            simpson_step(f, l, r, fl, fm, fr, whole, tol / pieces as f64, MAX_DEPTH)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol.max(f64::EPSILON * whole.abs()) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Monte-Carlo estimate of `B(σ)` from `samples` draws of `(x, Δx)`.
pub fn compute_b_monte_carlo(sigma: f64, samples: usize, rng: &mut Rng) -> Result<Estimate> {
    check_sigma(sigma)?;
    if samples == 0 {
        return Err(Error::invalid("Monte-Carlo estimate needs at least one sample"));
    }
    // γ^2 is 0 or 4, so track the flip count directly
    let mut flips = 0u64;
    for _ in 0..samples {
        let x = rng::normal(rng);
        let dx = sigma * rng::normal(rng);
        if (x >= 0.0) != (x + dx >= 0.0) {
            flips += 1;
        }
    }
    let p = flips as f64 / samples as f64;
    let std_err = if samples < 2 { 0.0 } else { 4.0 * math::sqrt(p * (1.0 - p) / (samples - 1) as f64) };
    Ok(Estimate { mean: 4.0 * p, std_err, samples })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("σ must be positive and finite"))
    }
}

/// One row of the `B`/`R` relation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BRow {
    pub sigma: f64,
    pub b: f64,
    /// `R = σ^2`.
    pub r: f64,
    pub monte_carlo: Estimate,
}

impl BRow {
    pub fn b_over_r(&self) -> f64 {
        self.b / self.r
    }
}

pub fn b_table(sigmas: &[f64], mc_samples: usize, seed: u64) -> Result<Vec<BRow>> {
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let mut r = rng::stream(seed, i as u64);
            Ok(BRow {
                sigma,
                b: compute_b(sigma)?,
                r: sigma * sigma,
                monte_carlo: compute_b_monte_carlo(sigma, mc_samples, &mut r)?,
            })
        })
        .collect()
}
