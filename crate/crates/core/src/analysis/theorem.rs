//! Monte-Carlo checks of the output-variation variance of random linear
//! networks under input perturbation, real and binarized.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::coefficient::compute_b;
use super::stats::{Estimate, Moments};
use crate::rng;
use crate::{math, Error, Result};

/// Which operands of the inner product are binarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Real,
    ActivationBinary,
    WeightBinary,
    BothBinary,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Real, Regime::ActivationBinary, Regime::WeightBinary, Regime::BothBinary];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Real => "real",
            Regime::ActivationBinary => "act_binary",
            Regime::WeightBinary => "weight_binary",
            Regime::BothBinary => "both_binary",
        })
    }
}

/// Measured variance of one regime with `k` bagged members (`k = 1` is a
/// single network).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeVariance {
    pub regime: Regime,
    pub k: usize,
    pub measured: f64,
    pub std_err: f64,
    pub closed_form: f64,
}

impl RegimeVariance {
    pub fn rel_error(&self) -> f64 {
        (self.measured - self.closed_form).abs() / self.closed_form
    }
}

/// Single-neuron variance comparison across regimes and bagging sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub fan_in: usize,
    pub sigma_w: f64,
    pub sigma: f64,
    pub b: f64,
    pub r: f64,
    pub rows: Vec<RegimeVariance>,
}

impl VarianceReport {
    pub fn get(&self, regime: Regime, k: usize) -> Option<&RegimeVariance> {
        self.rows.iter().find(|r| r.regime == regime && r.k == k)
    }

    /// Bagging size above which an activation-binarized ensemble beats the real network.
    pub fn activation_threshold(&self) -> f64 {
        self.b / self.r
    }

    /// Bagging size above which a weight-binarized ensemble beats the real network.
    pub fn weight_threshold(&self) -> f64 {
        1.0 / (self.sigma_w * self.sigma_w)
    }

    /// Bagging size above which a fully binarized ensemble beats the real network.
    pub fn both_threshold(&self) -> f64 {
        self.b / (self.r * self.sigma_w * self.sigma_w)
    }
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// One neuron with `fan_in` inputs `x ~ N(0, 1)`, perturbation
/// `Δx ~ N(0, σ^2)` and weights `w ~ N(0, σ_w^2)`. Every trial draws fresh
/// inputs and `max(ks)` independent weight vectors; a bag of `K` averages
/// the first `K` members' outputs on the shared input.
pub fn verify_theorem1(fan_in: usize, sigma_w: f64, sigma: f64, ks: &[usize], trials: usize, seed: u64) -> Result<VarianceReport> {
    if fan_in == 0 || !(sigma_w > 0.0) || trials < 2 {
        return Err(Error::invalid("need fan_in ≥ 1, σ_w > 0 and at least two trials"));
    }
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::invalid("bag sizes must be at least 1"));
    }
    let b = compute_b(sigma)?;
    let mut sizes: Vec<usize> = ks.to_vec();
    sizes.push(1);
    sizes.sort_unstable();
    sizes.dedup();
    let members = *sizes.last().unwrap();
    // moments[regime][size index]
    let mut moments = vec![vec![Moments::default(); sizes.len()]; 4];
    let mut x = vec![0.0; fan_in];
    let mut dx = vec![0.0; fan_in];
    let mut gamma = vec![0.0; fan_in];
    for t in 0..trials {
        let mut r = rng::stream(seed, t as u64);
        for i in 0..fan_in {
            x[i] = rng::normal(&mut r);
            dx[i] = sigma * rng::normal(&mut r);
            gamma[i] = sign(x[i] + dx[i]) - sign(x[i]);
        }
        let mut sums = [0.0f64; 4];
        let mut next = 0;
        for m in 0..members {
            let mut d = [0.0f64; 4];
            for i in 0..fan_in {
                let w = sigma_w * rng::normal(&mut r);
                let s = sign(w);
                d[0] += w * dx[i];
                d[1] += w * gamma[i];
                d[2] += s * dx[i];
                d[3] += s * gamma[i];
            }
            for (acc, v) in sums.iter_mut().zip(d) {
                *acc += v;
            }
            if m + 1 == sizes[next] {
                for reg in 0..4 {
                    moments[reg][next].push(sums[reg] / (m + 1) as f64);
                }
                next += 1;
            }
        }
    }
    let n = fan_in as f64;
    let (sw2, s2) = (sigma_w * sigma_w, sigma * sigma);
    let closed = [n * sw2 * s2, b * n * sw2, n * s2, b * n];
    let mut rows = Vec::new();
    for regime in Regime::ALL {
        for (j, &k) in sizes.iter().enumerate() {
            let m = &moments[regime.index()][j];
            rows.push(RegimeVariance {
                regime,
                k,
                measured: m.variance(),
                std_err: m.variance_std_err(),
                closed_form: closed[regime.index()] / k as f64,
            });
        }
    }
    Ok(VarianceReport { fan_in, sigma_w, sigma, b, r: s2, rows })
}

/// Outcome of checking one regime of a multi-layer stack against its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub regime: Regime,
    pub bound: f64,
    /// Pooled estimate of the output-variation variance over all trials.
    pub measured: Estimate,
    /// Fraction of trials whose estimate does not exceed the bound by more
    /// than three of its standard errors.
    pub satisfaction_rate: f64,
    pub trials: usize,
}

/// Stack of linear layers `widths[0] -> widths[1] -> ... -> widths[L]`
/// without normalization or nonlinearity other than the binarizations of
/// each regime. Each trial estimates `E[d^2]` for the first output unit,
/// `d = f(x + Δx) - f(x)`, from `samples_per_trial` independent draws of
/// weights, inputs and perturbation.
pub fn verify_theorem2(
    widths: &[usize],
    sigma_w: f64,
    sigma: f64,
    trials: usize,
    samples_per_trial: usize,
    seed: u64,
) -> Result<Vec<BoundCheck>> {
    if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
        return Err(Error::invalid("need at least one layer of positive width"));
    }
    if trials == 0 || samples_per_trial < 2 || !(sigma_w > 0.0) {
        return Err(Error::invalid("need trials ≥ 1, two samples per trial and σ_w > 0"));
    }
    let b = compute_b(sigma)?;
    let fan_product: f64 = widths[..widths.len() - 1].iter().map(|&n| n as f64).product();
    let layers = widths.len() - 1;
    let sw2_product = math::exp(layers as f64 * math::ln(sigma_w * sigma_w));
    let bounds = [
        sigma * sigma * fan_product * sw2_product,
        b * fan_product * sw2_product,
        sigma * sigma * fan_product,
        b * fan_product,
    ];
    let mut satisfied = [0usize; 4];
    let mut pooled = [Moments::default(); 4];
    let max_width = *widths.iter().max().unwrap();
    let mut clean = vec![vec![0.0; max_width]; 4];
    let mut noisy = vec![vec![0.0; max_width]; 4];
    let mut weights: Vec<Vec<f64>> = (0..layers).map(|l| vec![0.0; widths[l] * widths[l + 1]]).collect();
    for t in 0..trials {
        let mut r = rng::stream(seed, t as u64);
        let mut per_trial = [Moments::default(); 4];
        for _ in 0..samples_per_trial {
            for w in weights.iter_mut() {
                w.iter_mut().for_each(|v| *v = sigma_w * rng::normal(&mut r));
            }
            for i in 0..widths[0] {
                let x = rng::normal(&mut r);
                let dx = sigma * rng::normal(&mut r);
                for reg in 0..4 {
                    clean[reg][i] = x;
                    noisy[reg][i] = x + dx;
                }
            }
            for reg in Regime::ALL {
                let j = reg.index();
                let d = propagate(reg, &weights, widths, &mut clean[j], &mut noisy[j]);
                per_trial[j].push(d * d);
                pooled[j].push(d * d);
            }
        }
        for j in 0..4 {
            let e = per_trial[j].mean_estimate();
            if e.mean <= bounds[j] + 3.0 * e.std_err {
                satisfied[j] += 1;
            }
        }
    }
    Ok(Regime::ALL
        .iter()
        .map(|&regime| {
            let j = regime.index();
            BoundCheck {
                regime,
                bound: bounds[j],
                measured: pooled[j].mean_estimate(),
                satisfaction_rate: satisfied[j] as f64 / trials as f64,
                trials,
            }
        })
        .collect())
}

/// Runs both inputs through the stack in place and returns the change of
/// the first output unit.
fn propagate(regime: Regime, weights: &[Vec<f64>], widths: &[usize], clean: &mut [f64], noisy: &mut [f64]) -> f64 {
    let binary_act = matches!(regime, Regime::ActivationBinary | Regime::BothBinary);
    let binary_w = matches!(regime, Regime::WeightBinary | Regime::BothBinary);
    let mut next_clean = vec![0.0; clean.len()];
    let mut next_noisy = vec![0.0; noisy.len()];
    for (l, w) in weights.iter().enumerate() {
        let (n_in, n_out) = (widths[l], widths[l + 1]);
        if binary_act {
            clean[..n_in].iter_mut().for_each(|v| *v = sign(*v));
            noisy[..n_in].iter_mut().for_each(|v| *v = sign(*v));
        }
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let (mut a, mut c) = (0.0, 0.0);
            for i in 0..n_in {
                let wi = if binary_w { sign(row[i]) } else { row[i] };
                a += wi * clean[i];
                c += wi * noisy[i];
            }
            next_clean[o] = a;
            next_noisy[o] = c;
        }
        clean[..n_out].copy_from_slice(&next_clean[..n_out]);
        noisy[..n_out].copy_from_slice(&next_noisy[..n_out]);
    }
    noisy[0] - clean[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_single_neuron_matches_closed_form() {
        let rep = verify_theorem1(32, 1.0, 0.5, &[], 20_000, 3).unwrap();
        let real = rep.get(Regime::Real, 1).unwrap();
        assert!((real.measured - real.closed_form).abs() < 3.0 * real.std_err + 1e-9, "{real:?}");
    }

    #[test]
    fn one_layer_stack_is_an_equality() {
        let checks = verify_theorem2(&[16, 1], 1.0, 1.0, 200, 64, 5).unwrap();
        for c in checks {
            assert!((c.measured.mean - c.bound).abs() < 4.0 * c.measured.std_err, "{c:?}");
        }
    }
}
