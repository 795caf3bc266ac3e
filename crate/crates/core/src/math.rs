//! Portable scalar math backed by `libm`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[inline]
pub fn expf(x: f32) -> f32 {
    libm::expf(x)
}

#[inline]
pub fn lnf(x: f32) -> f32 {
    libm::logf(x)
}

#[inline]
pub fn sqrtf(x: f32) -> f32 {
    libm::sqrtf(x)
}

/// Round half away from zero.
#[inline]
pub fn roundf(x: f32) -> f32 {
    libm::roundf(x)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64, sigma: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI / sigma * exp(-0.5 * (x / sigma) * (x / sigma))
}

/// `Pr(Z > t)` for `Z ~ N(0, sigma^2)`.
#[inline]
pub fn normal_upper_tail(t: f64, sigma: f64) -> f64 {
    0.5 * erfc(t / (sigma * core::f64::consts::SQRT_2))
}
