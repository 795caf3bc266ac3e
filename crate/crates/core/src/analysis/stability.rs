use alloc::vec::Vec;

use super::stats::sample_std;
use crate::{Error, Result};

/// Default number of trailing evaluation points.
pub const STABILITY_WINDOW: usize = 20;

/// Oscillation of a per-epoch accuracy series over its trailing window.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub window: Vec<f64>,
    /// Sample standard deviation of `window`.
    pub std: f64,
}

pub fn stability_track(accuracies: &[f64], window: usize) -> Result<StabilityReport> {
    if window < 2 || accuracies.len() < window {
        return Err(Error::InvalidArgument(alloc::format!(
            "need at least {window} evaluation points (and a window of two or more), got {}",
            accuracies.len()
        )));
    }
    let tail = accuracies[accuracies.len() - window..].to_vec();
    Ok(StabilityReport { std: sample_std(&tail), window: tail })
}
