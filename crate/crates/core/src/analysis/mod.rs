//! Robustness, stability and variance analyses of binary networks.

mod coefficient;
mod robustness;
mod stability;
mod stats;
mod theorem;

pub use coefficient::{b_table, compute_b, compute_b_monte_carlo, BRow};
pub use robustness::{robustness_random, robustness_trained, Classifier, OutputKind, PerturbationSpec, Target};
pub use stability::{stability_track, StabilityReport, STABILITY_WINDOW};
pub use stats::{canonical_sum, sample_std, Estimate, Moments};
pub use theorem::{verify_theorem1, verify_theorem2, BoundCheck, Regime, RegimeVariance, VarianceReport};
