//! File formats, dataset loaders, experiment protocols and command-line
//! plumbing around [`benn_core`].

pub mod container;
pub mod datio;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod source;
pub mod store;

pub use error::{BennError, Result};
