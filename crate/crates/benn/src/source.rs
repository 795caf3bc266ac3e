//! Dataset and network-config selection from command-line strings.

use std::path::{Path, PathBuf};

use benn_core::data::{make_toy, Dataset, ToyKind, ToySpec};
use benn_core::nn::{NetworkConfig, ALEXNET, NIN_CIFAR, RESNET18};

use crate::datio::{load_cifar10, load_idx};
use crate::error::{read, BennError, Result};
use crate::experiments::{TOY_BNN, TOY_MLP, TOY_MLP_WIDE};

/// Where examples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Toy(ToySpec),
    Idx { images: PathBuf, labels: PathBuf },
    Cifar(PathBuf),
}

impl DataSource {
    /// `toy`, `idx:IMAGES,LABELS` or `cifar:PATH`; `toy` takes its
    /// parameters from `toy`.
    pub fn parse(text: &str, toy: &ToySpec) -> Result<Self> {
        if text == "toy" {
            return Ok(DataSource::Toy(toy.clone()));
        }
        if let Some(rest) = text.strip_prefix("idx:") {
            let (images, labels) = rest
                .split_once(',')
                .ok_or_else(|| BennError::Usage("idx data needs `idx:IMAGES,LABELS`".into()))?;
            return Ok(DataSource::Idx { images: images.into(), labels: labels.into() });
        }
        if let Some(path) = text.strip_prefix("cifar:") {
            return Ok(DataSource::Cifar(path.into()));
        }
        Err(BennError::Usage(format!("unknown data source `{text}` (expected toy, idx:..., cifar:...)")))
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Toy(spec) => Ok(make_toy(spec)?),
            DataSource::Idx { images, labels } => load_idx(images, labels, 2),
            DataSource::Cifar(path) => load_cifar10(path),
        }
    }
}

/// Toy generator name as accepted on the command line.
pub fn parse_toy_kind(s: &str) -> Result<ToyKind> {
    match s {
        "blobs" => Ok(ToyKind::Blobs),
        "rings" => Ok(ToyKind::XorRings),
        other => Err(BennError::Usage(format!("unknown toy generator `{other}`"))),
    }
}

/// `AxBxC` dimension list.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| d.trim().parse::<usize>().ok().filter(|&d| d > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| BennError::Usage(format!("bad dimensions `{s}`")))
}

/// Built-in architecture names usable as `builtin:NAME`.
pub const BUILTIN_CONFIGS: &[(&str, &str)] = &[
    ("toy-mlp", TOY_MLP),
    ("toy-bnn", TOY_BNN),
    ("toy-mlp-wide", TOY_MLP_WIDE),
    ("nin-cifar", NIN_CIFAR),
    ("alexnet", ALEXNET),
    ("resnet18", RESNET18),
];

/// Reads a config from a file or `builtin:NAME`.
pub fn load_config(spec: &str) -> Result<NetworkConfig> {
    let text = match spec.strip_prefix("builtin:") {
        Some(name) => BUILTIN_CONFIGS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| {
                let names: Vec<&str> = BUILTIN_CONFIGS.iter().map(|(n, _)| *n).collect();
                BennError::Usage(format!("unknown builtin config `{name}` (choices: {})", names.join(", ")))
            })?,
        None => String::from_utf8(read(Path::new(spec))?)
            .map_err(|_| BennError::Format(format!("{spec}: config is not UTF-8")))?,
    };
    Ok(NetworkConfig::parse(&text)?)
}
