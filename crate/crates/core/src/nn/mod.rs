//! Binarized and quantized network layers, configuration, and training.

mod binary;
mod config;
mod layers;
mod network;
mod ops;
mod optim;
mod train;

pub use binary::{BinaryKind, ScaledBinaryLayer};
pub use config::{LayerSpec, NetworkConfig, Precision, Profile, ALEXNET, NIN_CIFAR, RESNET18};
pub use layers::Mode;
pub use network::{ExportEntry, NamedArray, Network, WeightInit};
pub use ops::{
    argmax, argmax_rows, binarize_forward, quantize_k_bit, sign, softmax_rows, ste_backward,
};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{
    accuracy, fraction_correct, predict, predict_proba, softmax_cross_entropy, EpochStats, TrainConfig, Trainer,
};
