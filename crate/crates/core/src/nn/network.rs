use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::binary::ScaledBinaryLayer;
use super::config::NetworkConfig;
use super::layers::{Layer, Mode, WeightStore};
use super::ops::softmax_rows;
use crate::bitcore::PackedBitTensor;
use crate::rng::{self, Rng};
use crate::tensor::RealTensor;
use crate::{math, Error, Result};
use rand::Rng as _;

const INIT_STREAM: u64 = 0x1417;
const DROPOUT_STREAM: u64 = 0xd809;

/// How fresh weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    KaimingUniform,
    /// `N(0, std^2)` regardless of fan-in.
    Normal { std: f32 },
}

/// Flat named parameter or statistics buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// One entry of a packed inference export.
#[derive(Debug, Clone, PartialEq)]
pub enum ExportEntry {
    Float(NamedArray),
    Packed {
        name: String,
        bits: PackedBitTensor,
        scales: Vec<f32>,
    },
}

/// Sequential network instantiated from a [`NetworkConfig`].
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
    /// `shapes[i]` is the per-sample input shape of layer `i`; the last entry
    /// is the output shape.
    shapes: Vec<Vec<usize>>,
    last_mode: Mode,
    rng: Rng,
}

impl Network {
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, WeightInit::KaimingUniform, seed)
    }

    pub fn with_init(config: &NetworkConfig, init: WeightInit, seed: u64) -> Result<Self> {
        let mut init_rng = rng::stream(seed, INIT_STREAM);
        let mut draw = |fan_in: usize, count: usize| -> Vec<f32> {
            match init {
                WeightInit::KaimingUniform => {
                    let bound = math::sqrtf(6.0 / fan_in as f32);
                    (0..count).map(|_| init_rng.random_range(-bound..bound)).collect()
                }
                WeightInit::Normal { std } => (0..count).map(|_| std * rng::normal_f32(&mut init_rng)).collect(),
            }
        };
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut shapes = vec![config.input.clone()];
        for (i, spec) in config.layers.iter().enumerate() {
            let (layer, out) = Layer::build(spec, shapes.last().unwrap(), &mut draw).map_err(|e| e.in_layer(i))?;
            layers.push(layer);
            shapes.push(out);
        }
        let out = shapes.last().unwrap();
        if out.as_slice() != [config.classes] {
            return Err(Error::Config {
                line: 0,
                message: format!("network output shape {out:?} does not match {} classes", config.classes),
            });
        }
        Ok(Network {
            config: config.clone(),
            layers,
            shapes,
            last_mode: Mode::Eval,
            rng: rng::stream(seed, DROPOUT_STREAM),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Per-sample input shape of layer `i` (`i == num_layers()` gives the output).
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    fn check_input(&self, x: &RealTensor) -> Result<RealTensor> {
        let want: usize = self.config.input.iter().product();
        if x.shape().len() < 2 || x.row_len() != want {
            let mut expected = vec![x.rows()];
            expected.extend_from_slice(&self.config.input);
            return Err(Error::shape(&expected, x.shape()).in_layer(0));
        }
        let mut shape = vec![x.rows()];
        shape.extend_from_slice(&self.config.input);
        x.clone().reshape(&shape)
    }

    /// Evaluation-mode logits; does not touch any cached state.
    pub fn infer(&self, x: &RealTensor) -> Result<RealTensor> {
        let mut h = self.check_input(x)?;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.infer(&h, &self.shapes[i + 1]).map_err(|e| e.in_layer(i))?;
        }
        Ok(h)
    }

    /// Evaluation-mode class probabilities, one row per example.
    pub fn predict_proba(&self, x: &RealTensor) -> Result<RealTensor> {
        Ok(softmax_rows(&self.infer(x)?))
    }

    /// Logits with per-layer state recorded for [`backward`](Self::backward).
    pub fn forward(&mut self, x: &RealTensor, mode: Mode) -> Result<RealTensor> {
        let mut h = self.check_input(x)?;
        self.last_mode = mode;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            h = layer.forward(&h, &self.shapes[i + 1], mode, &mut self.rng).map_err(|e| e.in_layer(i))?;
            if cfg!(debug_assertions) {
                h.check_finite().map_err(|e| e.in_layer(i))?;
            }
        }
        Ok(h)
    }

    /// Backpropagates `dlogits`, accumulating parameter gradients; returns the
    /// gradient with respect to the network input.
    pub fn backward(&mut self, dlogits: &RealTensor) -> Result<RealTensor> {
        Ok(self.backward_trace(dlogits)?.swap_remove(0))
    }

    /// Like [`backward`](Self::backward) but returns the gradient with
    /// respect to the input of every layer (`result[i]` for layer `i`).
    pub fn backward_trace(&mut self, dlogits: &RealTensor) -> Result<Vec<RealTensor>> {
        let mode = self.last_mode;
        let mut grads = vec![RealTensor::zeros(&[0]); self.layers.len()];
        let mut g = dlogits.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let mut shape = vec![g.rows()];
            shape.extend_from_slice(&self.shapes[i + 1]);
            g = layer.backward(&g.reshape(&shape)?, mode).map_err(|e| e.in_layer(i))?;
            grads[i] = g.clone();
        }
        Ok(grads)
    }

    /// All trainable tensors in a fixed order. Binary layers are left stale;
    /// call [`refresh_binary`](Self::refresh_binary) after mutating.
    pub fn params_mut(&mut self) -> Vec<&mut RealTensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
        self.refresh_binary(false);
    }

    /// Re-derives packed signs and scales, optionally clamping shadow weights
    /// into `[-1, 1]` first.
    pub fn refresh_binary(&mut self, clip: bool) {
        for l in self.layers.iter_mut().filter_map(|l| l.binary_mut()) {
            if clip {
                l.clip_shadow();
            }
            l.refresh();
        }
    }

    pub fn binary_layers(&self) -> impl Iterator<Item = (usize, &ScaledBinaryLayer)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            Layer::Weighted(w) => match &w.store {
                WeightStore::Binary(b) => Some((i, b)),
                _ => None,
            },
            _ => None,
        })
    }

    /// Adds `N(0, sigma^2)` noise to every weight (not biases or batchnorm).
    pub fn perturb_weights(&mut self, sigma: f32, rng: &mut Rng) {
        for layer in &mut self.layers {
            if let Layer::Weighted(w) = layer {
                let t = match &mut w.store {
                    WeightStore::Binary(l) => l.shadow_weights_mut(),
                    WeightStore::Real(t) => Some(t),
                };
                if let Some(t) = t {
                    t.values_mut().iter_mut().for_each(|v| *v += sigma * rng::normal_f32(rng));
                }
            }
        }
        self.refresh_binary(false);
    }

    /// Named shadow weights, biases, batchnorm parameters and statistics, and
    /// binary scales, in layer order.
    pub fn state(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        let arr = |name: String, shape: &[usize], values: &[f32]| NamedArray {
            name,
            shape: shape.to_vec(),
            values: values.to_vec(),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Weighted(w) => {
                    match &w.store {
                        WeightStore::Binary(b) => {
                            if let Some(s) = b.shadow_weights() {
                                out.push(arr(format!("{i}.weight"), s.shape(), s.values()));
                            }
                            out.push(arr(format!("{i}.scale"), &[b.outputs()], b.scales()));
                        }
                        WeightStore::Real(t) => out.push(arr(format!("{i}.weight"), t.shape(), t.values())),
                    }
                    if let Some(b) = &w.bias {
                        out.push(arr(format!("{i}.bias"), b.shape(), b.values()));
                    }
                }
                Layer::BatchNorm(bn) => {
                    out.push(arr(format!("{i}.gamma"), bn.gamma.shape(), bn.gamma.values()));
                    out.push(arr(format!("{i}.beta"), bn.beta.shape(), bn.beta.values()));
                    out.push(arr(format!("{i}.running_mean"), &[bn.features], &bn.running_mean));
                    out.push(arr(format!("{i}.running_var"), &[bn.features], &bn.running_var));
                }
                _ => {}
            }
        }
        out
    }

    /// Restores a [`state`](Self::state) snapshot produced for the same config.
    pub fn load_state(&mut self, state: &[NamedArray]) -> Result<()> {
        let expected = self.state();
        if expected.len() != state.len() {
            return Err(Error::Format(format!(
                "state has {} arrays, network expects {}",
                state.len(),
                expected.len()
            )));
        }
        for (want, got) in expected.iter().zip(state) {
            if want.name != got.name || want.shape != got.shape || got.values.len() != want.values.len() {
                return Err(Error::Format(format!("state entry `{}` does not match `{}`", got.name, want.name)));
            }
        }
        let mut it = state.iter();
        for layer in &mut self.layers {
            match layer {
                Layer::Weighted(w) => {
                    match &mut w.store {
                        WeightStore::Binary(b) => {
                            if let Some(s) = b.shadow_weights_mut() {
                                s.values_mut().copy_from_slice(&it.next().unwrap().values);
                            }
                            b.refresh();
                            let stored = &it.next().unwrap().values;
                            for (&a, &s) in b.scales().iter().zip(stored) {
                                if (a - s).abs() > 1e-6 * a.abs().max(1e-12) {
                                    return Err(Error::Format("stored binary scales disagree with shadow weights".into()));
                                }
                            }
                        }
                        WeightStore::Real(t) => t.values_mut().copy_from_slice(&it.next().unwrap().values),
                    }
                    if let Some(b) = &mut w.bias {
                        b.values_mut().copy_from_slice(&it.next().unwrap().values);
                    }
                }
                Layer::BatchNorm(bn) => {
                    bn.gamma.values_mut().copy_from_slice(&it.next().unwrap().values);
                    bn.beta.values_mut().copy_from_slice(&it.next().unwrap().values);
                    bn.running_mean.copy_from_slice(&it.next().unwrap().values);
                    bn.running_var.copy_from_slice(&it.next().unwrap().values);
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Inference payload: packed signs and scales for binary layers, float
    /// arrays for everything else. Shadow weights are dropped.
    pub fn export_packed(&self) -> Vec<ExportEntry> {
        let mut floats = self.state().into_iter();
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Weighted(w) = layer {
                if let WeightStore::Binary(b) = &w.store {
                    if b.shadow_weights().is_some() {
                        floats.next();
                    }
                    floats.next();
                    out.push(ExportEntry::Packed {
                        name: format!("{i}.binary"),
                        bits: b.packed_tensor(),
                        scales: b.scales().to_vec(),
                    });
                }
            }
            out.extend(floats.by_ref().take(float_arrays(layer)).map(ExportEntry::Float));
        }
        out
    }

    /// Inference-only network rebuilt from [`export_packed`](Self::export_packed).
    pub fn from_export(config: &NetworkConfig, entries: &[ExportEntry]) -> Result<Self> {
        let mut net = Network::new(config, 0)?;
        let mut floats = Vec::new();
        let mut it = entries.iter();
        for layer in &mut net.layers {
            if let Layer::Weighted(w) = layer {
                if let WeightStore::Binary(b) = &w.store {
                    match it.next() {
                        Some(ExportEntry::Packed { bits, scales, .. }) => {
                            let rebuilt = ScaledBinaryLayer::from_packed(bits, scales.clone(), b.kind())?;
                            if rebuilt.outputs() != b.outputs() || rebuilt.fan_in() != b.fan_in() {
                                return Err(Error::Format("packed layer shape mismatch".into()));
                            }
                            w.store = WeightStore::Binary(rebuilt);
                            continue;
                        }
                        _ => return Err(Error::Format("expected a packed binary layer".into())),
                    }
                }
            }
            for _ in 0..float_arrays(layer) {
                match it.next() {
                    Some(ExportEntry::Float(a)) => floats.push(a.clone()),
                    _ => return Err(Error::Format("expected a float array".into())),
                }
            }
        }
        if it.next().is_some() {
            return Err(Error::Format("trailing export entries".into()));
        }
        let mut fi = floats.into_iter();
        for layer in &mut net.layers {
            match layer {
                Layer::Weighted(w) => {
                    if let WeightStore::Real(t) = &mut w.store {
                        copy_checked(t.values_mut(), &fi.next().unwrap())?;
                    }
                    if let Some(b) = &mut w.bias {
                        copy_checked(b.values_mut(), &fi.next().unwrap())?;
                    }
                }
                Layer::BatchNorm(bn) => {
                    copy_checked(bn.gamma.values_mut(), &fi.next().unwrap())?;
                    copy_checked(bn.beta.values_mut(), &fi.next().unwrap())?;
                    copy_checked(&mut bn.running_mean, &fi.next().unwrap())?;
                    copy_checked(&mut bn.running_var, &fi.next().unwrap())?;
                }
                _ => {}
            }
        }
        Ok(net)
    }
}

fn float_arrays(layer: &Layer) -> usize {
    match layer {
        Layer::Weighted(w) => usize::from(matches!(w.store, WeightStore::Real(_))) + usize::from(w.bias.is_some()),
        Layer::BatchNorm(_) => 4,
        _ => 0,
    }
}

fn copy_checked(dst: &mut [f32], src: &NamedArray) -> Result<()> {
    if dst.len() != src.values.len() {
        return Err(Error::Format(format!("array `{}` has wrong length", src.name)));
    }
    dst.copy_from_slice(&src.values);
    Ok(())
}
