//! Layer implementations with cached forward state for backpropagation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::binary::{BinaryKind, ScaledBinaryLayer};
use super::config::{LayerSpec, Precision};
use super::ops::{quantize_scalar, sign, ste_mask_in_place};
use crate::bitcore::{im2col_signs, ConvGeom, PackedMatrix};
use crate::math;
use crate::rng::Rng;
use crate::tensor::RealTensor;
use crate::{Error, Result};
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub(crate) enum WeightStore {
    Binary(ScaledBinaryLayer),
    Real(RealTensor),
}

#[derive(Debug, Clone)]
pub(crate) struct Weighted {
    pub(crate) geom: Option<ConvGeom>,
    pub(crate) outputs: usize,
    pub(crate) fan_in: usize,
    pub(crate) in_len: usize,
    pub(crate) weight_prec: Precision,
    pub(crate) act_prec: Precision,
    pub(crate) store: WeightStore,
    pub(crate) bias: Option<RealTensor>,
    cache: Option<RealTensor>,
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm {
    pub(crate) features: usize,
    pub(crate) spatial: usize,
    pub(crate) eps: f32,
    pub(crate) momentum: f32,
    pub(crate) gamma: RealTensor,
    pub(crate) beta: RealTensor,
    pub(crate) running_mean: Vec<f32>,
    pub(crate) running_var: Vec<f32>,
    cache: Option<(Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Pool {
    max: bool,
    geom: ConvGeom,
    cache: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Weighted(Weighted),
    BatchNorm(BatchNorm),
    Relu(Option<RealTensor>),
    HardTanh(Option<RealTensor>),
    BinAct(Option<RealTensor>),
    Pool(Pool),
    Dropout { p: f32, mask: Option<Vec<f32>> },
}

/// Source of initial weight values: `(fan_in, count) -> values`.
pub(crate) type Init<'a> = &'a mut dyn FnMut(usize, usize) -> Vec<f32>;

fn im2col_f32(sample: &[f32], geom: &ConvGeom, pad: f32) -> Vec<f32> {
    let patch = geom.patch_len();
    let mut cols = vec![pad; geom.positions() * patch];
    for pos in 0..geom.positions() {
        let row = &mut cols[pos * patch..(pos + 1) * patch];
        geom.for_each_tap(pos, |c, idx| row[c] = sample[idx]);
    }
    cols
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Weighted {
    fn build(spec: &LayerSpec, in_shape: &[usize], init: Init<'_>) -> Result<(Self, Vec<usize>)> {
        let in_len: usize = in_shape.iter().product();
        let (geom, outputs, fan_in, weight_prec, act_prec, out_shape, kind) = match *spec {
            LayerSpec::Fc { width, weight, act } => {
                (None, width, in_len, weight, act, vec![width], BinaryKind::Linear)
            }
            LayerSpec::Conv { depth, kernel, stride, padding, weight, act } => {
                let &[c, h, w] = in_shape else {
                    return Err(Error::Geometry(format!("conv needs C x H x W input, got {in_shape:?}")));
                };
                let g = ConvGeom::floor(c, h, w, kernel, stride, padding)?;
                let out = vec![depth, g.out_height, g.out_width];
                (Some(g), depth, g.patch_len(), weight, act, out, BinaryKind::Conv { kernel, stride, padding })
            }
            _ => unreachable!("not a weighted layer"),
        };
        if outputs == 0 || fan_in == 0 {
            return Err(Error::Geometry("weighted layer with zero width".into()));
        }
        let w = RealTensor::new(&[outputs, fan_in], init(fan_in, outputs * fan_in))?;
        let (store, bias) = match weight_prec {
            Precision::Binary => (WeightStore::Binary(ScaledBinaryLayer::new(w, kind)?), None),
            _ => (WeightStore::Real(w), Some(RealTensor::zeros(&[outputs]))),
        };
        Ok((
            Weighted { geom, outputs, fan_in, in_len, weight_prec, act_prec, store, bias, cache: None },
            out_shape,
        ))
    }

    pub(crate) fn effective_weights(&self) -> Vec<f32> {
        match (&self.store, self.weight_prec) {
            (WeightStore::Binary(l), _) => l.dense_weights(),
            (WeightStore::Real(w), Precision::Quant(k)) => {
                let mut out = Vec::with_capacity(w.len());
                for row in w.values().chunks(self.fan_in) {
                    let m = row.iter().fold(0.0f32, |m, v| m.max(v.abs()));
                    if m == 0.0 {
                        out.extend(core::iter::repeat_n(0.0, row.len()));
                    } else {
                        out.extend(row.iter().map(|v| m * quantize_scalar(v / m, k)));
                    }
                }
                out
            }
            (WeightStore::Real(w), _) => w.values().to_vec(),
        }
    }

    fn effective_input(&self, x: &[f32]) -> Vec<f32> {
        match self.act_prec {
            Precision::Binary => x.iter().map(|&v| sign(v)).collect(),
            Precision::Quant(k) => x.iter().map(|&v| quantize_scalar(v, k)).collect(),
            Precision::Full => x.to_vec(),
        }
    }

    fn pad_value(&self) -> f32 {
        if self.act_prec == Precision::Binary {
            -1.0
        } else {
            0.0
        }
    }

    fn out_len(&self) -> usize {
        self.outputs * self.geom.map_or(1, |g| g.positions())
    }

    fn apply(&self, x: &RealTensor) -> Result<Vec<f32>> {
        let n = x.rows();
        let positions = self.geom.map_or(1, |g| g.positions());
        let mut out = vec![0.0f32; n * self.out_len()];
        if let (WeightStore::Binary(layer), Precision::Binary) = (&self.store, self.act_prec) {
            match &self.geom {
                None => {
                    let rows = PackedMatrix::from_signs(n, self.fan_in, x.values());
                    out = layer.forward_rows(&rows)?;
                }
                Some(g) => {
                    for s in 0..n {
                        let per_pos = layer.forward_rows(&im2col_signs(x.row(s), g))?;
                        let dst = &mut out[s * self.out_len()..(s + 1) * self.out_len()];
                        for pos in 0..positions {
                            for o in 0..self.outputs {
                                dst[o * positions + pos] = per_pos[pos * self.outputs + o];
                            }
                        }
                    }
                }
            }
            return Ok(out);
        }
        let w = self.effective_weights();
        let xe = self.effective_input(x.values());
        let bias = self.bias.as_ref().map(|b| b.values());
        for s in 0..n {
            let sample = &xe[s * self.in_len..(s + 1) * self.in_len];
            let dst = &mut out[s * self.out_len()..(s + 1) * self.out_len()];
            match &self.geom {
                None => {
                    for (o, d) in dst.iter_mut().enumerate() {
                        *d = dot(&w[o * self.fan_in..(o + 1) * self.fan_in], sample);
                    }
                }
                Some(g) => {
                    let cols = im2col_f32(sample, g, self.pad_value());
                    for o in 0..self.outputs {
                        let wo = &w[o * self.fan_in..(o + 1) * self.fan_in];
                        for pos in 0..positions {
                            dst[o * positions + pos] = dot(wo, &cols[pos * self.fan_in..(pos + 1) * self.fan_in]);
                        }
                    }
                }
            }
            if let Some(b) = bias {
                for o in 0..self.outputs {
                    for v in &mut dst[o * positions..(o + 1) * positions] {
                        *v += b[o];
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&mut self, dy: &RealTensor) -> Result<RealTensor> {
        let x = self.cache.take().ok_or_else(|| Error::invalid("backward without forward"))?;
        let n = x.rows();
        let positions = self.geom.map_or(1, |g| g.positions());
        let w = self.effective_weights();
        let xe = self.effective_input(x.values());
        let mut dw = vec![0.0f32; self.outputs * self.fan_in];
        let mut db = vec![0.0f32; self.outputs];
        let mut dx = vec![0.0f32; n * self.in_len];
        for s in 0..n {
            let sample = &xe[s * self.in_len..(s + 1) * self.in_len];
            let g_out = dy.row(s);
            let dxs = &mut dx[s * self.in_len..(s + 1) * self.in_len];
            match &self.geom {
                None => {
                    for o in 0..self.outputs {
                        let g = g_out[o];
                        if g == 0.0 {
                            continue;
                        }
                        db[o] += g;
                        axpy(g, sample, &mut dw[o * self.fan_in..(o + 1) * self.fan_in]);
                        axpy(g, &w[o * self.fan_in..(o + 1) * self.fan_in], dxs);
                    }
                }
                Some(geom) => {
                    let cols = im2col_f32(sample, geom, self.pad_value());
                    let mut dcols = vec![0.0f32; cols.len()];
                    for o in 0..self.outputs {
                        let wo = &w[o * self.fan_in..(o + 1) * self.fan_in];
                        for pos in 0..positions {
                            let g = g_out[o * positions + pos];
                            if g == 0.0 {
                                continue;
                            }
                            db[o] += g;
                            let range = pos * self.fan_in..(pos + 1) * self.fan_in;
                            axpy(g, &cols[range.clone()], &mut dw[o * self.fan_in..(o + 1) * self.fan_in]);
                            axpy(g, wo, &mut dcols[range]);
                        }
                    }
                    for pos in 0..positions {
                        let row = &dcols[pos * self.fan_in..(pos + 1) * self.fan_in];
                        geom.for_each_tap(pos, |c, idx| dxs[idx] += row[c]);
                    }
                }
            }
        }
        match &mut self.store {
            WeightStore::Binary(layer) => {
                let shadow: Vec<f32> = layer.shadow_weights().map(|s| s.values().to_vec()).unwrap_or_default();
                let scales = layer.scales().to_vec();
                let f = self.fan_in as f32;
                let grad = layer
                    .shadow_grad_mut()
                    .ok_or_else(|| Error::invalid("cannot train an inference-only binary layer"))?;
                for o in 0..self.outputs {
                    let r = o * self.fan_in..(o + 1) * self.fan_in;
                    let (ws, gs) = (&shadow[r.clone()], &dw[r.clone()]);
                    // w_b = a * sign(w) with a = |w|_1 / f: the scale path carries
                    // sign(w_i) / f, the sign path is straight-through on |w| <= 1.
                    let through_scale: f32 = ws.iter().zip(gs).map(|(&wi, &gi)| gi * sign(wi)).sum::<f32>() / f;
                    for ((acc, &wi), &gi) in grad[r].iter_mut().zip(ws).zip(gs) {
                        let ste = if wi.abs() <= 1.0 { gi * scales[o] } else { 0.0 };
                        *acc += through_scale * sign(wi) + ste;
                    }
                }
            }
            WeightStore::Real(wt) => {
                axpy(1.0, &dw, wt.grad_mut());
            }
        }
        if let Some(b) = &mut self.bias {
            axpy(1.0, &db, b.grad_mut());
        }
        if self.act_prec != Precision::Full {
            ste_mask_in_place(&mut dx, x.values());
        }
        RealTensor::new(x.shape(), dx)
    }
}

impl BatchNorm {
    fn build(eps: f32, momentum: f32, in_shape: &[usize]) -> Self {
        let features = in_shape[0];
        let spatial = in_shape[1..].iter().product();
        BatchNorm {
            features,
            spatial,
            eps,
            momentum,
            gamma: RealTensor::from_fn(&[features], |_| 1.0),
            beta: RealTensor::zeros(&[features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            cache: None,
        }
    }

    fn stats(&self, x: &RealTensor, mode: Mode) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let (n, f, s) = (x.rows(), self.features, self.spatial);
        match mode {
            Mode::Eval => {
                let inv = self.running_var.iter().map(|v| 1.0 / math::sqrtf(v + self.eps)).collect();
                (self.running_mean.clone(), self.running_var.clone(), inv)
            }
            Mode::Train => {
                let count = (n * s) as f64;
                let mut mean = vec![0.0f32; f];
                let mut var = vec![0.0f32; f];
                for c in 0..f {
                    let mut sum = 0.0f64;
                    for b in 0..n {
                        let base = (b * f + c) * s;
                        sum += x.values()[base..base + s].iter().map(|&v| v as f64).sum::<f64>();
                    }
                    let mu = sum / count;
                    let mut sq = 0.0f64;
                    for b in 0..n {
                        let base = (b * f + c) * s;
                        sq += x.values()[base..base + s].iter().map(|&v| (v as f64 - mu) * (v as f64 - mu)).sum::<f64>();
                    }
                    mean[c] = mu as f32;
                    var[c] = (sq / count) as f32;
                }
                let inv = var.iter().map(|v| 1.0 / math::sqrtf(v + self.eps)).collect();
                (mean, var, inv)
            }
        }
    }

    fn forward(&mut self, x: &RealTensor, mode: Mode, record: bool) -> Result<RealTensor> {
        let (n, f, s) = (x.rows(), self.features, self.spatial);
        let (mean, var, inv) = self.stats(x, mode);
        let mut xhat = vec![0.0f32; x.len()];
        let mut out = vec![0.0f32; x.len()];
        for b in 0..n {
            for c in 0..f {
                let base = (b * f + c) * s;
                for i in base..base + s {
                    xhat[i] = (x.values()[i] - mean[c]) * inv[c];
                    out[i] = self.gamma.values()[c] * xhat[i] + self.beta.values()[c];
                }
            }
        }
        if mode == Mode::Train {
            let count = (n * s) as f32;
            let m = self.momentum;
            for c in 0..f {
                let unbiased = if count > 1.0 { var[c] * count / (count - 1.0) } else { var[c] };
                self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean[c];
                self.running_var[c] = (1.0 - m) * self.running_var[c] + m * unbiased;
            }
        }
        if record {
            self.cache = Some((xhat, inv));
        }
        RealTensor::new(x.shape(), out)
    }

    fn infer(&self, x: &RealTensor) -> Result<RealTensor> {
        let (n, f, s) = (x.rows(), self.features, self.spatial);
        let (mean, _, inv) = self.stats(x, Mode::Eval);
        let mut out = x.values().to_vec();
        for b in 0..n {
            for c in 0..f {
                let base = (b * f + c) * s;
                for v in &mut out[base..base + s] {
                    *v = self.gamma.values()[c] * ((*v - mean[c]) * inv[c]) + self.beta.values()[c];
                }
            }
        }
        RealTensor::new(x.shape(), out)
    }

    fn backward(&mut self, dy: &RealTensor, mode: Mode) -> Result<RealTensor> {
        let (xhat, inv) = self.cache.take().ok_or_else(|| Error::invalid("backward without forward"))?;
        let (n, f, s) = (dy.rows(), self.features, self.spatial);
        let count = (n * s) as f32;
        let mut dx = vec![0.0f32; dy.len()];
        let mut dgamma = vec![0.0f32; f];
        let mut dbeta = vec![0.0f32; f];
        for c in 0..f {
            let g = self.gamma.values()[c];
            let (mut sum_d, mut sum_dx) = (0.0f64, 0.0f64);
            for b in 0..n {
                let base = (b * f + c) * s;
                for i in base..base + s {
                    let d = dy.values()[i];
                    dbeta[c] += d;
                    dgamma[c] += d * xhat[i];
                    sum_d += (d * g) as f64;
                    sum_dx += (d * g * xhat[i]) as f64;
                }
            }
            let (mean_d, mean_dx) = ((sum_d / count as f64) as f32, (sum_dx / count as f64) as f32);
            for b in 0..n {
                let base = (b * f + c) * s;
                for i in base..base + s {
                    let dxhat = dy.values()[i] * g;
                    dx[i] = match mode {
                        Mode::Train => inv[c] * (dxhat - mean_d - xhat[i] * mean_dx),
                        Mode::Eval => inv[c] * dxhat,
                    };
                }
            }
        }
        axpy(1.0, &dgamma, self.gamma.grad_mut());
        axpy(1.0, &dbeta, self.beta.grad_mut());
        RealTensor::new(dy.shape(), dx)
    }
}

impl Pool {
    fn build(max: bool, kernel: usize, stride: usize, padding: usize, in_shape: &[usize]) -> Result<(Self, Vec<usize>)> {
        let &[c, h, w] = in_shape else {
            return Err(Error::Geometry(format!("pooling needs C x H x W input, got {in_shape:?}")));
        };
        let geom = if kernel == 0 {
            if h != w {
                return Err(Error::Geometry("global pooling needs a square map".into()));
            }
            ConvGeom::floor(c, h, w, h, 1, 0)?
        } else {
            ConvGeom::floor(c, h, w, kernel, stride, padding)?
        };
        Ok((Pool { max, geom, cache: None }, vec![c, geom.out_height, geom.out_width]))
    }

    /// Input indices of the in-bounds taps of window `pos` in channel `c`.
    fn taps(&self, c: usize, pos: usize, out: &mut Vec<usize>) {
        out.clear();
        let g = &self.geom;
        let (oy, ox) = (pos / g.out_width, pos % g.out_width);
        for ky in 0..g.kernel {
            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
            if iy < 0 || iy >= g.height as isize {
                continue;
            }
            for kx in 0..g.kernel {
                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                if ix >= 0 && ix < g.width as isize {
                    out.push((c * g.height + iy as usize) * g.width + ix as usize);
                }
            }
        }
    }

    fn apply(&self, x: &RealTensor) -> (Vec<f32>, Vec<usize>) {
        let g = &self.geom;
        let (n, p) = (x.rows(), g.positions());
        let mut out = vec![0.0f32; n * g.channels * p];
        let mut arg = if self.max { vec![0usize; out.len()] } else { Vec::new() };
        let mut taps = Vec::new();
        for s in 0..n {
            let sample = x.row(s);
            for c in 0..g.channels {
                for pos in 0..p {
                    self.taps(c, pos, &mut taps);
                    let o = (s * g.channels + c) * p + pos;
                    if self.max {
                        let best = taps.iter().copied().fold(taps[0], |b, i| if sample[i] > sample[b] { i } else { b });
                        out[o] = sample[best];
                        arg[o] = best;
                    } else {
                        out[o] = taps.iter().map(|&i| sample[i]).sum::<f32>() / taps.len() as f32;
                    }
                }
            }
        }
        (out, arg)
    }

    fn backward(&mut self, dy: &RealTensor) -> Result<RealTensor> {
        let g = self.geom;
        let (n, p) = (dy.rows(), g.positions());
        let in_len = g.input_len();
        let mut dx = vec![0.0f32; n * in_len];
        let arg = self.cache.take();
        let mut taps = Vec::new();
        for s in 0..n {
            for c in 0..g.channels {
                for pos in 0..p {
                    let o = (s * g.channels + c) * p + pos;
                    let d = dy.values()[o];
                    match &arg {
                        Some(a) if self.max => dx[s * in_len + a[o]] += d,
                        _ => {
                            self.taps(c, pos, &mut taps);
                            let share = d / taps.len() as f32;
                            for &i in &taps {
                                dx[s * in_len + i] += share;
                            }
                        }
                    }
                }
            }
        }
        RealTensor::new(&[n, g.channels, g.height, g.width], dx)
    }
}

impl Layer {
    /// Builds a layer for per-sample input shape `in_shape`; returns it with
    /// its per-sample output shape.
    pub(crate) fn build(spec: &LayerSpec, in_shape: &[usize], init: Init<'_>) -> Result<(Layer, Vec<usize>)> {
        let same = in_shape.to_vec();
        Ok(match *spec {
            LayerSpec::Conv { .. } | LayerSpec::Fc { .. } => {
                let (w, out) = Weighted::build(spec, in_shape, init)?;
                (Layer::Weighted(w), out)
            }
            LayerSpec::BatchNorm { eps, momentum } => (Layer::BatchNorm(BatchNorm::build(eps, momentum, in_shape)), same),
            LayerSpec::Relu => (Layer::Relu(None), same),
            LayerSpec::HardTanh => (Layer::HardTanh(None), same),
            LayerSpec::BinAct => (Layer::BinAct(None), same),
            LayerSpec::MaxPool { kernel, stride, padding } => {
                let (p, out) = Pool::build(true, kernel, stride, padding, in_shape)?;
                (Layer::Pool(p), out)
            }
            LayerSpec::AvgPool { kernel, stride, padding } => {
                let (p, out) = Pool::build(false, kernel, stride, padding, in_shape)?;
                (Layer::Pool(p), out)
            }
            LayerSpec::Dropout { p } => (Layer::Dropout { p, mask: None }, same),
        })
    }

    /// Stateless evaluation-mode forward.
    pub(crate) fn infer(&self, x: &RealTensor, out_shape: &[usize]) -> Result<RealTensor> {
        let mut shape = vec![x.rows()];
        shape.extend_from_slice(out_shape);
        match self {
            Layer::Weighted(w) => RealTensor::new(&shape, w.apply(x)?),
            Layer::BatchNorm(bn) => bn.infer(x),
            Layer::Relu(_) => Ok(map(x, |v| v.max(0.0))),
            Layer::HardTanh(_) => Ok(map(x, |v| v.clamp(-1.0, 1.0))),
            Layer::BinAct(_) => Ok(map(x, sign)),
            Layer::Pool(p) => RealTensor::new(&shape, p.apply(x).0),
            Layer::Dropout { .. } => Ok(x.clone()),
        }
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    pub(crate) fn forward(&mut self, x: &RealTensor, out_shape: &[usize], mode: Mode, rng: &mut Rng) -> Result<RealTensor> {
        let mut shape = vec![x.rows()];
        shape.extend_from_slice(out_shape);
        match self {
            Layer::Weighted(w) => {
                let out = w.apply(x)?;
                w.cache = Some(x.clone());
                RealTensor::new(&shape, out)
            }
            Layer::BatchNorm(bn) => bn.forward(x, mode, true),
            Layer::Relu(c) => {
                *c = Some(x.clone());
                Ok(map(x, |v| v.max(0.0)))
            }
            Layer::HardTanh(c) => {
                *c = Some(x.clone());
                Ok(map(x, |v| v.clamp(-1.0, 1.0)))
            }
            Layer::BinAct(c) => {
                *c = Some(x.clone());
                Ok(map(x, sign))
            }
            Layer::Pool(p) => {
                let (out, arg) = p.apply(x);
                p.cache = Some(arg);
                RealTensor::new(&shape, out)
            }
            Layer::Dropout { p, mask } => {
                if mode == Mode::Eval || *p == 0.0 {
                    *mask = None;
                    return Ok(x.clone());
                }
                let keep = 1.0 - *p;
                let m: Vec<f32> = (0..x.len())
                    .map(|_| if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let out = RealTensor::from_fn(x.shape(), |i| x.values()[i] * m[i]);
                *mask = Some(m);
                Ok(out)
            }
        }
    }

    pub(crate) fn backward(&mut self, dy: &RealTensor, mode: Mode) -> Result<RealTensor> {
        let missing = || Error::invalid("backward without forward");
        match self {
            Layer::Weighted(w) => w.backward(dy),
            Layer::BatchNorm(bn) => bn.backward(dy, mode),
            Layer::Relu(c) => {
                let x = c.take().ok_or_else(missing)?;
                Ok(RealTensor::from_fn(x.shape(), |i| if x.values()[i] > 0.0 { dy.values()[i] } else { 0.0 }))
            }
            Layer::HardTanh(c) | Layer::BinAct(c) => {
                let x = c.take().ok_or_else(missing)?;
                let mut g = dy.clone().reshape(x.shape())?;
                ste_mask_in_place(g.values_mut(), x.values());
                Ok(g)
            }
            Layer::Pool(p) => p.backward(dy),
            Layer::Dropout { mask, .. } => match mask.take() {
                Some(m) => Ok(RealTensor::from_fn(dy.shape(), |i| dy.values()[i] * m[i])),
                None => Ok(dy.clone()),
            },
        }
    }

    /// Trainable tensors. Touching binary shadow weights marks them stale.
    pub(crate) fn params_mut(&mut self) -> Vec<&mut RealTensor> {
        match self {
            Layer::Weighted(w) => {
                let mut v: Vec<&mut RealTensor> = Vec::new();
                match &mut w.store {
                    WeightStore::Binary(l) => v.extend(l.shadow_weights_mut()),
                    WeightStore::Real(t) => v.push(t),
                }
                v.extend(w.bias.as_mut());
                v
            }
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            _ => Vec::new(),
        }
    }

    pub(crate) fn binary_mut(&mut self) -> Option<&mut ScaledBinaryLayer> {
        match self {
            Layer::Weighted(Weighted { store: WeightStore::Binary(l), .. }) => Some(l),
            _ => None,
        }
    }
}

fn map(x: &RealTensor, f: impl Fn(f32) -> f32) -> RealTensor {
    RealTensor::from_fn(x.shape(), |i| f(x.values()[i]))
}
