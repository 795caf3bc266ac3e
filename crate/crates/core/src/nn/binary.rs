use alloc::vec;
use alloc::vec::Vec;

use crate::bitcore::{gemm_packed, im2col_packed, ConvGeom, PackedBitTensor, PackedMatrix};
use crate::tensor::RealTensor;
use crate::{Error, Result};

/// Geometry of a binary layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Linear,
    Conv {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
}

/// Binary weights `a[o] * Sign(w[o])` derived from real shadow weights.
///
/// Each output filter `o` keeps a scale `a[o] = ||w[o]||_1 / fan_in`. Any
/// mutable access to the shadow weights bumps a version counter and the
/// layer refuses to run until [`refresh`](Self::refresh) has re-derived the
/// packed signs and scales.
#[derive(Debug, Clone)]
pub struct ScaledBinaryLayer {
    shadow: Option<RealTensor>,
    packed: PackedMatrix,
    scales: Vec<f32>,
    outputs: usize,
    fan_in: usize,
    kind: BinaryKind,
    version: u64,
    refreshed: u64,
}

impl ScaledBinaryLayer {
    /// `shadow` is `[outputs x fan_in]`.
    pub fn new(shadow: RealTensor, kind: BinaryKind) -> Result<Self> {
        let (outputs, fan_in) = match shadow.shape() {
            [o, f] if *f > 0 => (*o, *f),
            s => return Err(Error::Geometry(alloc::format!("shadow weights must be [out x fan_in], got {s:?}"))),
        };
        shadow.check_finite()?;
        let mut layer = ScaledBinaryLayer {
            shadow: Some(shadow),
            packed: PackedMatrix::zeros(outputs, fan_in),
            scales: vec![0.0; outputs],
            outputs,
            fan_in,
            kind,
            version: 0,
            refreshed: u64::MAX,
        };
        layer.refresh();
        Ok(layer)
    }

    /// Inference-only layer rebuilt from an export; has no shadow weights.
    pub fn from_packed(packed: &PackedBitTensor, scales: Vec<f32>, kind: BinaryKind) -> Result<Self> {
        let packed = PackedMatrix::from_tensor(packed)?;
        if packed.rows() != scales.len() || packed.cols() == 0 {
            return Err(Error::LengthMismatch {
                left: packed.rows(),
                right: scales.len(),
            });
        }
        Ok(ScaledBinaryLayer {
            shadow: None,
            outputs: packed.rows(),
            fan_in: packed.cols(),
            packed,
            scales,
            kind,
            version: 0,
            refreshed: 0,
        })
    }

    /// Recomputes signs and per-filter scales from the shadow weights.
    pub fn refresh(&mut self) {
        let Some(shadow) = &self.shadow else { return };
        self.packed = PackedMatrix::from_signs(self.outputs, self.fan_in, shadow.values());
        for (o, row) in shadow.values().chunks(self.fan_in).enumerate() {
            let l1: f64 = row.iter().map(|w| w.abs() as f64).sum();
            self.scales[o] = (l1 / self.fan_in as f64) as f32;
        }
        self.refreshed = self.version;
    }

    pub fn is_stale(&self) -> bool {
        self.refreshed != self.version
    }

    pub fn ensure_fresh(&self) -> Result<()> {
        if self.is_stale() {
            Err(Error::StaleWeights {
                refreshed: self.refreshed,
                current: self.version,
            })
        } else {
            Ok(())
        }
    }

    pub fn shadow_weights(&self) -> Option<&RealTensor> {
        self.shadow.as_ref()
    }

    /// Mutable shadow weights; marks the binary view stale.
    pub fn shadow_weights_mut(&mut self) -> Option<&mut RealTensor> {
        self.version = self.version.wrapping_add(1);
        self.shadow.as_mut()
    }

    /// Gradient buffer of the shadow weights; does not mark the layer stale.
    pub fn shadow_grad_mut(&mut self) -> Option<&mut [f32]> {
        self.shadow.as_mut().map(|s| s.grad_mut())
    }

    /// Clamps shadow weights into `[-1, 1]`; marks the layer stale.
    pub fn clip_shadow(&mut self) {
        if let Some(s) = self.shadow_weights_mut() {
            s.values_mut().iter_mut().for_each(|w| *w = w.clamp(-1.0, 1.0));
        }
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn packed(&self) -> &PackedMatrix {
        &self.packed
    }

    pub fn packed_tensor(&self) -> PackedBitTensor {
        self.packed.to_tensor()
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn kind(&self) -> BinaryKind {
        self.kind
    }

    /// Dense `a[o] * Sign(w)` weights, `[outputs x fan_in]` row-major.
    pub fn dense_weights(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.outputs * self.fan_in);
        for o in 0..self.outputs {
            let a = self.scales[o];
            out.extend((0..self.fan_in).map(|c| if self.packed.get(o, c) { a } else { -a }));
        }
        out
    }

    /// Scaled responses for already-packed patch or sample rows; returns
    /// `[rows x outputs]` row-major.
    pub(crate) fn forward_rows(&self, rows: &PackedMatrix) -> Result<Vec<f32>> {
        self.ensure_fresh()?;
        let ints = gemm_packed(&self.packed, rows)?;
        let mut out = Vec::with_capacity(ints.values.len());
        for row in ints.values.chunks(self.outputs.max(1)) {
            out.extend(row.iter().zip(&self.scales).map(|(&d, &a)| a * d as f32));
        }
        Ok(out)
    }

    /// Applies the layer to packed binary activations.
    ///
    /// Linear layers take `[batch x fan_in]` and return `[batch x outputs]`;
    /// convolutions take `[batch x C x H x W]` and return
    /// `[batch x outputs x H' x W']`.
    pub fn forward(&self, x: &PackedBitTensor) -> Result<RealTensor> {
        self.ensure_fresh()?;
        match self.kind {
            BinaryKind::Linear => {
                let rows = PackedMatrix::from_tensor(x)?;
                if rows.cols() != self.fan_in {
                    return Err(Error::shape(&[rows.rows(), self.fan_in], x.shape()));
                }
                let out = self.forward_rows(&rows)?;
                RealTensor::new(&[rows.rows(), self.outputs], out)
            }
            BinaryKind::Conv { kernel, stride, padding } => {
                let &[n, c, h, w] = x.shape() else {
                    return Err(Error::Geometry(alloc::format!("expected N x C x H x W, got {:?}", x.shape())));
                };
                let geom = ConvGeom::exact(c, h, w, kernel, stride, padding)?;
                if geom.patch_len() != self.fan_in {
                    return Err(Error::LengthMismatch {
                        left: self.fan_in,
                        right: geom.patch_len(),
                    });
                }
                let p = geom.positions();
                let mut out = vec![0.0f32; n * self.outputs * p];
                let sample_len = c * h * w;
                for s in 0..n {
                    let bits = (0..sample_len).map(|i| x.get(s * sample_len + i));
                    let sample = PackedBitTensor::from_bools(&[c, h, w], bits)?;
                    let per_pos = self.forward_rows(&im2col_packed(&sample, &geom))?;
                    let dst = &mut out[s * self.outputs * p..(s + 1) * self.outputs * p];
                    for pos in 0..p {
                        for o in 0..self.outputs {
                            dst[o * p + pos] = per_pos[pos * self.outputs + o];
                        }
                    }
                }
                RealTensor::new(&[n, self.outputs, geom.out_height, geom.out_width], out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcore::pack;

    #[test]
    fn single_filter_example() {
        let w = RealTensor::new(&[1, 3], vec![0.5, -1.5, 1.0]).unwrap();
        let layer = ScaledBinaryLayer::new(w, BinaryKind::Linear).unwrap();
        assert!((layer.scales()[0] - 1.0).abs() < 1e-7);
        let x = pack(&RealTensor::new(&[1, 3], vec![1.0; 3]).unwrap()).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.values(), &[1.0]);
    }

    #[test]
    fn constant_weights_give_c_times_n() {
        let c = 0.25f32;
        let layer = ScaledBinaryLayer::new(RealTensor::new(&[2, 8], vec![c; 16]).unwrap(), BinaryKind::Linear).unwrap();
        let x = pack(&RealTensor::new(&[1, 8], vec![1.0; 8]).unwrap()).unwrap();
        assert_eq!(layer.forward(&x).unwrap().values(), &[c * 8.0, c * 8.0]);
    }

    #[test]
    fn stale_weights_are_refused() {
        let mut layer = ScaledBinaryLayer::new(RealTensor::new(&[1, 2], vec![1.0, -1.0]).unwrap(), BinaryKind::Linear).unwrap();
        layer.shadow_weights_mut().unwrap().values_mut()[0] = -3.0;
        let x = pack(&RealTensor::new(&[1, 2], vec![1.0, 1.0]).unwrap()).unwrap();
        assert!(matches!(layer.forward(&x), Err(Error::StaleWeights { .. })));
        layer.refresh();
        assert_eq!(layer.forward(&x).unwrap().values(), &[-4.0]);
    }

    #[test]
    fn from_packed_matches_trained_layer() {
        let w = RealTensor::from_fn(&[3, 10], |i| ((i * 17) % 11) as f32 / 5.0 - 1.0);
        let layer = ScaledBinaryLayer::new(w, BinaryKind::Linear).unwrap();
        let rebuilt = ScaledBinaryLayer::from_packed(&layer.packed_tensor(), layer.scales().to_vec(), BinaryKind::Linear).unwrap();
        let x = pack(&RealTensor::from_fn(&[4, 10], |i| ((i * 7) % 3) as f32 - 1.0)).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), rebuilt.forward(&x).unwrap());
        assert_eq!(layer.dense_weights(), rebuilt.dense_weights());
    }
}
