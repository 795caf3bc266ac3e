//! In-memory labelled datasets and synthetic toy generators.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::{self, Rng};
use crate::tensor::RealTensor;
use crate::{Error, Result};

/// Training-time image augmentation for `[N, C, H, W]` batches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Augment {
    /// Mirror each image left-right with probability 1/2.
    pub flip: bool,
    /// Shift each image by up to this many pixels in each direction, filling
    /// with zeros (a padded random crop).
    pub crop_pad: usize,
}

impl Augment {
    pub fn is_active(&self) -> bool {
        self.flip || self.crop_pad > 0
    }
}

pub fn augment_images(x: &mut RealTensor, aug: &Augment, rng: &mut Rng) -> Result<()> {
    let (c, h, w) = match x.shape() {
        [_, c, h, w] => (*c, *h, *w),
        s => return Err(Error::Geometry(format!("augmentation needs N x C x H x W images, got {s:?}"))),
    };
    let pad = aug.crop_pad as i64;
    let mut src = alloc::vec![0f32; c * h * w];
    for i in 0..x.rows() {
        let flip = aug.flip && rng.random::<bool>();
        let (dy, dx) = if pad > 0 { (rng.random_range(-pad..=pad), rng.random_range(-pad..=pad)) } else { (0, 0) };
        let row = x.row_mut(i);
        src.copy_from_slice(row);
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let sy = y as i64 + dy;
                    let sx0 = xx as i64 + dx;
                    let sx = if flip { w as i64 - 1 - sx0 } else { sx0 };
                    let inside = sy >= 0 && sy < h as i64 && sx0 >= 0 && sx0 < w as i64;
                    row[(ch * h + y) * w + xx] = if inside { src[(ch * h + sy as usize) * w + sx as usize] } else { 0.0 };
                }
            }
        }
    }
    Ok(())
}

/// Images with integer labels. `images` has shape `[N, ...image_shape]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: RealTensor,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(images: RealTensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.shape().len() < 2 {
            return Err(Error::invalid("dataset images need a leading example axis"));
        }
        if images.rows() != labels.len() {
            return Err(Error::LengthMismatch { left: images.rows(), right: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {classes} classes")));
        }
        images.check_finite()?;
        Ok(Dataset { images, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn images(&self) -> &RealTensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Images and labels at `indices`, in that order (repeats allowed).
    pub fn batch(&self, indices: &[usize]) -> (RealTensor, Vec<usize>) {
        (self.images.select_rows(indices), indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (images, labels) = self.batch(indices);
        Dataset { images, labels, classes: self.classes }
    }

    /// First `n` examples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Per-class example counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.classes];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    /// One Gaussian cluster per class around a random center.
    Blobs,
    /// Concentric rings crossed with quadrants; label = (ring + quadrant) mod C.
    XorRings,
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub kind: ToyKind,
    pub examples: usize,
    pub classes: usize,
    pub shape: Vec<usize>,
    pub noise: f32,
    pub seed: u64,
}

impl ToySpec {
    pub fn blobs(examples: usize, classes: usize, shape: &[usize], noise: f32, seed: u64) -> Self {
        ToySpec { kind: ToyKind::Blobs, examples, classes, shape: shape.to_vec(), noise, seed }
    }
}

const CENTER_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;

/// Generates a balanced, shuffled toy dataset with values clipped to `[-1, 1]`.
pub fn make_toy(spec: &ToySpec) -> Result<Dataset> {
    let dim: usize = spec.shape.iter().product();
    if spec.classes < 2 || dim == 0 || spec.examples == 0 {
        return Err(Error::invalid("toy data needs at least two classes, one feature, one example"));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::invalid("toy noise must be finite and non-negative"));
    }
    if spec.kind == ToyKind::XorRings && dim < 2 {
        return Err(Error::invalid("ring data needs at least two features"));
    }
    let mut centers_rng = rng::stream(spec.seed, CENTER_STREAM);
    let centers: Vec<f32> = (0..spec.classes * dim).map(|_| centers_rng.random_range(-1.0f32..1.0)).collect();
    let mut r = rng::stream(spec.seed, SAMPLE_STREAM);
    let mut labels: Vec<usize> = (0..spec.examples).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut r);
    let mut values = Vec::with_capacity(spec.examples * dim);
    for &label in &labels {
        match spec.kind {
            ToyKind::Blobs => {
                let c = &centers[label * dim..(label + 1) * dim];
                values.extend(c.iter().map(|&m| clip(m + spec.noise * rng::normal_f32(&mut r))));
            }
            ToyKind::XorRings => values.extend(ring_point(label, spec.classes, dim, spec.noise, &mut r)),
        }
    }
    let mut shape = alloc::vec![spec.examples];
    shape.extend_from_slice(&spec.shape);
    Dataset::new(RealTensor::new(&shape, values)?, labels, spec.classes)
}

fn clip(v: f32) -> f32 {
    v.clamp(-1.0, 1.0)
}

fn ring_point(label: usize, classes: usize, dim: usize, noise: f32, r: &mut Rng) -> Vec<f32> {
    // rejection-sample a (ring, quadrant) cell whose label matches
    let (x, y) = loop {
        let ring = r.random_range(0..2usize);
        let quadrant = r.random_range(0..4usize);
        if (ring + quadrant) % classes != label {
            continue;
        }
        let radius = 0.3 + 0.5 * ring as f32 + r.random_range(0.0f32..0.2);
        let angle = (quadrant as f32 + r.random_range(0.05f32..0.95)) * core::f32::consts::FRAC_PI_2;
        break (radius * libm::cosf(angle), radius * libm::sinf(angle));
    };
    (0..dim)
        .map(|j| clip(if j % 2 == 0 { x } else { y } + noise * rng::normal_f32(r)))
        .collect()
}
