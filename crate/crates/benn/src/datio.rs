//! IDX and CIFAR-10 binary loaders.

use std::path::Path;

use benn_core::data::Dataset;
use benn_core::RealTensor;

use crate::error::{read, BennError, Result};

const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

fn format_err(msg: impl Into<String>) -> BennError {
    BennError::Format(msg.into())
}

/// Maps a byte `p` to `p * 2 / 255 - 1`, so 0 -> -1 and 255 -> 1.
pub fn normalize_pixel(p: u8) -> f32 {
    f32::from(p) * 2.0 / 255.0 - 1.0
}

/// Parsed IDX header and payload offset.
struct IdxHeader {
    dims: Vec<usize>,
    offset: usize,
}

fn idx_header(bytes: &[u8]) -> Result<IdxHeader> {
    if bytes.len() < 4 {
        return Err(format_err("IDX file shorter than its magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err("IDX magic must start with two zero bytes"));
    }
    if bytes[2] != 0x08 {
        return Err(format_err(format!("unsupported IDX element type 0x{:02x} (expected unsigned byte)", bytes[2])));
    }
    let rank = usize::from(bytes[3]);
    if rank == 0 {
        return Err(format_err("IDX file declares zero dimensions"));
    }
    let offset = 4 + 4 * rank;
    if bytes.len() < offset {
        return Err(format_err("IDX header truncated"));
    }
    let dims: Vec<usize> = bytes[4..offset]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    match expected {
        Some(n) if bytes.len() - offset == n => Ok(IdxHeader { dims, offset }),
        Some(n) => Err(format_err(format!(
            "IDX payload has {} bytes, header declares {n}",
            bytes.len() - offset
        ))),
        None => Err(format_err("IDX dimensions overflow")),
    }
}

/// Images `[N, 1, H, W]` (or `[N, D]` for rank-2 files) normalized to `[-1, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<RealTensor> {
    let h = idx_header(bytes)?;
    let shape = match h.dims.as_slice() {
        [n, d] => vec![*n, *d],
        [n, rows, cols] => vec![*n, 1, *rows, *cols],
        [n, c, rows, cols] => vec![*n, *c, *rows, *cols],
        _ => return Err(format_err("IDX image files must have rank 2, 3 or 4")),
    };
    let values = bytes[h.offset..].iter().map(|&p| normalize_pixel(p)).collect();
    Ok(RealTensor::new(&shape, values)?)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let h = idx_header(bytes)?;
    if h.dims.len() != 1 {
        return Err(format_err("IDX label files must have rank 1"));
    }
    Ok(bytes[h.offset..].iter().map(|&b| usize::from(b)).collect())
}

/// Pairs an IDX image file with its label file; classes default to
/// `max(label) + 1` but never fewer than `min_classes`.
pub fn load_idx(images: &Path, labels: &Path, min_classes: usize) -> Result<Dataset> {
    let x = parse_idx_images(&read(images)?)?;
    let y = parse_idx_labels(&read(labels)?)?;
    if x.rows() != y.len() {
        return Err(format_err(format!("{} images but {} labels", x.rows(), y.len())));
    }
    let classes = y.iter().max().map_or(0, |&m| m + 1).max(min_classes);
    Ok(Dataset::new(x, y, classes)?)
}

/// CIFAR-10 binary batch: records of one label byte then 3072 pixels in
/// R, G, B plane order.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(format_err(format!(
            "CIFAR-10 file size {} is not a positive multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        labels.push(usize::from(rec[0]));
        values.extend(rec[1..].iter().map(|&p| normalize_pixel(p)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
        return Err(format_err(format!("CIFAR-10 label {bad} out of range")));
    }
    Ok(Dataset::new(RealTensor::new(&[n, 3, 32, 32], values)?, labels, 10)?)
}

pub fn load_cifar10(path: &Path) -> Result<Dataset> {
    parse_cifar10(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 8, dims.len() as u8];
        dims.iter().for_each(|d| b.extend(d.to_be_bytes()));
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn pixel_map_endpoints() {
        assert_eq!(normalize_pixel(0), -1.0);
        assert_eq!(normalize_pixel(255), 1.0);
        assert!((1..=255u8).all(|p| normalize_pixel(p) > normalize_pixel(p - 1)));
    }

    #[test]
    fn idx_images_and_labels() {
        let x = parse_idx_images(&idx(&[2, 2, 2], &[0, 255, 0, 255, 255, 0, 255, 0])).unwrap();
        assert_eq!(x.shape(), [2, 1, 2, 2]);
        assert_eq!(x.row(0), [-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(parse_idx_labels(&idx(&[3], &[7, 0, 9])).unwrap(), [7, 0, 9]);
    }

    #[test]
    fn idx_rejects_bad_headers() {
        assert!(parse_idx_images(&[0, 0, 9, 1, 0, 0, 0, 0]).is_err());
        assert!(parse_idx_images(&[1, 0, 8, 1]).is_err());
        let good = idx(&[2, 2, 2], &[0; 8]);
        for cut in 0..good.len() {
            assert!(parse_idx_images(&good[..cut]).is_err());
        }
    }

    #[test]
    fn cifar_single_record() {
        let mut rec = vec![9u8];
        rec.extend(std::iter::repeat_n(255u8, 3072));
        let d = parse_cifar10(&rec).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), [9]);
        assert_eq!(d.image_shape(), [3, 32, 32]);
        assert!(parse_cifar10(&rec[..3000]).is_err());
    }
}
