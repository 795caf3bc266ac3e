use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::RealTensor;
use crate::{Error, Result};

pub const WORD_BITS: usize = 64;

const MAGIC: &[u8; 4] = b"PBT1";

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

/// Mask selecting the valid bits of the final word of an `n`-bit sequence.
#[inline]
pub(crate) fn tail_mask(bits: usize) -> u64 {
    match bits % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Sign tensor stored one bit per element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedBitTensor {
    shape: Vec<usize>,
    bit_len: usize,
    words: Vec<u64>,
}

impl PackedBitTensor {
    /// All elements -1.
    pub fn zeros(shape: &[usize]) -> Self {
        let bit_len = shape.iter().product();
        PackedBitTensor {
            shape: shape.to_vec(),
            bit_len,
            words: vec![0; words_for(bit_len)],
        }
    }

    /// Builds a tensor from raw words, rejecting non-canonical padding.
    pub fn from_words(shape: &[usize], words: Vec<u64>) -> Result<Self> {
        let t = Self::from_words_lossy(shape, words.clone())?;
        if t.words != words {
            return Err(Error::Format("padding bits are not zero".into()));
        }
        Ok(t)
    }

    /// Builds a tensor from raw words, clearing whatever sits in the padding.
    pub fn from_words_lossy(shape: &[usize], mut words: Vec<u64>) -> Result<Self> {
        let bit_len: usize = shape.iter().product();
        if words.len() != words_for(bit_len) {
            return Err(Error::LengthMismatch {
                left: words_for(bit_len),
                right: words.len(),
            });
        }
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(bit_len);
        }
        Ok(PackedBitTensor {
            shape: shape.to_vec(),
            bit_len,
            words,
        })
    }

    pub fn from_bools(shape: &[usize], bits: impl IntoIterator<Item = bool>) -> Result<Self> {
        let mut t = Self::zeros(shape);
        let mut n = 0;
        for (i, b) in bits.into_iter().enumerate() {
            if i >= t.bit_len {
                return Err(Error::LengthMismatch {
                    left: t.bit_len,
                    right: i + 1,
                });
            }
            t.set(i, b);
            n = i + 1;
        }
        if n != t.bit_len {
            return Err(Error::LengthMismatch {
                left: t.bit_len,
                right: n,
            });
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// `true` for +1.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.bit_len, "bit {i} out of range {}", self.bit_len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, positive: bool) {
        assert!(i < self.bit_len, "bit {i} out of range {}", self.bit_len);
        let mask = 1u64 << (i % WORD_BITS);
        if positive {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    /// Number of +1 elements.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.bit_len {
            return Err(Error::shape(shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// `PBT1` container: magic, rank (u32), dims (u32 each), bit length
    /// (u64), then the words. All little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.shape.len() + 8 * self.words.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.bit_len as u64).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Parses one `PBT1` record from the front of `bytes`, returning it and
    /// the number of bytes consumed.
    pub fn from_bytes_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad PBT1 magic".into()));
        }
        let rank = cur.u32()? as usize;
        if rank > 16 {
            return Err(Error::Format("PBT1 rank too large".into()));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let bit_len = cur.u64()? as usize;
        let expected = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("PBT1 dims overflow".into()))?;
        if expected != bit_len {
            return Err(Error::Format("PBT1 bit length disagrees with dims".into()));
        }
        let n_words = words_for(bit_len);
        if n_words > (bytes.len() - cur.pos) / 8 {
            return Err(Error::Format("PBT1 payload truncated".into()));
        }
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            words.push(cur.u64()?);
        }
        Ok((Self::from_words(&shape, words)?, cur.pos))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (t, used) = Self::from_bytes_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Format("trailing bytes after PBT1 record".into()));
        }
        Ok(t)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("PBT1 record truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Sign-packs a real tensor; `Sign(0) = +1`.
pub fn pack(signs: &RealTensor) -> Result<PackedBitTensor> {
    signs.check_finite()?;
    let mut t = PackedBitTensor::zeros(signs.shape());
    pack_into(signs.values(), &mut t.words);
    Ok(t)
}

pub(crate) fn pack_into(values: &[f32], words: &mut [u64]) {
    for (word, chunk) in words.iter_mut().zip(values.chunks(WORD_BITS)) {
        let mut w = 0u64;
        for (b, &v) in chunk.iter().enumerate() {
            w |= ((v >= 0.0) as u64) << b;
        }
        *word = w;
    }
}

pub fn unpack(t: &PackedBitTensor) -> RealTensor {
    RealTensor::from_fn(&t.shape, |i| if t.get(i) { 1.0 } else { -1.0 })
}

/// Bit matrix whose rows each start on a word boundary, the layout the GEMM
/// kernel consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl PackedMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = words_for(cols);
        PackedMatrix {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    /// Sign-packs each row of a row-major `rows x cols` buffer.
    pub fn from_signs(rows: usize, cols: usize, values: &[f32]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let mut m = Self::zeros(rows, cols);
        if cols == 0 {
            return m;
        }
        for (r, row) in values.chunks(cols).enumerate() {
            let wpr = m.words_per_row;
            pack_into(row, &mut m.words[r * wpr..(r + 1) * wpr]);
        }
        m
    }

    /// Re-lays a rank-2 packed tensor with word-aligned rows.
    pub fn from_tensor(t: &PackedBitTensor) -> Result<Self> {
        let (rows, cols) = match t.shape() {
            [r, c] => (*r, *c),
            s => return Err(Error::Geometry(alloc::format!("expected a matrix, got shape {s:?}"))),
        };
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if t.get(r * cols + c) {
                    m.set(r, c, true);
                }
            }
        }
        Ok(m)
    }

    pub fn to_tensor(&self) -> PackedBitTensor {
        let mut t = PackedBitTensor::zeros(&[self.rows, self.cols]);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(r * self.cols + c, true);
                }
            }
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.words[r * self.words_per_row + c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, positive: bool) {
        let i = r * self.words_per_row + c / WORD_BITS;
        let mask = 1u64 << (c % WORD_BITS);
        if positive {
            self.words[i] |= mask;
        } else {
            self.words[i] &= !mask;
        }
    }

    /// Size of the packed payload in bytes.
    pub fn byte_len(&self) -> usize {
        self.words.len() * 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_places_index_i_at_bit_i() {
        let t = pack(&RealTensor::vector(&[1.0, -1.0, -1.0, 1.0])).unwrap();
        assert_eq!(t.words(), &[0b1001]);
        assert_eq!(unpack(&t).values(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn zeros_pack_to_ones_with_clean_padding() {
        let t = pack(&RealTensor::zeros(&[70])).unwrap();
        assert_eq!(t.words().len(), 2);
        assert_eq!(t.words()[0], u64::MAX);
        assert_eq!(t.words()[1], 0b11_1111);
        assert_eq!(t.count_ones(), 70);
    }

    #[test]
    fn pack_rejects_non_finite_with_index() {
        let x = RealTensor::vector(&[0.0, 1.0, f32::NAN]);
        assert_eq!(pack(&x), Err(Error::NonFinite { index: 2 }));
    }

    #[test]
    fn empty_roundtrip() {
        let t = pack(&RealTensor::zeros(&[0])).unwrap();
        assert!(t.words().is_empty());
        assert!(unpack(&t).is_empty());
    }

    #[test]
    fn from_words_rejects_dirty_padding() {
        assert!(PackedBitTensor::from_words(&[3], vec![0b1000]).is_err());
        let t = PackedBitTensor::from_words_lossy(&[3], vec![0b1101]).unwrap();
        assert_eq!(t.words(), &[0b101]);
    }

    #[test]
    fn pbt1_layout_is_fixed() {
        let t = pack(&RealTensor::new(&[2, 2], alloc::vec![1.0, -1.0, -1.0, 1.0]).unwrap()).unwrap();
        let bytes = t.to_bytes();
        let mut expected = b"PBT1".to_vec();
        expected.extend_from_slice(&[2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        expected.extend_from_slice(&[4, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend_from_slice(&[0b1001, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes, expected);
        assert_eq!(PackedBitTensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn pbt1_truncations_error() {
        let t = pack(&RealTensor::from_fn(&[3, 50], |i| (i % 3) as f32 - 1.0)).unwrap();
        let bytes = t.to_bytes();
        for n in 0..bytes.len() {
            assert!(PackedBitTensor::from_bytes(&bytes[..n]).is_err(), "prefix {n}");
        }
    }

    #[test]
    fn matrix_relayout_roundtrips() {
        let t = pack(&RealTensor::from_fn(&[3, 70], |i| ((i * 7) % 5) as f32 - 2.0)).unwrap();
        let m = PackedMatrix::from_tensor(&t).unwrap();
        assert_eq!(m.to_tensor(), t);
        let direct = PackedMatrix::from_signs(3, 70, unpack(&t).values());
        assert_eq!(direct, m);
    }
}
