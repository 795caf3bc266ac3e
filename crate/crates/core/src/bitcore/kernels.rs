use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::packed::{tail_mask, PackedBitTensor, PackedMatrix};
use crate::{Error, Result};

/// Dense `i32` result of a binary kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntTensor {
    pub shape: Vec<usize>,
    pub values: Vec<i32>,
}

impl IntTensor {
    pub fn get2(&self, r: usize, c: usize) -> i32 {
        self.values[r * self.shape[1] + c]
    }
}

/// `2 * popcount(XNOR(a, b)) - n` over the first `n` bits of two word slices.
#[inline]
fn signed_dot(a: &[u64], b: &[u64], n: usize) -> i32 {
    let mut agree = 0u32;
    let last = a.len().saturating_sub(1);
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let mut same = !(x ^ y);
        if i == last {
            same &= tail_mask(n);
        }
        agree += same.count_ones();
    }
    2 * agree as i32 - n as i32
}

/// Sum of elementwise products of two equal-length sign vectors.
pub fn xnor_dot(a: &PackedBitTensor, b: &PackedBitTensor) -> Result<i64> {
    if a.bit_len() != b.bit_len() {
        return Err(Error::LengthMismatch {
            left: a.bit_len(),
            right: b.bit_len(),
        });
    }
    Ok(signed_dot(a.words(), b.words(), a.bit_len()) as i64)
}

/// `out[b][o] = <x row b, w row o>` over the ±1 encoding.
pub fn gemm_packed(w: &PackedMatrix, x: &PackedMatrix) -> Result<IntTensor> {
    if w.cols() != x.cols() {
        return Err(Error::LengthMismatch {
            left: w.cols(),
            right: x.cols(),
        });
    }
    let n = w.cols();
    let mut values = vec![0i32; x.rows() * w.rows()];
    if n == 0 {
        return Ok(IntTensor {
            shape: vec![x.rows(), w.rows()],
            values,
        });
    }
    for (b, out_row) in values.chunks_mut(w.rows()).enumerate() {
        let xr = x.row_words(b);
        for (o, out) in out_row.iter_mut().enumerate() {
            *out = signed_dot(w.row_words(o), xr, n);
        }
    }
    Ok(IntTensor {
        shape: vec![x.rows(), w.rows()],
        values,
    })
}

/// Binary matrix product of weights `[out x in]` with inputs `[batch x in]`,
/// giving `[batch x out]`.
pub fn binary_gemm(w: &PackedBitTensor, x: &PackedBitTensor) -> Result<IntTensor> {
    let wm = PackedMatrix::from_tensor(w)?;
    let xm = PackedMatrix::from_tensor(x)?;
    gemm_packed(&wm, &xm)
}

/// Sliding-window geometry over a `channels x height x width` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    fn build(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, exact: bool) -> Result<Self> {
        if stride == 0 || k == 0 {
            return Err(Error::Geometry("kernel and stride must be positive".into()));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        if k > ph || k > pw {
            return Err(Error::Geometry(format!(
                "kernel {k} larger than padded input {ph}x{pw}"
            )));
        }
        if exact && ((ph - k) % stride != 0 || (pw - k) % stride != 0) {
            return Err(Error::Geometry(format!(
                "output size ({ph}-{k})/{stride}+1 is not integral"
            )));
        }
        Ok(ConvGeom {
            channels: c,
            height: h,
            width: w,
            kernel: k,
            stride,
            padding: pad,
            out_height: (ph - k) / stride + 1,
            out_width: (pw - k) / stride + 1,
        })
    }

    /// Geometry that requires the window to tile the padded input exactly.
    pub fn exact(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        Self::build(c, h, w, k, stride, pad, true)
    }

    /// Geometry that drops incomplete trailing windows.
    pub fn floor(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        Self::build(c, h, w, k, stride, pad, false)
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Calls `f(patch_col, input_index)` for every in-bounds tap of the patch
    /// at output position `pos`; padded taps are skipped.
    #[inline]
    pub(crate) fn for_each_tap(&self, pos: usize, mut f: impl FnMut(usize, usize)) {
        let (oy, ox) = (pos / self.out_width, pos % self.out_width);
        let k = self.kernel;
        for c in 0..self.channels {
            for ky in 0..k {
                let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                if iy < 0 || iy >= self.height as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                    if ix < 0 || ix >= self.width as isize {
                        continue;
                    }
                    let col = (c * k + ky) * k + kx;
                    f(col, (c * self.height + iy as usize) * self.width + ix as usize);
                }
            }
        }
    }
}

/// Packed patch rows `[positions x C*k*k]` of a packed `C x H x W` input.
/// Padding taps are -1 (bit 0).
pub fn im2col_packed(input: &PackedBitTensor, geom: &ConvGeom) -> PackedMatrix {
    let mut m = PackedMatrix::zeros(geom.positions(), geom.patch_len());
    for pos in 0..geom.positions() {
        geom.for_each_tap(pos, |col, idx| {
            if input.get(idx) {
                m.set(pos, col, true);
            }
        });
    }
    m
}

/// Same as [`im2col_packed`] but reads signs straight from real values.
pub fn im2col_signs(input: &[f32], geom: &ConvGeom) -> PackedMatrix {
    debug_assert_eq!(input.len(), geom.input_len());
    let mut m = PackedMatrix::zeros(geom.positions(), geom.patch_len());
    for pos in 0..geom.positions() {
        geom.for_each_tap(pos, |col, idx| {
            if input[idx] >= 0.0 {
                m.set(pos, col, true);
            }
        });
    }
    m
}

/// Binary cross-correlation of a `C x H x W` input with `F x C x k x k`
/// kernels, giving `F x H' x W'` integer responses.
pub fn im2col_binary_conv(
    input: &PackedBitTensor,
    kernels: &PackedBitTensor,
    stride: usize,
    padding: usize,
) -> Result<IntTensor> {
    let (c, h, w) = match input.shape() {
        [c, h, w] => (*c, *h, *w),
        s => return Err(Error::Geometry(format!("input must be C x H x W, got {s:?}"))),
    };
    let (f, kc, kh, kw) = match kernels.shape() {
        [f, kc, kh, kw] => (*f, *kc, *kh, *kw),
        s => return Err(Error::Geometry(format!("kernels must be F x C x k x k, got {s:?}"))),
    };
    if kc != c || kh != kw {
        return Err(Error::shape(&[f, c, kh, kh], kernels.shape()));
    }
    let geom = ConvGeom::exact(c, h, w, kh, stride, padding)?;
    let patches = im2col_packed(input, &geom);
    let kmat = PackedMatrix::from_tensor(&kernels.clone().reshape(&[f, geom.patch_len()])?)?;
    let per_pos = gemm_packed(&kmat, &patches)?;
    // [positions x F] -> [F x H' x W']
    let p = geom.positions();
    let mut values = vec![0i32; f * p];
    for pos in 0..p {
        for o in 0..f {
            values[o * p + pos] = per_pos.values[pos * f + o];
        }
    }
    Ok(IntTensor {
        shape: vec![f, geom.out_height, geom.out_width],
        values,
    })
}
