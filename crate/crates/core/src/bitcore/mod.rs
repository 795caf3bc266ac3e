//! Packed sign tensors and the XNOR/popcount kernels built on them.
//!
//! A bit value of 1 encodes +1 and 0 encodes -1. Element `i` lives in bit
//! `i % 64` of word `i / 64`; padding bits past the logical length are always
//! zero.

mod kernels;
mod packed;

pub use kernels::{
    binary_gemm, gemm_packed, im2col_binary_conv, im2col_packed, im2col_signs, xnor_dot, ConvGeom,
    IntTensor,
};
pub use packed::{pack, unpack, PackedBitTensor, PackedMatrix, WORD_BITS};
