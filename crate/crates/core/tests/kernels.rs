use benn_core::bitcore::{binary_gemm, im2col_binary_conv, pack, unpack, xnor_dot, PackedBitTensor};
use benn_core::RealTensor;
use proptest::prelude::*;

fn signs(bits: &[bool]) -> Vec<f32> {
    bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
}

fn packed(shape: &[usize], bits: &[bool]) -> PackedBitTensor {
    pack(&RealTensor::new(shape, signs(bits)).unwrap()).unwrap()
}

fn dense_dot(a: &[f32], b: &[f32]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x * y) as i64).sum()
}

#[test]
fn exhaustive_small_dots() {
    let empty = PackedBitTensor::zeros(&[0]);
    assert_eq!(xnor_dot(&empty, &empty).unwrap(), 0);
    for n in 1..=12usize {
        for a in 0u64..(1 << n) {
            for b in 0u64..(1 << n) {
                let pa = PackedBitTensor::from_words(&[n], vec![a]).unwrap();
                let pb = PackedBitTensor::from_words(&[n], vec![b]).unwrap();
                let agree = (!(a ^ b) & ((1u64 << n) - 1)).count_ones() as i64;
                assert_eq!(xnor_dot(&pa, &pb).unwrap(), 2 * agree - n as i64);
            }
        }
    }
}

#[test]
fn padding_bits_never_count() {
    let a = PackedBitTensor::from_words_lossy(&[3], vec![u64::MAX]).unwrap();
    let b = PackedBitTensor::from_words_lossy(&[3], vec![0b111]).unwrap();
    assert_eq!(xnor_dot(&a, &b).unwrap(), 3);
    assert!(PackedBitTensor::from_words(&[3], vec![u64::MAX]).is_err());
}

proptest! {
    #[test]
    fn pack_round_trip(bits in prop::collection::vec(any::<bool>(), 0..300)) {
        let n = bits.len();
        let t = packed(&[n], &bits);
        let back = unpack(&t);
        prop_assert_eq!(back.values(), &signs(&bits)[..]);
        prop_assert_eq!(PackedBitTensor::from_bytes(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn dot_matches_dense(pairs in prop::collection::vec(any::<(bool, bool)>(), 1..400)) {
        let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let n = a.len();
        prop_assert_eq!(
            xnor_dot(&packed(&[n], &a), &packed(&[n], &b)).unwrap(),
            dense_dot(&signs(&a), &signs(&b))
        );
    }

    #[test]
    fn gemm_matches_dense(o in 1usize..6, b in 1usize..6, n in 1usize..150, seed in any::<u64>()) {
        let bit = |i: usize, salt: u64| (seed.rotate_left((i % 64) as u32) ^ (i as u64 * 0x9e37_79b9) ^ salt).count_ones() % 2 == 0;
        let w: Vec<bool> = (0..o * n).map(|i| bit(i, 1)).collect();
        let x: Vec<bool> = (0..b * n).map(|i| bit(i, 2)).collect();
        let out = binary_gemm(&packed(&[o, n], &w), &packed(&[b, n], &x)).unwrap();
        let (ws, xs) = (signs(&w), signs(&x));
        for r in 0..b {
            for c in 0..o {
                prop_assert_eq!(out.get2(r, c) as i64, dense_dot(&xs[r * n..(r + 1) * n], &ws[c * n..(c + 1) * n]));
            }
        }
    }

    #[test]
    fn conv_matches_dense(
        c in 1usize..3, h in 1usize..7, w in 1usize..7, k in 1usize..4, f in 1usize..3,
        pad in 0usize..2, stride in 1usize..3,
        bits in prop::collection::vec(any::<bool>(), 256),
    ) {
        prop_assume!(k <= h + 2 * pad && k <= w + 2 * pad);
        prop_assume!((h + 2 * pad - k) % stride == 0 && (w + 2 * pad - k) % stride == 0);
        let x: Vec<bool> = (0..c * h * w).map(|i| bits[i % 256]).collect();
        let kern: Vec<bool> = (0..f * c * k * k).map(|i| bits[(7 * i + 3) % 256]).collect();
        let out = im2col_binary_conv(&packed(&[c, h, w], &x), &packed(&[f, c, k, k], &kern), stride, pad).unwrap();
        let (xs, ks) = (signs(&x), signs(&kern));
        let (oh, ow) = ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1);
        prop_assert_eq!(&out.shape, &vec![f, oh, ow]);
        for o in 0..f {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0i64;
                    for ch in 0..c {
                        for di in 0..k {
                            for dj in 0..k {
                                let (y, z) = ((i * stride + di) as isize - pad as isize, (j * stride + dj) as isize - pad as isize);
                                let v = if y < 0 || z < 0 || y >= h as isize || z >= w as isize {
                                    -1.0
                                } else {
                                    xs[(ch * h + y as usize) * w + z as usize]
                                };
                                acc += (v * ks[((o * c + ch) * k + di) * k + dj]) as i64;
                            }
                        }
                    }
                    prop_assert_eq!(out.values[(o * oh + i) * ow + j] as i64, acc);
                }
            }
        }
    }
}
