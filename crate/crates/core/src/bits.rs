//! Bit strings and GF(2) polynomial arithmetic on packed words.

use bitvec::prelude::*;

pub type Bits = BitVec<u64, Lsb0>;
pub type BitSlice64 = BitSlice<u64, Lsb0>;

pub fn bits_from_bools(v: &[bool]) -> Bits {
    v.iter().copied().collect()
}

/// Parses a string of `0`/`1` characters; other characters are skipped.
pub fn bits_from_str(s: &str) -> Bits {
    s.chars()
        .filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

pub fn bits_to_string(b: &BitSlice64) -> String {
    b.iter().map(|x| if *x { '1' } else { '0' }).collect()
}

/// Packs bits LSB-first into bytes.
pub fn pack_bytes(b: &BitSlice64) -> Vec<u8> {
    let mut out = vec![0u8; b.len().div_ceil(8)];
    for i in b.iter_ones() {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn unpack_bytes(bytes: &[u8], len_bits: usize) -> Bits {
    let mut out = Bits::with_capacity(len_bits);
    for i in 0..len_bits {
        out.push(bytes[i / 8] >> (i % 8) & 1 == 1);
    }
    out
}

/// Parity of a bit slice.
#[inline]
pub fn parity(b: &BitSlice64) -> bool {
    b.count_ones() % 2 == 1
}

/// Copies a bit slice into whole words, zero padded.
pub fn to_words(b: &BitSlice64) -> Vec<u64> {
    let mut out = vec![0u64; b.len().div_ceil(64)];
    for (w, chunk) in out.iter_mut().zip(b.chunks(64)) {
        *w = chunk.load_le::<u64>();
    }
    out
}

/// Carry-less 64x64 -> 128 bit product.
#[inline]
fn clmul_soft(a: u64, b: u64) -> (u64, u64) {
    // 4-bit windowed multiply
    let mut table = [0u128; 16];
    let a = a as u128;
    for i in 1..16usize {
        table[i] = if i & 1 == 1 { table[i - 1] ^ a } else { table[i >> 1] << 1 };
    }
    let mut r: u128 = 0;
    let mut i = 60;
    loop {
        r = (r << 4) ^ table[((b >> i) & 0xf) as usize];
        if i == 0 {
            break;
        }
        i -= 4;
    }
    (r as u64, (r >> 64) as u64)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq")]
unsafe fn clmul_hw(a: u64, b: u64) -> (u64, u64) {
    use std::arch::x86_64::*;
    let x = _mm_set_epi64x(0, a as i64);
    let y = _mm_set_epi64x(0, b as i64);
    let r = _mm_clmulepi64_si128(x, y, 0);
    (_mm_cvtsi128_si64(r) as u64, _mm_extract_epi64(r, 1) as u64)
}

#[derive(Clone, Copy)]
struct Clmul(fn(u64, u64) -> (u64, u64));

fn pick_clmul() -> Clmul {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("pclmulqdq") && std::is_x86_feature_detected!("sse4.1") {
            fn hw(a: u64, b: u64) -> (u64, u64) {
                // SAFETY: feature presence checked before this function is selected.
                unsafe { clmul_hw(a, b) }
            }
            return Clmul(hw);
        }
    }
    Clmul(clmul_soft)
}

const KARATSUBA_CUTOFF: usize = 24;

fn mul_school(a: &[u64], b: &[u64], out: &mut [u64], m: Clmul) {
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let (lo, hi) = (m.0)(x, y);
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

/// `out ^= a * b` for equal-length operands; `out.len() >= 2 * a.len()`.
fn mul_karatsuba(a: &[u64], b: &[u64], out: &mut [u64], m: Clmul) {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    if n <= KARATSUBA_CUTOFF {
        mul_school(a, b, out, m);
        return;
    }
    let h = n / 2;
    let (a0, a1) = a.split_at(h);
    let (b0, b1) = b.split_at(h);
    let hi_len = n - h;
    // low and high products
    let mut p0 = vec![0u64; 2 * h];
    mul_karatsuba(a0, b0, &mut p0, m);
    let mut p2 = vec![0u64; 2 * hi_len];
    mul_karatsuba(a1, b1, &mut p2, m);
    // middle: (a0 + a1)(b0 + b1), padded to hi_len
    let mut sa = a1.to_vec();
    let mut sb = b1.to_vec();
    for i in 0..h {
        sa[i] ^= a0[i];
        sb[i] ^= b0[i];
    }
    let mut p1 = vec![0u64; 2 * hi_len];
    mul_karatsuba(&sa, &sb, &mut p1, m);
    for i in 0..p0.len() {
        p1[i] ^= p0[i];
    }
    for i in 0..p2.len() {
        p1[i] ^= p2[i];
    }
    for (i, w) in p0.iter().enumerate() {
        out[i] ^= w;
    }
    for (i, w) in p1.iter().enumerate() {
        out[i + h] ^= w;
    }
    for (i, w) in p2.iter().enumerate() {
        out[i + 2 * h] ^= w;
    }
}

/// Product of two GF(2)[x] polynomials given as little-endian word vectors.
pub fn gf2_poly_mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let m = pick_clmul();
    let mut out = vec![0u64; a.len() + b.len()];
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let n = short.len();
    if n <= KARATSUBA_CUTOFF {
        mul_school(short, long, &mut out, m);
        return out;
    }
    // split the longer operand into chunks matching the shorter one
    let mut chunk = vec![0u64; n];
    let mut prod = vec![0u64; 2 * n];
    for (c, piece) in long.chunks(n).enumerate() {
        chunk.fill(0);
        chunk[..piece.len()].copy_from_slice(piece);
        prod.fill(0);
        mul_karatsuba(short, &chunk, &mut prod, m);
        let base = c * n;
        for (i, w) in prod.iter().enumerate() {
            if base + i < out.len() {
                out[base + i] ^= w;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut out = vec![0u64; a.len() + b.len()];
        for i in 0..a.len() * 64 {
            if a[i / 64] >> (i % 64) & 1 == 0 {
                continue;
            }
            for j in 0..b.len() * 64 {
                if b[j / 64] >> (j % 64) & 1 == 1 {
                    out[(i + j) / 64] ^= 1 << ((i + j) % 64);
                }
            }
        }
        out
    }

    #[test]
    fn soft_clmul_small_cases() {
        assert_eq!(clmul_soft(0b11, 0b11), (0b101, 0));
        assert_eq!(clmul_soft(1 << 63, 2), (0, 1));
        let m = pick_clmul();
        for (a, b) in [(0xdead_beef_u64, 0x1234_5678_9abc_def0_u64), (u64::MAX, u64::MAX)] {
            assert_eq!((m.0)(a, b), clmul_soft(a, b));
        }
    }

    #[test]
    fn pack_round_trip() {
        let b = bits_from_str("1011001110001");
        assert_eq!(unpack_bytes(&pack_bytes(&b), b.len()), b);
        assert_eq!(bits_to_string(&b), "1011001110001");
    }

    proptest! {
        #[test]
        fn poly_mul_matches_naive(a in prop::collection::vec(any::<u64>(), 1..70),
                                  b in prop::collection::vec(any::<u64>(), 1..90)) {
            prop_assert_eq!(gf2_poly_mul(&a, &b), naive(&a, &b));
        }
    }
}
