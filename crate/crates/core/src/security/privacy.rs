use rand::RngCore;

use crate::bits::{gf2_poly_mul, to_words, BitSlice64, Bits};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};

/// Seed bits needed to hash `n` input bits down to `l` output bits.
pub fn toeplitz_seed_len(n: usize, l: usize) -> usize {
    if l == 0 {
        0
    } else {
        n + l - 1
    }
}

/// Deterministic seed expansion for privacy amplification.
pub fn expand_seed(seed: u64, bits: usize) -> Bits {
    let mut rng = stream_rng(seed, Domain::Amplify, 0);
    let mut words = vec![0u64; bits.div_ceil(64)];
    for w in &mut words {
        *w = rng.next_u64();
    }
    let mut out = Bits::from_vec(words);
    out.truncate(bits);
    out
}

fn check(key: &BitSlice64, l: usize, seed: &BitSlice64) -> Result<()> {
    if l > key.len() {
        return Err(Error::Domain(format!("output length {l} exceeds key length {}", key.len())));
    }
    let expected = toeplitz_seed_len(key.len(), l);
    if seed.len() != expected {
        return Err(Error::SeedLength { expected, actual: seed.len() });
    }
    Ok(())
}

/// Multiplies `key` by the `l x n` Toeplitz matrix `T[i][j] = seed[i - j + n - 1]`.
///
/// Row `i` of the product is coefficient `n - 1 + i` of the GF(2)
/// polynomial product of seed and key.
pub fn privacy_amplify(key: &BitSlice64, l: usize, seed: &BitSlice64) -> Result<Bits> {
    check(key, l, seed)?;
    if l == 0 {
        return Ok(Bits::new());
    }
    let n = key.len();
    let prod = gf2_poly_mul(&to_words(seed), &to_words(key));
    let all = Bits::from_vec(prod);
    Ok(all[n - 1..n - 1 + l].to_bitvec())
}

/// Row-by-row reference implementation.
pub fn privacy_amplify_naive(key: &BitSlice64, l: usize, seed: &BitSlice64) -> Result<Bits> {
    check(key, l, seed)?;
    let n = key.len();
    Ok((0..l).map(|i| key.iter_ones().fold(false, |acc, j| acc ^ seed[i + n - 1 - j])).collect())
}
