//! Classical post-processing of a sifted key: Cascade over fixed blocks,
//! finite-key analysis and privacy amplification.
//!
//! Both peers of a networked session run the same steps; the helpers here
//! are shared with the in-process variant [`distill_local`].

use crate::bits::{BitSlice64, Bits};
use crate::cascade::{reconcile_local, verification_tag, CascadeConfig};
use crate::error::Result;
use crate::experiment::{block_report, BlockReport};
use crate::protocol::{IntensityClass, ProtocolParams};
use crate::rng::{derive_seed, Domain};
use crate::security::{expand_seed, privacy_amplify, toeplitz_seed_len};
use crate::sim::TallyCounts;

/// Running QBER estimate used to size Cascade sub-blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberTracker {
    prior: f64,
    errors: u64,
    bits: u64,
}

impl QberTracker {
    pub fn new(prior: f64) -> Self {
        Self { prior, errors: 0, bits: 0 }
    }

    /// Estimate in `(0, 0.25]`.
    pub fn estimate(&self) -> f64 {
        let q = if self.bits == 0 { self.prior } else { self.errors as f64 / self.bits as f64 };
        q.clamp(1e-3, 0.25)
    }

    pub fn record(&mut self, errors: u64, bits: u64) {
        self.errors += errors;
        self.bits += bits;
    }
}

/// Full Cascade blocks of a sifted key; the trailing partial block is
/// left out of reconciliation.
pub fn block_ranges(sifted_len: usize, cfg: &CascadeConfig) -> Vec<std::ops::Range<usize>> {
    (0..sifted_len / cfg.block_size_bits).map(|b| b * cfg.block_size_bits..(b + 1) * cfg.block_size_bits).collect()
}

/// Shuffle seed of one Cascade block, derived from the session seed.
pub fn block_seed(session_seed: u64, block_id: u32) -> u64 {
    derive_seed(session_seed, Domain::Reconcile, block_id as u64)
}

/// Privacy amplification of the reconciled key down to `l` bits.
pub fn amplify(key: &BitSlice64, l: u64, pa_seed: u64) -> Result<Bits> {
    let l = l as usize;
    let seed = expand_seed(pa_seed, toeplitz_seed_len(key.len(), l));
    privacy_amplify(key, l, &seed)
}

/// Tag both peers compare after amplification.
pub fn final_key_tag(key: &BitSlice64, pa_seed: u64) -> u64 {
    verification_tag(key, derive_seed(pa_seed, Domain::Amplify, 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distilled {
    pub alice_key: Bits,
    pub bob_key: Bits,
    /// Z statistics of the reconciled bits plus the X statistics supplied.
    pub tallies: TallyCounts,
    pub lambda_ec: u64,
    pub blocks: usize,
    pub blocks_verified: usize,
    pub report: BlockReport,
}

/// Runs reconciliation, analysis and amplification for keys held in one
/// process. `intensity[i]` is the intensity class of sifted bit `i`.
#[allow(clippy::too_many_arguments)]
pub fn distill_local(
    alice_bits: &BitSlice64,
    bob_bits: &BitSlice64,
    intensity: &[IntensityClass],
    x_stats: ([u64; 2], [u64; 2]),
    params: &ProtocolParams<f64>,
    cfg: &CascadeConfig,
    q_prior: f64,
    n_rounds: u64,
    seed: u64,
) -> Result<Distilled> {
    let mut tracker = QberTracker::new(q_prior);
    let mut tallies = TallyCounts { n_x_side: x_stats.0, v_x: x_stats.1, ..Default::default() };
    let mut alice_key = Bits::new();
    let mut bob_key = Bits::new();
    let mut lambda = 0u64;
    let ranges = block_ranges(alice_bits.len(), cfg);
    let mut verified = 0;
    for (b, r) in ranges.iter().enumerate() {
        let (res, _) =
            reconcile_local(&alice_bits[r.clone()], &bob_bits[r.clone()], tracker.estimate(), cfg, block_seed(seed, b as u32))?;
        let errors = (res.corrected_key.clone() ^ &bob_bits[r.clone()]).count_ones() as u64;
        tracker.record(errors, r.len() as u64);
        if !res.verified {
            continue;
        }
        verified += 1;
        lambda += res.lambda_ec_bits;
        for (i, k) in intensity[r.clone()].iter().enumerate() {
            tallies.n_z[k.index()] += 1;
            if res.corrected_key[i] != bob_bits[r.start + i] {
                tallies.m_z[k.index()] += 1;
            }
        }
        alice_key.extend_from_bitslice(&alice_bits[r.clone()]);
        bob_key.extend_from_bitslice(&res.corrected_key);
    }
    let report = block_report(&tallies, n_rounds, lambda as f64, params)?;
    let pa_seed = derive_seed(seed, Domain::Amplify, 0);
    Ok(Distilled {
        alice_key: amplify(&alice_key, report.key_bits.min(alice_key.len() as u64), pa_seed)?,
        bob_key: amplify(&bob_key, report.key_bits.min(bob_key.len() as u64), pa_seed)?,
        tallies,
        lambda_ec: lambda,
        blocks: ranges.len(),
        blocks_verified: verified,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracker_clamps_and_updates() {
        let mut t = QberTracker::new(0.03);
        assert_eq!(t.estimate(), 0.03);
        t.record(0, 8192);
        assert_eq!(t.estimate(), 1e-3);
        t.record(8192, 8192);
        assert_eq!(t.estimate(), 0.25);
    }

    #[test]
    fn partial_block_is_dropped() {
        let cfg = CascadeConfig::default();
        assert_eq!(block_ranges(8191, &cfg).len(), 0);
        assert_eq!(block_ranges(3 * 8192 + 5, &cfg), vec![0..8192, 8192..16384, 16384..24576]);
    }
}
