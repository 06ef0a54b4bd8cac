//! One-decoy finite-key statistics, secret key length and privacy
//! amplification.

mod bounds;
pub mod keyfile;
mod privacy;

pub use bounds::{
    decoy_bounds, eps_prime, finite_count_bounds, gamma, hoeffding_delta, key_length, key_length_overhead, phi_z_upper, tau,
    BasisCounts, DecoyBounds, FiniteCountBounds, PhaseErrorBound, EPS_BUDGET, EPS_TERMS,
};
pub use privacy::{expand_seed, privacy_amplify, privacy_amplify_naive, toeplitz_seed_len};

use crate::error::Result;
use crate::protocol::ProtocolParams;
use crate::scalar::Real;

/// Everything the finite-key analysis derives from one set of tallies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityReport<T> {
    pub counts: FiniteCountBounds<T>,
    pub bounds: DecoyBounds<T>,
    pub key_bits: u64,
}

/// Runs the full analysis: rescaled count bounds, decoy bounds, phase
/// error bound and the extractable key length for `lambda_ec` disclosed bits.
pub fn analyze<T: Real>(counts: &BasisCounts<T>, params: &ProtocolParams<T>, lambda_ec: T) -> Result<SecurityReport<T>> {
    let fcb = finite_count_bounds(counts, params)?;
    let db = decoy_bounds(&fcb, params)?;
    let key_bits = key_length(&db, lambda_ec, params);
    Ok(SecurityReport { counts: fcb, bounds: db, key_bits })
}
