//! Figures of merit for one privacy-amplification block.

use crate::error::Result;
use crate::physics::PhysicsModels;
use crate::protocol::{binary_entropy, ProtocolParams};
use crate::security::{analyze, BasisCounts, SecurityReport};
use crate::sim::{analytic_tallies, Tallies};

/// Parity bits disclosed per bit of `h(Q)`, measured on the Cascade
/// implementation at Q between 3% and 4%, excluding verification tags.
pub const DEFAULT_F_EC: f64 = 1.18;
pub const EC_BLOCK_BITS: u64 = 8192;
pub const TAG_BITS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockReport {
    pub n_rounds: u64,
    pub sifted_bits: f64,
    pub q_z: f64,
    pub phi_z: f64,
    pub phi_conservative: bool,
    pub rkr_bps: f64,
    pub skr_bps: f64,
    pub lambda_ec: f64,
    pub key_bits: u64,
    pub security: SecurityReport<f64>,
}

/// Leakage of Cascade at efficiency `f_ec` on `n_z` sifted bits, tags included.
pub fn analytic_lambda_ec(n_z: f64, q_z: f64, f_ec: f64) -> f64 {
    let h = binary_entropy(q_z.clamp(0.0, 0.5)).unwrap_or(1.0);
    f_ec * h * n_z + TAG_BITS as f64 * (n_z / EC_BLOCK_BITS as f64).ceil()
}

/// Runs the finite-key analysis on sifted statistics of `n_rounds` rounds.
pub fn block_report<C: Copy + num_traits::ToPrimitive>(
    tallies: &Tallies<C>,
    n_rounds: u64,
    lambda_ec: f64,
    params: &ProtocolParams<f64>,
) -> Result<BlockReport> {
    let counts = BasisCounts::from_tallies(tallies, params.p_z_alice)?;
    let n_z = counts.n_z[0] + counts.n_z[1];
    let q_z = if n_z > 0.0 { (counts.m_z[0] + counts.m_z[1]) / n_z } else { 0.0 };
    let security = analyze(&counts, params, lambda_ec)?;
    let seconds = n_rounds as f64 / params.clock_rate;
    Ok(BlockReport {
        n_rounds,
        sifted_bits: n_z,
        q_z,
        phi_z: security.bounds.phi_z_high,
        phi_conservative: security.bounds.phi_conservative,
        rkr_bps: n_z / seconds,
        skr_bps: security.key_bits as f64 / seconds,
        lambda_ec,
        key_bits: security.key_bits,
        security,
    })
}

/// Expected block figures from the closed-form engine, with Cascade leakage
/// modelled by [`analytic_lambda_ec`].
pub fn analytic_report(
    params: &ProtocolParams<f64>,
    models: &PhysicsModels<f64>,
    n_rounds: u64,
    f_ec: f64,
) -> Result<BlockReport> {
    params.validate()?;
    models.validate()?;
    let t = analytic_tallies(params, models, n_rounds);
    let n_z = t.n_z_total();
    let q_z = if n_z > 0.0 { t.m_z_total() / n_z } else { 0.0 };
    block_report(&t, n_rounds, analytic_lambda_ec(n_z, q_z, f_ec), params)
}
