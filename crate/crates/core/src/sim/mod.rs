//! Round-by-round simulation of the link and its closed-form expectations.
//!
//! The Monte Carlo engine splits the run into fixed segments of rounds.
//! Every per-round draw comes from a stream keyed by the round index and
//! every detector stream by the segment index, so a run is a pure function
//! of `(params, models, n_rounds, seed, segment_rounds)`. Each segment
//! replays a warm-up stretch before its first round so detector history
//! (dead time, pending afterpulses) is in a realistic state, and keeps only
//! detections that land inside its own range.

mod analytic;
mod montecarlo;
pub mod tally;

pub use analytic::{analytic_tallies, detector_load, detector_throughput, DetectorThroughput};
pub use tally::{Basis, DetectionBin, DetectionRecord, DetectorStats, ExpectedTallies, Tallies, TallyCounts, TruthCounts};

use crate::error::{Error, Result};
use crate::physics::PhysicsModels;
use crate::protocol::{ChoiceSource, ProtocolParams, SeededChoices};

/// Knobs of the Monte Carlo engine that do not change the physics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Rounds per independently seeded segment.
    pub segment_rounds: u64,
    pub keep_log: bool,
    /// Largest run for which a full detection log may be requested.
    pub max_log_rounds: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { segment_rounds: 1 << 22, keep_log: false, max_log_rounds: 200_000_000 }
    }
}

impl SimOptions {
    pub fn with_log() -> Self {
        Self { keep_log: true, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimOutput {
    pub tallies: TallyCounts,
    pub truth: TruthCounts,
    pub stats_z: DetectorStats,
    pub stats_x: DetectorStats,
    /// Detections sorted by round, present only when requested.
    pub log: Option<Vec<DetectionRecord>>,
}

/// Simulates `n_rounds` rounds with Alice's choices drawn from `seed`.
pub fn run_simulation(
    params: &ProtocolParams<f64>,
    models: &PhysicsModels<f64>,
    n_rounds: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimOutput> {
    simulate_choices(&SeededChoices::new(*params, seed), params, models, n_rounds, seed, opts)
}

/// Simulates the channel and Bob's receiver for externally supplied choices.
pub fn simulate_choices<C: ChoiceSource + ?Sized>(
    choices: &C,
    params: &ProtocolParams<f64>,
    models: &PhysicsModels<f64>,
    n_rounds: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimOutput> {
    if n_rounds == 0 {
        return Err(Error::Validation("n_rounds must be at least 1".into()));
    }
    params.validate()?;
    models.validate()?;
    if opts.keep_log && n_rounds > opts.max_log_rounds {
        return Err(Error::Resource(format!("detection log requested for {n_rounds} rounds, cap is {}", opts.max_log_rounds)));
    }
    let r = montecarlo::simulate(choices, params, models, n_rounds, seed, opts);
    Ok(SimOutput {
        tallies: r.tallies,
        truth: r.truth,
        stats_z: r.stats_z,
        stats_x: r.stats_x,
        log: opts.keep_log.then_some(r.records),
    })
}
