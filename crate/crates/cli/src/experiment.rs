//! Single runs, sweeps and the intensity optimizer.

use rayon::prelude::*;
use tbqkd_core::experiment::{analytic_report, BlockReport};
use tbqkd_core::pipeline::distill_local;
use tbqkd_core::protocol::{ChoiceSource, IntensityClass, SeededChoices};
use tbqkd_core::sifting::{drop_revealed, sift_all};
use tbqkd_core::sim::{run_simulation, SimOptions};

use crate::config::{Engine, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::report::ReportRow;

/// Phase error reported when the bound cannot be evaluated.
pub const PHI_UNBOUNDED: f64 = 0.5;

fn row(cfg: &ExperimentConfig, r: &BlockReport) -> ReportRow {
    ReportRow {
        preset: cfg.name.clone(),
        rounds: cfg.n_rounds,
        seed: cfg.seed,
        q_z: r.q_z,
        phi_z: r.phi_z,
        rkr_bps: r.rkr_bps,
        skr_bps: r.skr_bps,
        lambda_ec: r.lambda_ec,
        key_bits: r.key_bits,
        config_hash: cfg.config_hash(),
    }
}

fn seconds(cfg: &ExperimentConfig) -> f64 {
    cfg.n_rounds as f64 / cfg.params.clock_rate
}

/// Runs one experiment and returns its report row. Runs without
/// detections in one of the bases yield a zero-length key.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportRow> {
    match cfg.engine {
        Engine::Analytic => match analytic_report(&cfg.params, &cfg.models, cfg.n_rounds, cfg.f_ec) {
            Ok(r) => Ok(row(cfg, &r)),
            Err(tbqkd_core::Error::InsufficientStatistics(_)) => Ok(ReportRow {
                preset: cfg.name.clone(),
                rounds: cfg.n_rounds,
                seed: cfg.seed,
                q_z: 0.0,
                phi_z: PHI_UNBOUNDED,
                rkr_bps: 0.0,
                skr_bps: 0.0,
                lambda_ec: 0.0,
                key_bits: 0,
                config_hash: cfg.config_hash(),
            }),
            Err(e) => Err(e.into()),
        },
        Engine::Mc => run_monte_carlo(cfg),
    }
}

/// Simulation, sifting, Cascade and amplification in one process. Q_Z and
/// the raw key rate cover every sifted bit; λ_EC and the key cover the
/// full Cascade blocks.
fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<ReportRow> {
    let sim = run_simulation(&cfg.params, &cfg.models, cfg.n_rounds, cfg.seed, &SimOptions::with_log())?;
    let log = sim.log.unwrap_or_default();
    let alice = SeededChoices::new(cfg.params, cfg.seed);
    let block = drop_revealed(sift_all(&log, &alice, cfg.seed), &log, &alice);
    let intensity: Vec<IntensityClass> = block.round_indices.iter().map(|&r| alice.choice(r).intensity).collect();
    let n = block.len() as f64;
    let q_z = if n > 0.0 { block.bit_errors() as f64 / n } else { 0.0 };
    let mut out = ReportRow {
        preset: cfg.name.clone(),
        rounds: cfg.n_rounds,
        seed: cfg.seed,
        q_z,
        phi_z: PHI_UNBOUNDED,
        rkr_bps: n / seconds(cfg),
        skr_bps: 0.0,
        lambda_ec: 0.0,
        key_bits: 0,
        config_hash: cfg.config_hash(),
    };
    let distilled = distill_local(
        &block.alice_bits,
        &block.bob_bits,
        &intensity,
        (block.tallies.n_x_side, block.tallies.v_x),
        &cfg.params,
        &cfg.cascade,
        cfg.q_prior,
        cfg.n_rounds,
        cfg.seed,
    );
    match distilled {
        Ok(d) => {
            if d.alice_key != d.bob_key {
                return Err(CliError::Core(tbqkd_core::Error::VerificationFailed));
            }
            out.phi_z = d.report.phi_z;
            out.lambda_ec = d.lambda_ec as f64;
            out.key_bits = d.alice_key.len() as u64;
            out.skr_bps = out.key_bits as f64 / seconds(cfg);
            Ok(out)
        }
        Err(tbqkd_core::Error::InsufficientStatistics(_)) => Ok(out),
        Err(e) => Err(e.into()),
    }
}

/// Runs every configuration, in parallel, returning rows in input order.
pub fn sweep(cfgs: &[ExperimentConfig]) -> Result<Vec<ReportRow>> {
    cfgs.par_iter().map(run_experiment).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuGrid {
    pub mu1: Vec<f64>,
    /// Values of `mu2 / mu1`.
    pub ratios: Vec<f64>,
}

impl MuGrid {
    /// `steps` evenly spaced signal intensities in `[lo, hi]` with
    /// `mu2 = mu1 / 2`.
    pub fn linear(lo: f64, hi: f64, steps: usize) -> Self {
        let mu1 = match steps {
            0 => vec![],
            1 => vec![lo],
            _ => (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect(),
        };
        Self { mu1, ratios: vec![0.5] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuOptimum {
    pub mu1: f64,
    pub mu2: f64,
    pub skr_bps: f64,
    pub key_bits: u64,
}

/// Analytic secret key rate at one intensity pair, or `None` for a pair
/// that fails validation.
pub fn evaluate_mu(base: &ExperimentConfig, mu1: f64, mu2: f64) -> Result<Option<(f64, u64)>> {
    let mut cfg = base.clone();
    cfg.params.mu1 = mu1;
    cfg.params.mu2 = mu2;
    cfg.engine = Engine::Analytic;
    if cfg.clone().validate().is_err() {
        return Ok(None);
    }
    let r = run_experiment(&cfg)?;
    Ok(Some((r.skr_bps, r.key_bits)))
}

/// Grid search of the analytic secret key rate over `(mu1, ratio)`. Ties
/// go to the smaller `mu1`, then the smaller ratio.
pub fn optimize_mu(base: &ExperimentConfig, grid: &MuGrid) -> Result<MuOptimum> {
    let mut points: Vec<(f64, f64)> = grid.mu1.iter().flat_map(|&m| grid.ratios.iter().map(move |&r| (m, r))).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let scored: Vec<Option<MuOptimum>> = points
        .par_iter()
        .map(|&(mu1, ratio)| {
            let mu2 = mu1 * ratio;
            Ok(evaluate_mu(base, mu1, mu2)?.map(|(skr_bps, key_bits)| MuOptimum { mu1, mu2, skr_bps, key_bits }))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<MuOptimum> = None;
    for p in scored.into_iter().flatten() {
        if best.is_none_or(|b| p.skr_bps > b.skr_bps) {
            best = Some(p);
        }
    }
    best.ok_or_else(|| CliError::Validation("no admissible intensity pair in the grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tbqkd_core::physics::{ChannelModel, PhysicsModels};

    fn toy() -> ExperimentConfig {
        let mut c = ExperimentConfig::from_preset("lab-100km").unwrap();
        c.name = "toy".into();
        c.models = PhysicsModels::ideal();
        c.models.channel = ChannelModel::new(0.0);
        c.n_rounds = 1_000_000_000;
        c
    }

    #[test]
    fn noiseless_zero_loss_link_has_no_errors_and_a_key() {
        let r = run_experiment(&toy()).unwrap();
        assert_eq!(r.q_z, 0.0);
        assert!(r.skr_bps > 0.0);
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let grid = MuGrid { mu1: vec![0.37], ratios: vec![0.5] };
        let best = optimize_mu(&toy(), &grid).unwrap();
        assert_eq!((best.mu1, best.mu2), (0.37, 0.185));
        assert!(optimize_mu(&toy(), &MuGrid { mu1: vec![], ratios: vec![0.5] }).is_err());
    }

    #[test]
    fn ties_go_to_the_smaller_intensity() {
        let mut c = toy();
        c.n_rounds = 10;
        let grid = MuGrid { mu1: vec![0.6, 0.2, 0.4], ratios: vec![0.5] };
        let best = optimize_mu(&c, &grid).unwrap();
        assert_eq!(best.skr_bps, 0.0);
        assert_eq!(best.mu1, 0.2);
    }

    #[test]
    fn linear_grid_spans_its_ends() {
        let g = MuGrid::linear(0.1, 0.5, 5);
        assert_eq!(g.mu1.len(), 5);
        assert_eq!((g.mu1[0], g.mu1[4]), (0.1, 0.5));
    }
}
