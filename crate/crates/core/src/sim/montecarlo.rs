use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use super::tally::{Basis, DetectionBin, DetectionRecord, DetectorStats, TallyCounts, TruthCounts};
use super::SimOptions;
use crate::physics::{Accepted, DetectorStream, EmissionPattern, EventSource, PhysicsModels};
use crate::protocol::{ChoiceSource, ProtocolParams, RoundChoice, StateSymbol};
use crate::rng::{round_rng, stream_rng, Domain};
use crate::sifting;

/// Per-photon constants shared by every round.
#[derive(Debug, Clone, Copy)]
pub(super) struct PhotonModel {
    pub az: f64,
    pub ax: f64,
    pub visibility: f64,
    pub extinction_error: f64,
    pub intensity_jitter: Option<Normal<f64>>,
    pub mu: [f64; 2],
}

impl PhotonModel {
    pub fn new(params: &ProtocolParams<f64>, models: &PhysicsModels<f64>) -> Self {
        let r = models.source.intensity_jitter_rel;
        Self {
            az: crate::physics::z_detection_scale(params, models),
            ax: crate::physics::x_detection_scale(params, models),
            visibility: models.interferometer.visibility,
            extinction_error: models.source.extinction_error,
            intensity_jitter: (r > 0.0).then(|| Normal::new(0.0, r).expect("finite jitter")),
            mu: [params.mu1, params.mu2],
        }
    }
}

/// Detector slots hit by at least one photon in one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(super) struct RoundHits {
    pub photons: u32,
    pub z_early: bool,
    pub z_late: bool,
    pub x_early_side: bool,
    pub x_central: bool,
    /// Lands in the early side slot of the next round.
    pub x_late_side: bool,
    pub x1_central_error: bool,
    pub x1_central_correct: bool,
}

pub(super) fn emit_round<R: Rng>(choice: &RoundChoice, m: &PhotonModel, rng: &mut R) -> RoundHits {
    let mut mu = m.mu[choice.intensity.index()];
    if let Some(n) = &m.intensity_jitter {
        mu *= (1.0 + n.sample(rng)).max(0.0);
    }
    let leaked = choice.state.is_z() && m.extinction_error > 0.0 && rng.random::<f64>() < m.extinction_error;
    let pat = EmissionPattern::of(choice.state, mu, leaked);
    let total = pat.total();
    let mut h = RoundHits::default();
    if total <= 0.0 {
        return h;
    }
    let n = Poisson::new(total).expect("positive mean").sample(rng) as u32;
    h.photons = n;
    let p_early = pat.early / total;
    let single_superposition = n == 1 && choice.state == StateSymbol::XPlus;
    for _ in 0..n {
        let u: f64 = rng.random();
        if u < m.az {
            if rng.random::<f64>() < p_early {
                h.z_early = true;
            } else {
                h.z_late = true;
            }
        } else if u < m.az + m.ax {
            let w: f64 = rng.random();
            let port: f64 = rng.random();
            if pat.coherent {
                if w < 0.25 {
                    h.x_early_side |= port < 0.5;
                } else if w < 0.5 {
                    h.x_late_side |= port < 0.5;
                } else {
                    let destructive = port < 0.5 * (1.0 - m.visibility);
                    h.x_central |= destructive;
                    if single_superposition {
                        h.x1_central_error |= destructive;
                        h.x1_central_correct |= !destructive;
                    }
                }
            } else if port < 0.5 {
                let early = w < p_early;
                let short = rng.random::<f64>() < 0.5;
                match (early, short) {
                    (true, true) => h.x_early_side = true,
                    (false, false) => h.x_late_side = true,
                    _ => h.x_central = true,
                }
            }
        }
    }
    h
}

/// Grid geometry of the simulation.
#[derive(Debug, Clone, Copy)]
pub(super) struct Grid {
    pub bin_ps: u64,
}

impl Grid {
    pub fn new(clock_rate: f64) -> Self {
        Self { bin_ps: ((1e12 / clock_rate) / 4.0).round().max(1.0) as u64 }
    }

    pub fn round_ps(&self) -> u64 {
        4 * self.bin_ps
    }
}

#[derive(Debug, Default)]
pub(super) struct SegmentResult {
    pub tallies: TallyCounts,
    pub truth: TruthCounts,
    pub stats_z: DetectorStats,
    pub stats_x: DetectorStats,
    pub records: Vec<DetectionRecord>,
}

struct Segment {
    index: u64,
    start: u64,
    end: u64,
}

struct Job<'a, C: ?Sized> {
    choices: &'a C,
    model: PhotonModel,
    models: &'a PhysicsModels<f64>,
    grid: Grid,
    n_rounds: u64,
    seed: u64,
    warmup: u64,
    margin: u64,
}

impl<C: ChoiceSource + ?Sized> Job<'_, C> {
    fn classify(
        &self,
        seg: &Segment,
        acc: &[Accepted],
        basis: Basis,
        stats: &mut DetectorStats,
        records: &mut Vec<DetectionRecord>,
    ) {
        for a in acc {
            let round = a.bin.div_euclid(4);
            let offset = a.bin.rem_euclid(4);
            let owned = round >= seg.start as i64 && round < seg.end as i64;
            if !owned {
                let below = round < 0 && seg.start == 0;
                let above = round >= self.n_rounds as i64 && seg.end == self.n_rounds;
                if below || above {
                    stats.accepted += 1;
                    stats.out_of_range += 1;
                }
                continue;
            }
            stats.accepted += 1;
            match a.source {
                EventSource::Signal => stats.from_signal += 1,
                EventSource::Dark => stats.from_dark += 1,
                EventSource::Afterpulse => stats.from_afterpulse += 1,
            }
            let bin = match (basis, offset) {
                (Basis::Z, 0) => DetectionBin::Early,
                (Basis::Z, 2) => DetectionBin::Late,
                (Basis::X, 0) => DetectionBin::XEarlySide,
                (Basis::X, 2) => DetectionBin::XCentral,
                _ => {
                    stats.in_empty_bins += 1;
                    continue;
                }
            };
            stats.in_measurement_bins += 1;
            records.push(DetectionRecord { round_index: round as u64, basis, bin, time_ps: a.bin * self.grid.bin_ps as i64 });
        }
    }

    fn run(&self, seg: &Segment) -> SegmentResult {
        let mut out = SegmentResult::default();
        let sim_start = seg.start.saturating_sub(self.warmup);
        let sim_end = self.n_rounds.min(seg.end + self.margin);
        let round_ps = self.grid.round_ps();
        let bin = self.grid.bin_ps as f64;
        let mut z = DetectorStream::new(
            &self.models.detector_z,
            bin,
            sim_start * round_ps,
            stream_rng(self.seed, Domain::DetectorZ, seg.index),
        );
        let mut x = DetectorStream::new(
            &self.models.detector_x,
            bin,
            sim_start * round_ps,
            stream_rng(self.seed, Domain::DetectorX, seg.index),
        );
        let mut acc_z = Vec::new();
        let mut acc_x = Vec::new();
        let mut photons = vec![0u8; (seg.end - seg.start) as usize];
        let mut carry_x = false;
        for r in sim_start..sim_end {
            let c = self.choices.choice(r);
            let h = emit_round(&c, &self.model, &mut round_rng(self.seed, Domain::Photons, r));
            if r >= seg.start && r < seg.end {
                out.tallies.sent[c.state.code() as usize][c.intensity.index()] += 1;
                photons[(r - seg.start) as usize] = h.photons.min(255) as u8;
                out.truth.x1_central_error += h.x1_central_error as u64;
                out.truth.x1_central_correct += h.x1_central_correct as u64;
            }
            let t0 = r * round_ps;
            if h.z_early {
                z.push(t0, &mut acc_z);
            }
            if h.z_late {
                z.push(t0 + 2 * self.grid.bin_ps, &mut acc_z);
            }
            if carry_x || h.x_early_side {
                x.push(t0, &mut acc_x);
            }
            if h.x_central {
                x.push(t0 + 2 * self.grid.bin_ps, &mut acc_x);
            }
            carry_x = h.x_late_side;
        }
        if carry_x {
            x.push(sim_end * round_ps, &mut acc_x);
        }
        let end_ps = (seg.end + self.margin) * round_ps;
        z.finish(end_ps, &mut acc_z);
        x.finish(end_ps, &mut acc_x);

        let mut records = Vec::with_capacity(acc_z.len() + acc_x.len());
        self.classify(seg, &acc_z, Basis::Z, &mut out.stats_z, &mut records);
        self.classify(seg, &acc_x, Basis::X, &mut out.stats_x, &mut records);
        records.sort_by_key(|r| (r.round_index, r.time_ps, r.basis == Basis::X));

        let block = sifting::sift_all(&records, self.choices, self.seed);
        let sent = out.tallies.sent;
        out.tallies = block.tallies;
        out.tallies.sent = sent;
        for &r in &block.round_indices {
            let k = self.choices.choice(r).intensity.index();
            match photons[(r - seg.start) as usize] {
                0 => out.truth.z_vacuum[k] += 1,
                1 => out.truth.z_single[k] += 1,
                _ => {}
            }
        }
        out.records = records;
        out
    }
}

pub(super) fn simulate<C: ChoiceSource + ?Sized>(
    choices: &C,
    params: &ProtocolParams<f64>,
    models: &PhysicsModels<f64>,
    n_rounds: u64,
    seed: u64,
    opts: &SimOptions,
) -> SegmentResult {
    let grid = Grid::new(params.clock_rate);
    let round_ps = grid.round_ps() as f64;
    let sigma = models.detector_z.jitter_sigma_ps.max(models.detector_x.jitter_sigma_ps);
    let margin = (9.0 * sigma / round_ps).ceil() as u64 + 2;
    let history = |d: &crate::physics::DetectorModel<f64>| {
        let ap = if d.afterpulse_prob > 0.0 { 10.0 * d.afterpulse_delay_s } else { 0.0 };
        (d.dead_time_s + ap) * 1e12
    };
    let warmup = (history(&models.detector_z).max(history(&models.detector_x)) / round_ps).ceil() as u64 + margin;
    let job = Job { choices, model: PhotonModel::new(params, models), models, grid, n_rounds, seed, warmup, margin };
    let seg_len = opts.segment_rounds.max(1);
    let segments: Vec<Segment> = (0..n_rounds.div_ceil(seg_len))
        .map(|i| Segment { index: i, start: i * seg_len, end: ((i + 1) * seg_len).min(n_rounds) })
        .collect();
    let parts: Vec<SegmentResult> = segments.par_iter().map(|s| job.run(s)).collect();
    let mut total = SegmentResult::default();
    for p in parts {
        total.tallies += p.tallies;
        total.truth += p.truth;
        total.stats_z += p.stats_z;
        total.stats_x += p.stats_x;
        if opts.keep_log {
            total.records.extend(p.records);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::IntensityClass;

    #[test]
    fn superposition_photons_split_evenly_in_z() {
        let mut params = ProtocolParams::<f64>::with_intensities(1.0, 0.5);
        params.p_z_bob = 0.999_999;
        let model = PhotonModel::new(&params, &PhysicsModels::ideal());
        let c = RoundChoice { state: StateSymbol::XPlus, intensity: IntensityClass::Mu1, round_index: 0 };
        let (mut e, mut l) = (0u32, 0u32);
        for r in 0..20_000 {
            let h = emit_round(&c, &model, &mut round_rng(3, Domain::Aux, r));
            e += h.z_early as u32;
            l += h.z_late as u32;
        }
        // each bin clicks with probability 1 - exp(-1/2)
        let p = 1.0 - (-0.5f64).exp();
        for v in [e, l] {
            assert!((v as f64 / 20_000.0 - p).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn grid_for_nominal_clock() {
        let g = Grid::new(2.5e9);
        assert_eq!(g.bin_ps, 100);
        assert_eq!(g.round_ps(), 400);
    }
}
