//! Closed-form expectations of every tally field.
//!
//! Landing counts are sums over neighbouring emission slots weighted by the
//! jitter kernel. Rounds other than the conditioned ones are marginalized
//! over Alice's choice distribution and extinction leakage. Dead time and
//! afterpulsing enter through a stationary renewal model: each candidate
//! click is accepted with probability `f`, and afterpulses plus dark counts
//! form a flat background per bin.

use super::tally::Tallies;
use crate::physics::{
    bin_seconds, x_detection_scale, z_detection_scale, DetectorModel, EmissionPattern, JitterKernel, PhysicsModels,
};
use crate::protocol::{IntensityClass, ProtocolParams, StateSymbol};
use crate::scalar::Real;

/// Stationary detector throughput under dead time and afterpulsing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorThroughput<T> {
    /// Candidate primary event rate (signal plus dark), per second.
    pub primary_rate: T,
    /// Probability that a primary event is accepted.
    pub acceptance: T,
    /// Accepted afterpulses per second.
    pub afterpulse_rate: T,
    /// Accepted dark counts plus afterpulses per second.
    pub background_rate: T,
}

/// Stationary model of a non-paralyzable detector with Poisson primaries at
/// `signal_rate + dcr` and one possible afterpulse per accepted event.
///
/// An afterpulse candidate `D ~ Exp(m)` after its parent is accepted when the
/// detector is live at that time; for a renewal process with live periods
/// `Exp(R)` and dead periods `tau` this happens with probability
/// `q = p e^(-tau/m) s / (R + s - R e^(-s tau))`, `s = 1/m`. Primaries are
/// accepted with the live fraction `1 - A tau`, which gives the total accepted
/// rate `A = R / (1 + R tau - q)`. With `p = 0` this is `R / (1 + R tau)`.
pub fn detector_throughput<T: Real>(signal_rate: T, det: &DetectorModel<T>) -> DetectorThroughput<T> {
    let r = signal_rate + det.dcr_cps;
    if !(r > T::zero()) {
        return DetectorThroughput {
            primary_rate: T::zero(),
            acceptance: T::one(),
            afterpulse_rate: T::zero(),
            background_rate: T::zero(),
        };
    }
    let tau = det.dead_time_s;
    let s = T::one() / det.afterpulse_delay_s;
    let decay = (-s * tau).exp();
    let q = det.afterpulse_prob * decay * s / (r + s - r * decay);
    let a = r / (T::one() + r * tau - q);
    let f = (T::one() - q) * a / r;
    let a_ap = q * a;
    DetectorThroughput { primary_rate: r, acceptance: f, afterpulse_rate: a_ap, background_rate: det.dcr_cps * f + a_ap }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Prep {
    Marginal,
    Fixed(StateSymbol, IntensityClass),
}

struct Ctx<T> {
    az: T,
    ax: T,
    visibility: T,
    jitter: T,
    marginal: Vec<(T, EmissionPattern<T>)>,
    fixed: Vec<Vec<(T, EmissionPattern<T>)>>,
    kz: Vec<T>,
    kx: Vec<T>,
    hz: i64,
    hx: i64,
    fz: T,
    fx: T,
    bz: T,
    bx: T,
}

fn variants<T: Real>(s: StateSymbol, k: IntensityClass, params: &ProtocolParams<T>, eps: T) -> Vec<(T, EmissionPattern<T>)> {
    let mu = params.mu(k);
    if s.is_z() && eps > T::zero() {
        vec![(T::one() - eps, EmissionPattern::of(s, mu, false)), (eps, EmissionPattern::of(s, mu, true))]
    } else {
        vec![(T::one(), EmissionPattern::of(s, mu, false))]
    }
}

fn quarter<T: Real>(v: T) -> T {
    v * T::lit(0.25)
}

impl<T: Real> Ctx<T> {
    fn new(params: &ProtocolParams<T>, models: &PhysicsModels<T>) -> Self {
        let eps = models.source.extinction_error;
        let mut marginal = Vec::new();
        let mut fixed = Vec::new();
        for s in StateSymbol::ALL {
            for k in IntensityClass::ALL {
                let v = variants(s, k, params, eps);
                let w = params.p_state(s) * params.p_intensity(k);
                marginal.extend(v.iter().map(|(p, pat)| (*p * w, *pat)));
                fixed.push(v);
            }
        }
        let bin_ps = bin_seconds(params).to_f64_lossy() * 1e12;
        let kernel = |d: &DetectorModel<T>| {
            let k = JitterKernel::new(d.jitter_sigma_ps.to_f64_lossy(), bin_ps);
            let h = k.half_width();
            ((-h..=h).map(|i| T::lit(k.weight(i))).collect::<Vec<T>>(), h)
        };
        let (kz, hz) = kernel(&models.detector_z);
        let (kx, hx) = kernel(&models.detector_x);
        let mut ctx = Self {
            az: z_detection_scale(params, models),
            ax: x_detection_scale(params, models),
            visibility: models.interferometer.visibility,
            jitter: models.source.intensity_jitter_rel,
            marginal,
            fixed,
            kz,
            kx,
            hz,
            hx,
            fz: T::one(),
            fx: T::one(),
            bz: T::zero(),
            bx: T::zero(),
        };
        let bin_s = bin_seconds(params);
        let z_rate = ctx.z_candidates_per_round() * params.clock_rate;
        let x_rate = ctx.x_candidates_per_round() * params.clock_rate;
        let tz = detector_throughput(z_rate, &models.detector_z);
        let tx = detector_throughput(x_rate, &models.detector_x);
        ctx.fz = tz.acceptance;
        ctx.fx = tx.acceptance;
        ctx.bz = tz.background_rate * bin_s;
        ctx.bx = tx.background_rate * bin_s;
        ctx
    }

    fn patterns(&self, prep: Prep) -> &[(T, EmissionPattern<T>)] {
        match prep {
            Prep::Marginal => &self.marginal,
            Prep::Fixed(s, k) => &self.fixed[s.code() as usize * 2 + k.index()],
        }
    }

    /// Probability of no detected photon for mean `x` (already scaled by
    /// the detection probability), averaged over intensity fluctuations.
    fn no_click(&self, x: T) -> T {
        let xr = x * self.jitter;
        (-x + xr * xr * T::lit(0.5)).exp()
    }

    fn expected_no_click(&self, prep: Prep, a: T, sel: impl Fn(&EmissionPattern<T>) -> T) -> T {
        self.patterns(prep).iter().fold(T::zero(), |acc, (w, p)| acc + *w * self.no_click(a * sel(p)))
    }

    fn z_candidates_per_round(&self) -> T {
        self.marginal.iter().fold(T::zero(), |acc, (w, p)| {
            acc + *w * (T::lit(2.0) - self.no_click(self.az * p.early) - self.no_click(self.az * p.late))
        })
    }

    fn x_side(&self, prev: Prep, curr: Prep) -> T {
        T::one()
            - self.expected_no_click(curr, self.ax, |p| quarter(p.early))
                * self.expected_no_click(prev, self.ax, |p| quarter(p.late))
    }

    fn x_central(&self, prep: Prep) -> T {
        let v = self.visibility;
        T::one() - self.expected_no_click(prep, self.ax, |p| p.central_destructive(v))
    }

    fn x_candidates_per_round(&self) -> T {
        self.x_side(Prep::Marginal, Prep::Marginal) + self.x_central(Prep::Marginal)
    }

    fn kz(&self, d: i64) -> T {
        if d.abs() > self.hz {
            T::zero()
        } else {
            self.kz[(d + self.hz) as usize]
        }
    }

    fn kx(&self, d: i64) -> T {
        if d.abs() > self.hx {
            T::zero()
        } else {
            self.kx[(d + self.hx) as usize]
        }
    }

    /// Expected X records landing in grid bin `bin`, relative to round 0.
    fn x_landing(&self, bin: i64, prep: impl Fn(i64) -> Prep) -> T {
        let reach = self.hx / 4 + 2;
        let mut total = self.bx;
        for j in -reach..=reach {
            let ws = self.kx(bin - 4 * j);
            if ws > T::zero() {
                total = total + self.fx * self.x_side(prep(j - 1), prep(j)) * ws;
            }
            let wc = self.kx(bin - 4 * j - 2);
            if wc > T::zero() {
                total = total + self.fx * self.x_central(prep(j)) * wc;
            }
        }
        total
    }

    /// Log-probability that no Z record lands in any of `bins`.
    fn z_log_miss(&self, bins: &[i64], prep: impl Fn(i64) -> Prep) -> T {
        let reach = self.hz / 4 + 2;
        let hit = |slot: i64| bins.iter().fold(T::zero(), |acc, b| acc + self.kz(b - slot));
        let mut log = -self.bz * T::lit(bins.len() as f64);
        for j in -reach..=reach {
            let (he, hl) = (hit(4 * j), hit(4 * j + 2));
            if he == T::zero() && hl == T::zero() {
                continue;
            }
            let d = self.patterns(prep(j)).iter().fold(T::zero(), |acc, (w, p)| {
                let x = self.fz * (T::one() - self.no_click(self.az * p.early)) * he;
                let y = self.fz * (T::one() - self.no_click(self.az * p.late)) * hl;
                acc + *w * (x + y - x * y)
            });
            log = log + (-d).ln_1p();
        }
        log
    }
}

/// Expected tallies of `n_rounds` rounds in the stationary bulk of a run.
///
/// Counts scale linearly in `n_rounds`; boundary rounds are not treated
/// separately.
pub fn analytic_tallies<T: Real>(params: &ProtocolParams<T>, models: &PhysicsModels<T>, n_rounds: u64) -> Tallies<T> {
    let ctx = Ctx::new(params, models);
    let n = T::from_u64(n_rounds).unwrap_or_else(T::infinity);
    let mut t = Tallies::<T>::default();
    let half = T::lit(0.5);
    for k in IntensityClass::ALL {
        let i = k.index();
        let pk = params.p_intensity(k);
        for s in StateSymbol::ALL {
            t.sent[s.code() as usize][i] = n * params.p_state(s) * pk;
        }
        for s in [StateSymbol::Z0, StateSymbol::Z1] {
            let prep = |j: i64| if j == 0 { Prep::Fixed(s, k) } else { Prep::Marginal };
            let log_e = ctx.z_log_miss(&[0], prep);
            let log_l = ctx.z_log_miss(&[2], prep);
            let log_el = ctx.z_log_miss(&[0, 2], prep);
            let p_any = -log_el.exp_m1();
            let p_e = -log_e.exp_m1();
            let p_l = -log_l.exp_m1();
            let p_both = p_e + p_l - p_any;
            let wrong_only = if s == StateSymbol::Z0 { log_e.exp() - log_el.exp() } else { log_l.exp() - log_el.exp() };
            let w = n * params.p_state(s) * pk;
            t.n_z[i] = t.n_z[i] + w * p_any;
            t.m_z[i] = t.m_z[i] + w * (wrong_only + half * p_both);
        }
        let prep = |j: i64| if j == 0 { Prep::Fixed(StateSymbol::XPlus, k) } else { Prep::Marginal };
        t.v_x[i] = n * params.p_state(StateSymbol::XPlus) * pk * ctx.x_landing(2, prep);
    }
    for kp in IntensityClass::ALL {
        for kc in IntensityClass::ALL {
            let w = n * params.p_intensity(kp) * params.p_intensity(kc);
            let a = |j: i64| match j {
                -1 => Prep::Fixed(StateSymbol::Z0, kp),
                0 => Prep::Fixed(StateSymbol::XPlus, kc),
                _ => Prep::Marginal,
            };
            let pa = params.p_state(StateSymbol::Z0) * params.p_state(StateSymbol::XPlus);
            t.n_x_side[kc.index()] = t.n_x_side[kc.index()] + w * pa * ctx.x_landing(0, a);
            let b = |j: i64| match j {
                -1 => Prep::Fixed(StateSymbol::XPlus, kp),
                0 => Prep::Fixed(StateSymbol::Z1, kc),
                _ => Prep::Marginal,
            };
            let pb = params.p_state(StateSymbol::XPlus) * params.p_state(StateSymbol::Z1);
            t.n_x_side[kp.index()] = t.n_x_side[kp.index()] + w * pb * ctx.x_landing(0, b);
        }
    }
    t
}

/// Throughput of the Z and X detectors under the run's marginal load.
pub fn detector_load<T: Real>(params: &ProtocolParams<T>, models: &PhysicsModels<T>) -> [DetectorThroughput<T>; 2] {
    let ctx = Ctx::new(params, models);
    [
        detector_throughput(ctx.z_candidates_per_round() * params.clock_rate, &models.detector_z),
        detector_throughput(ctx.x_candidates_per_round() * params.clock_rate, &models.detector_x),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_without_afterpulses_is_first_order_correction() {
        let det = DetectorModel { dead_time_s: 20e-6, ..DetectorModel::<f64>::ideal() };
        let t = detector_throughput(1e5, &det);
        assert!((t.acceptance * 1e5 - 1e5 / (1.0 + 1e5 * 20e-6)).abs() < 1e-6);
        assert_eq!(t.background_rate, 0.0);
    }

    #[test]
    fn throughput_counts_afterpulses() {
        // zero dead time: every event accepted, each spawns p afterpulses on average
        // geometric chain gives R p / (1 - p) extra
        let det = DetectorModel { afterpulse_prob: 0.1, ..DetectorModel::<f64>::ideal() };
        let t = detector_throughput(1000.0, &det);
        assert!((t.acceptance - 1.0).abs() < 1e-9, "{}", t.acceptance);
        assert!((t.afterpulse_rate - 1000.0 * 0.1 / 0.9).abs() < 1e-6 * 1000.0, "{}", t.afterpulse_rate);
    }

    #[test]
    fn ideal_superposition_has_no_central_errors() {
        let params = ProtocolParams::<f64>::with_intensities(0.5, 0.2);
        let t = analytic_tallies(&params, &PhysicsModels::ideal(), 1_000_000);
        assert_eq!(t.v_x, [0.0, 0.0]);
        assert_eq!(t.m_z, [0.0, 0.0]);
        assert!(t.n_z[0] > 0.0 && t.n_x_side[0] > 0.0);
    }
}
