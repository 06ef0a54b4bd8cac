//! Parametric models of the fiber, the source, Bob's interferometer and the
//! single-photon detectors.
//!
//! Time is measured on the receiver's sampling grid: four bins per qubit
//! (early, empty, late, empty). Bob's X interferometer delays by two bins,
//! so the late side peak of round `i` shares a bin with the early side peak
//! of round `i + 1`. Only the destructive output port is monitored.

mod detector;
mod kernel;

pub use detector::{apply_detector, Accepted, DetectorStream, EventSource};
pub use kernel::JitterKernel;

use crate::error::{Error, Result};
use crate::protocol::{ProtocolParams, RoundChoice, StateSymbol};
use crate::scalar::Real;

/// Lossy fiber link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel<T> {
    pub length_km: T,
    pub atten_db_per_km: T,
}

impl<T: Real> ChannelModel<T> {
    pub fn new(length_km: T) -> Self {
        Self { length_km, atten_db_per_km: T::lit(0.2) }
    }

    /// Channel with a prescribed total loss spread over `length_km`.
    pub fn with_total_loss(length_km: T, loss_db: T) -> Self {
        let atten = if length_km > T::zero() { loss_db / length_km } else { T::zero() };
        Self { length_km, atten_db_per_km: atten }
    }

    pub fn total_loss_db(&self) -> T {
        self.length_km * self.atten_db_per_km
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= T::zero()) || !(self.atten_db_per_km >= T::zero()) {
            return Err(Error::Validation("channel length and attenuation must be non-negative".into()));
        }
        Ok(())
    }
}

/// Transmittance of the channel, `10^(-loss/10)`.
pub fn transmittance<T: Real>(channel: &ChannelModel<T>) -> T {
    T::lit(10.0).powf(-channel.total_loss_db() / T::lit(10.0))
}

/// Imperfections of Alice's intensity modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceImperfection<T> {
    /// Probability that the nominally empty bin of a Z state carries the
    /// full pulse intensity.
    pub extinction_error: T,
    /// Relative standard deviation of the realized mean photon number.
    pub intensity_jitter_rel: T,
}

impl<T: Real> SourceImperfection<T> {
    pub fn ideal() -> Self {
        Self { extinction_error: T::zero(), intensity_jitter_rel: T::zero() }
    }

    pub fn validate(&self) -> Result<()> {
        let cap = T::lit(0.2);
        for (name, v) in [("extinction_error", self.extinction_error), ("intensity_jitter_rel", self.intensity_jitter_rel)] {
            if !(v >= T::zero() && v <= cap) {
                return Err(Error::Validation(format!("{name} must lie in [0, 0.2] ({v})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferometerModel<T> {
    pub visibility: T,
    /// Arm delay; always half the qubit period.
    pub delay_ps: u64,
}

impl<T: Real> InterferometerModel<T> {
    pub fn new(visibility: T) -> Self {
        Self { visibility, delay_ps: 200 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.visibility >= T::zero() && self.visibility <= T::one()) {
            return Err(Error::Validation(format!("visibility must lie in [0,1] ({})", self.visibility)));
        }
        if self.delay_ps != 200 {
            return Err(Error::Validation("interferometer delay must be half the 400 ps period".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for InterferometerModel<T> {
    fn default() -> Self {
        Self::new(T::lit(0.995))
    }
}

/// Free-running single-photon detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel<T> {
    pub efficiency: T,
    pub dcr_cps: T,
    pub dead_time_s: T,
    /// Probability that an accepted detection triggers an afterpulse.
    pub afterpulse_prob: T,
    /// Mean of the exponential afterpulse delay.
    pub afterpulse_delay_s: T,
    pub jitter_sigma_ps: T,
}

impl<T: Real> DetectorModel<T> {
    /// Noiseless detector with unit efficiency and no dead time.
    pub fn ideal() -> Self {
        Self {
            efficiency: T::one(),
            dcr_cps: T::zero(),
            dead_time_s: T::zero(),
            afterpulse_prob: T::zero(),
            afterpulse_delay_s: T::lit(10e-6),
            jitter_sigma_ps: T::zero(),
        }
    }

    pub fn validate(&self, which: &str) -> Result<()> {
        let bad = |what: String| Err(Error::Validation(format!("{which} detector: {what}")));
        if !(self.efficiency >= T::zero() && self.efficiency <= T::one()) {
            return bad(format!("efficiency must lie in [0,1] ({})", self.efficiency));
        }
        if !(self.dcr_cps >= T::zero()) || !self.dcr_cps.is_finite() {
            return bad(format!("dark count rate must be non-negative ({})", self.dcr_cps));
        }
        if !(self.dead_time_s >= T::zero()) || !self.dead_time_s.is_finite() {
            return bad(format!("dead time must be non-negative ({})", self.dead_time_s));
        }
        if !(self.afterpulse_prob >= T::zero() && self.afterpulse_prob <= T::lit(0.2)) {
            return bad(format!("afterpulse probability must lie in [0, 0.2] ({})", self.afterpulse_prob));
        }
        if !(self.afterpulse_delay_s > T::zero()) {
            return bad("afterpulse delay must be positive".into());
        }
        if !(self.jitter_sigma_ps >= T::zero()) || !self.jitter_sigma_ps.is_finite() {
            return bad(format!("jitter must be non-negative ({})", self.jitter_sigma_ps));
        }
        Ok(())
    }
}

/// Everything between Alice's modulator and Bob's time tagger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsModels<T> {
    pub channel: ChannelModel<T>,
    pub source: SourceImperfection<T>,
    pub interferometer: InterferometerModel<T>,
    pub detector_z: DetectorModel<T>,
    pub detector_x: DetectorModel<T>,
}

impl<T: Real> PhysicsModels<T> {
    /// Zero-length link, perfect source and interferometer, ideal detectors.
    pub fn ideal() -> Self {
        Self {
            channel: ChannelModel { length_km: T::zero(), atten_db_per_km: T::lit(0.2) },
            source: SourceImperfection::ideal(),
            interferometer: InterferometerModel::new(T::one()),
            detector_z: DetectorModel::ideal(),
            detector_x: DetectorModel::ideal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.source.validate()?;
        self.interferometer.validate()?;
        self.detector_z.validate("Z")?;
        self.detector_x.validate("X")?;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> PhysicsModels<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        let det = |d: &DetectorModel<T>| DetectorModel {
            efficiency: c(d.efficiency),
            dcr_cps: c(d.dcr_cps),
            dead_time_s: c(d.dead_time_s),
            afterpulse_prob: c(d.afterpulse_prob),
            afterpulse_delay_s: c(d.afterpulse_delay_s),
            jitter_sigma_ps: c(d.jitter_sigma_ps),
        };
        PhysicsModels {
            channel: ChannelModel { length_km: c(self.channel.length_km), atten_db_per_km: c(self.channel.atten_db_per_km) },
            source: SourceImperfection {
                extinction_error: c(self.source.extinction_error),
                intensity_jitter_rel: c(self.source.intensity_jitter_rel),
            },
            interferometer: InterferometerModel {
                visibility: c(self.interferometer.visibility),
                delay_ps: self.interferometer.delay_ps,
            },
            detector_z: det(&self.detector_z),
            detector_x: det(&self.detector_x),
        }
    }
}

/// Mean photon numbers in the early and late bins of one emitted round.
///
/// `coherent` marks the superposition state, whose two pulses interfere in
/// the central bin of Bob's interferometer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionPattern<T> {
    pub early: T,
    pub late: T,
    pub coherent: bool,
}

impl<T: Real> EmissionPattern<T> {
    pub fn vacuum() -> Self {
        Self { early: T::zero(), late: T::zero(), coherent: false }
    }

    /// Nominal pattern of `state` at mean photon number `mu`, optionally
    /// with the empty bin of a Z state leaking the full intensity.
    pub fn of(state: StateSymbol, mu: T, leaked: bool) -> Self {
        let (fe, fl) = state.intensity_fractions::<T>();
        match state {
            StateSymbol::XPlus => Self { early: mu * fe, late: mu * fl, coherent: true },
            _ if leaked => Self { early: mu, late: mu, coherent: false },
            _ => Self { early: mu * fe, late: mu * fl, coherent: false },
        }
    }

    pub fn total(&self) -> T {
        self.early + self.late
    }

    /// Mean photon number at the destructive port in the central bin.
    pub fn central_destructive(&self, visibility: T) -> T {
        let quarter = T::lit(0.25);
        if self.coherent {
            (self.early + self.late) * quarter - visibility * (self.early * self.late).sqrt() * T::lit(0.5)
        } else {
            (self.early + self.late) * quarter
        }
    }
}

/// Mean photon numbers reaching the destructive X port, per bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XSlotMeans<T> {
    pub early_side: T,
    pub central: T,
    pub late_side: T,
}

/// Destructive-port means for the current round's three X bins. The early
/// side bin also collects the previous round's late pulse through the long
/// arm; the late side bin holds only the current round's own contribution.
pub fn x_slot_means<T: Real>(prev: &EmissionPattern<T>, curr: &EmissionPattern<T>, visibility: T) -> XSlotMeans<T> {
    let quarter = T::lit(0.25);
    XSlotMeans {
        early_side: (curr.early + prev.late) * quarter,
        central: curr.central_destructive(visibility),
        late_side: curr.late * quarter,
    }
}

/// Probability of at least one detected photon for mean `m` at per-photon
/// detection probability `a`.
#[inline]
pub fn click_from_mean<T: Real>(m: T, a: T) -> T {
    -(-(m * a)).exp_m1()
}

/// Dark-count probability in one grid bin.
pub fn dark_probability<T: Real>(dcr_cps: T, bin_s: T) -> T {
    -(-(dcr_cps * bin_s)).exp_m1()
}

/// Union of independent events.
#[inline]
pub fn either<T: Real>(p: T, q: T) -> T {
    T::one() - (T::one() - p) * (T::one() - q)
}

/// Duration of one grid bin in seconds.
pub fn bin_seconds<T: Real>(params: &ProtocolParams<T>) -> T {
    params.period_s() / T::lit(4.0)
}

/// Per-photon detection probability on the Z detector.
pub fn z_detection_scale<T: Real>(params: &ProtocolParams<T>, models: &PhysicsModels<T>) -> T {
    transmittance(&models.channel) * params.p_z_bob * models.detector_z.efficiency
}

/// Per-photon detection probability on the X detector, before the
/// interferometer's port and path split.
pub fn x_detection_scale<T: Real>(params: &ProtocolParams<T>, models: &PhysicsModels<T>) -> T {
    transmittance(&models.channel) * params.p_x_bob() * models.detector_x.efficiency
}

/// Click probabilities of the early and late Z bins for one round.
///
/// The occupied bin clicks on any detected photon; the empty bin of a Z
/// state clicks through extinction leakage. Dark counts are composed as an
/// independent event in every bin.
pub fn z_click_probability<T: Real>(choice: &RoundChoice, params: &ProtocolParams<T>, models: &PhysicsModels<T>) -> (T, T) {
    let a = z_detection_scale(params, models);
    let mu = params.mu(choice.intensity);
    let dark = dark_probability(models.detector_z.dcr_cps, bin_seconds(params));
    let (fe, fl) = choice.state.intensity_fractions::<T>();
    let eps = models.source.extinction_error;
    let bin = |frac: T| {
        let signal = if frac > T::zero() {
            click_from_mean(mu * frac, a)
        } else if choice.state.is_z() {
            eps * click_from_mean(mu, a)
        } else {
            T::zero()
        };
        either(signal, dark)
    };
    (bin(fe), bin(fl))
}

/// Click probabilities for the (early side, central, late side) X bins of
/// `curr`, given the preceding round `prev` whose late pulse overlaps the
/// early side bin. Extinction leakage is averaged over.
pub fn x_bin_probabilities<T: Real>(
    prev: &RoundChoice,
    curr: &RoundChoice,
    params: &ProtocolParams<T>,
    models: &PhysicsModels<T>,
) -> [T; 3] {
    let a = x_detection_scale(params, models);
    let v = models.interferometer.visibility;
    let dark = dark_probability(models.detector_x.dcr_cps, bin_seconds(params));
    let eps = models.source.extinction_error;
    let variants = |c: &RoundChoice| -> Vec<(T, EmissionPattern<T>)> {
        let mu = params.mu(c.intensity);
        if c.state.is_z() && eps > T::zero() {
            vec![(T::one() - eps, EmissionPattern::of(c.state, mu, false)), (eps, EmissionPattern::of(c.state, mu, true))]
        } else {
            vec![(T::one(), EmissionPattern::of(c.state, mu, false))]
        }
    };
    let mut out = [T::zero(); 3];
    for (wp, p) in variants(prev) {
        for (wc, c) in variants(curr) {
            let m = x_slot_means(&p, &c, v);
            let w = wp * wc;
            out[0] = out[0] + w * click_from_mean(m.early_side, a);
            out[1] = out[1] + w * click_from_mean(m.central, a);
            out[2] = out[2] + w * click_from_mean(m.late_side, a);
        }
    }
    out.map(|p| either(p, dark))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::IntensityClass;

    fn choice(state: StateSymbol) -> RoundChoice {
        RoundChoice { state, intensity: IntensityClass::Mu1, round_index: 0 }
    }

    #[test]
    fn transmittance_cases() {
        assert_eq!(transmittance(&ChannelModel::new(0.0_f64)), 1.0);
        let ten_db = ChannelModel { length_km: 50.0_f64, atten_db_per_km: 0.2 };
        assert!((transmittance(&ten_db) - 0.1).abs() < 1e-15);
        let row = ChannelModel::with_total_loss(202.1_f64, 40.2);
        let t = transmittance(&row);
        assert!((t / 9.55e-5 - 1.0).abs() < 0.01, "{t}");
        let t32 = transmittance(&ChannelModel::with_total_loss(202.1_f32, 40.2));
        assert!((t32 / 9.55e-5 - 1.0).abs() < 0.01);
    }

    #[test]
    fn vacuum_without_noise_never_clicks() {
        let mut params = ProtocolParams::<f64>::with_intensities(0.39, 0.18);
        params.mu1 = 0.0;
        let models = PhysicsModels::<f64>::ideal();
        assert_eq!(z_click_probability(&choice(StateSymbol::Z0), &params, &models), (0.0, 0.0));
    }

    #[test]
    fn dark_counts_only() {
        let params = ProtocolParams::<f64>::with_intensities(0.39, 0.18);
        let mut models = PhysicsModels::<f64>::ideal();
        models.detector_z.efficiency = 0.0;
        models.detector_z.dcr_cps = 100.0;
        let (e, l) = z_click_probability(&choice(StateSymbol::Z1), &params, &models);
        assert!((e - 1e-8).abs() < 1e-14 && (l - 1e-8).abs() < 1e-14, "{e} {l}");
    }

    #[test]
    fn perfect_visibility_cancels_central_bin() {
        let params = ProtocolParams::<f64>::with_intensities(0.39, 0.18);
        let models = PhysicsModels::<f64>::ideal();
        let p = x_bin_probabilities(&choice(StateSymbol::Z0), &choice(StateSymbol::XPlus), &params, &models);
        assert_eq!(p[1], 0.0);
        assert!(p[0] > 0.0 && p[2] > 0.0);
    }

    #[test]
    fn visibility_defect_sets_central_mean() {
        let pat = EmissionPattern::of(StateSymbol::XPlus, 0.4_f64, false);
        let m = pat.central_destructive(0.99);
        // mu * (1 - V) / 2, times the one-half path factor
        assert!((m - 0.4 * 0.01 / 2.0 * 0.5).abs() < 1e-15);
        assert!(m > 0.0);
    }
}
