//! Protocol constants, the three-state alphabet and Alice's per-round choices.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::scalar::Real;

/// Default pulse rate in pulses per second.
pub const CLOCK_RATE_HZ: f64 = 2.5e9;
/// Sampling grid of the receiver, in picoseconds.
pub const BIN_PS: u64 = 100;
/// Grid bins per qubit (early, empty, late, empty).
pub const BINS_PER_ROUND: u64 = 4;
/// Offset of the late time-bin inside a round, in bins.
pub const LATE_OFFSET: u64 = 2;
/// Qubit period at the default clock, in picoseconds.
pub const ROUND_PS: u64 = BIN_PS * BINS_PER_ROUND;

/// One of the three states Alice can prepare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateSymbol {
    /// Pulse in the early bin only: key bit 0.
    Z0,
    /// Pulse in the late bin only: key bit 1.
    Z1,
    /// Equal-weight coherent superposition of early and late.
    XPlus,
}

impl StateSymbol {
    pub const ALL: [StateSymbol; 3] = [StateSymbol::Z0, StateSymbol::Z1, StateSymbol::XPlus];

    /// Fraction of the round's mean photon number in the (early, late) bins.
    pub fn intensity_fractions<T: Real>(self) -> (T, T) {
        match self {
            StateSymbol::Z0 => (T::one(), T::zero()),
            StateSymbol::Z1 => (T::zero(), T::one()),
            StateSymbol::XPlus => (T::lit(0.5), T::lit(0.5)),
        }
    }

    pub fn is_z(self) -> bool {
        !matches!(self, StateSymbol::XPlus)
    }

    /// Key bit carried by a Z-basis state.
    pub fn z_bit(self) -> Option<bool> {
        match self {
            StateSymbol::Z0 => Some(false),
            StateSymbol::Z1 => Some(true),
            StateSymbol::XPlus => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            StateSymbol::Z0 => 0,
            StateSymbol::Z1 => 1,
            StateSymbol::XPlus => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(StateSymbol::Z0),
            1 => Some(StateSymbol::Z1),
            2 => Some(StateSymbol::XPlus),
            _ => None,
        }
    }
}

/// Signal (`Mu1`) or decoy (`Mu2`) intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntensityClass {
    Mu1,
    Mu2,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 2] = [IntensityClass::Mu1, IntensityClass::Mu2];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            IntensityClass::Mu1 => 0,
            IntensityClass::Mu2 => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(IntensityClass::Mu1),
            1 => Some(IntensityClass::Mu2),
            _ => None,
        }
    }
}

/// Protocol-level settings shared by both peers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams<T> {
    /// Probability that Alice prepares a Z-basis state.
    pub p_z_alice: T,
    /// Probability that Bob's passive splitter routes to the Z detector.
    pub p_z_bob: T,
    pub mu1: T,
    pub mu2: T,
    /// Probability of choosing `mu1`.
    pub p_mu1: T,
    /// Pulses per second.
    pub clock_rate: T,
    pub eps_sec: T,
    pub eps_cor: T,
}

impl<T: Real> ProtocolParams<T> {
    /// Laboratory settings with the given intensities: 90:10 basis choice on
    /// both sides, `p_mu1 = 0.6`, 2.5 GHz, and 1e-9 secrecy/correctness.
    pub fn with_intensities(mu1: T, mu2: T) -> Self {
        Self {
            p_z_alice: T::lit(0.9),
            p_z_bob: T::lit(0.9),
            mu1,
            mu2,
            p_mu1: T::lit(0.6),
            clock_rate: T::lit(CLOCK_RATE_HZ),
            eps_sec: T::lit(1e-9),
            eps_cor: T::lit(1e-9),
        }
    }

    /// Decoy set to half the signal, the ratio the laboratory hardware imposes.
    pub fn half_decoy(mu1: T) -> Self {
        Self::with_intensities(mu1, mu1 * T::lit(0.5))
    }

    pub fn p_x_alice(&self) -> T {
        T::one() - self.p_z_alice
    }

    pub fn p_x_bob(&self) -> T {
        T::one() - self.p_z_bob
    }

    pub fn p_mu2(&self) -> T {
        T::one() - self.p_mu1
    }

    pub fn mu(&self, k: IntensityClass) -> T {
        match k {
            IntensityClass::Mu1 => self.mu1,
            IntensityClass::Mu2 => self.mu2,
        }
    }

    pub fn p_intensity(&self, k: IntensityClass) -> T {
        match k {
            IntensityClass::Mu1 => self.p_mu1,
            IntensityClass::Mu2 => self.p_mu2(),
        }
    }

    /// Probability that Alice prepares `s`.
    pub fn p_state(&self, s: StateSymbol) -> T {
        match s {
            StateSymbol::Z0 | StateSymbol::Z1 => self.p_z_alice * T::lit(0.5),
            StateSymbol::XPlus => self.p_x_alice(),
        }
    }

    /// Round duration in seconds.
    pub fn period_s(&self) -> T {
        T::one() / self.clock_rate
    }

    /// Checks every invariant and returns the parameters unchanged.
    pub fn validate(self) -> Result<Self> {
        validate_params(self)
    }

    pub fn cast<U: Real>(&self) -> ProtocolParams<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        ProtocolParams {
            p_z_alice: c(self.p_z_alice),
            p_z_bob: c(self.p_z_bob),
            mu1: c(self.mu1),
            mu2: c(self.mu2),
            p_mu1: c(self.p_mu1),
            clock_rate: c(self.clock_rate),
            eps_sec: c(self.eps_sec),
            eps_cor: c(self.eps_cor),
        }
    }
}

fn open_probability<T: Real>(name: &str, v: T) -> Result<()> {
    if v.is_nan() || v <= T::zero() || v >= T::one() {
        return Err(Error::Validation(format!("{name}: probability out of range ({v})")));
    }
    Ok(())
}

/// Validates protocol parameters, reporting the first violated invariant.
pub fn validate_params<T: Real>(params: ProtocolParams<T>) -> Result<ProtocolParams<T>> {
    open_probability("p_z_alice", params.p_z_alice)?;
    open_probability("p_z_bob", params.p_z_bob)?;
    open_probability("p_mu1", params.p_mu1)?;
    open_probability("eps_sec", params.eps_sec)?;
    open_probability("eps_cor", params.eps_cor)?;
    if params.mu2.is_nan() || params.mu2 <= T::zero() {
        return Err(Error::Validation(format!("mu2 must be positive ({})", params.mu2)));
    }
    if params.mu1.is_nan() || params.mu1 > T::one() {
        return Err(Error::Validation(format!("mu1 must not exceed 1 ({})", params.mu1)));
    }
    if params.mu1 <= params.mu2 {
        return Err(Error::Validation("mu1 must exceed mu2".into()));
    }
    if !params.clock_rate.is_finite() || params.clock_rate <= T::zero() {
        return Err(Error::Validation(format!("clock_rate must be positive ({})", params.clock_rate)));
    }
    Ok(params)
}

/// Binary entropy in bits. Limits give 0 at both ends of the interval.
pub fn binary_entropy<T: Real>(p: T) -> Result<T> {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return Err(Error::Domain(format!("binary entropy needs p in [0,1], got {p}")));
    }
    if p == T::zero() || p == T::one() {
        return Ok(T::zero());
    }
    let q = T::one() - p;
    Ok(-(p * p.log2()) - q * q.log2())
}

/// Alice's choice for a single round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoundChoice {
    pub state: StateSymbol,
    pub intensity: IntensityClass,
    pub round_index: u64,
}

impl RoundChoice {
    /// Packs state and intensity into a nibble: bits 0-1 state, bit 2 intensity.
    pub fn to_nibble(&self) -> u8 {
        self.state.code() | ((self.intensity.index() as u8) << 2)
    }

    pub fn from_nibble(nibble: u8, round_index: u64) -> Option<Self> {
        if nibble & 0b1000 != 0 {
            return None;
        }
        Some(Self {
            state: StateSymbol::from_code(nibble & 0b11)?,
            intensity: IntensityClass::from_index(((nibble >> 2) & 1) as usize)?,
            round_index,
        })
    }
}

/// Draws the state and intensity for one round, independently of each other.
pub fn sample_round_choice<R: Rng + ?Sized>(params: &ProtocolParams<f64>, round_index: u64, rng: &mut R) -> RoundChoice {
    let u: f64 = rng.random();
    let state = if u < params.p_z_alice * 0.5 {
        StateSymbol::Z0
    } else if u < params.p_z_alice {
        StateSymbol::Z1
    } else {
        StateSymbol::XPlus
    };
    let v: f64 = rng.random();
    let intensity = if v < params.p_mu1 { IntensityClass::Mu1 } else { IntensityClass::Mu2 };
    RoundChoice { state, intensity, round_index }
}

/// Random-access source of Alice's choices.
pub trait ChoiceSource: Sync {
    fn choice(&self, round: u64) -> RoundChoice;
}

/// Alice's seeded choice stream: round `i` depends only on `(params, seed, i)`.
#[derive(Debug, Clone, Copy)]
pub struct SeededChoices {
    pub params: ProtocolParams<f64>,
    pub seed: u64,
}

impl SeededChoices {
    pub fn new(params: ProtocolParams<f64>, seed: u64) -> Self {
        Self { params, seed }
    }
}

impl ChoiceSource for SeededChoices {
    #[inline]
    fn choice(&self, round: u64) -> RoundChoice {
        let mut rng = rng::round_rng(self.seed, Domain::Choice, round);
        sample_round_choice(&self.params, round, &mut rng)
    }
}

impl ChoiceSource for [RoundChoice] {
    fn choice(&self, round: u64) -> RoundChoice {
        self[round as usize]
    }
}

impl ChoiceSource for Vec<RoundChoice> {
    fn choice(&self, round: u64) -> RoundChoice {
        self[round as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_row_200km() -> ProtocolParams<f64> {
        ProtocolParams::with_intensities(0.39, 0.18)
    }

    #[test]
    fn entropy_limits_and_peak() {
        assert_eq!(binary_entropy(0.0_f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0_f64).unwrap(), 0.0);
        assert!((binary_entropy(0.5_f64).unwrap() - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.5_f32).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn entropy_rejects_out_of_domain() {
        assert!(matches!(binary_entropy(-0.1_f64), Err(Error::Domain(_))));
        assert!(matches!(binary_entropy(1.5_f64), Err(Error::Domain(_))));
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn fractions_sum_to_one() {
        for s in StateSymbol::ALL {
            let (e, l) = s.intensity_fractions::<f64>();
            assert_eq!(e + l, 1.0);
        }
    }

    #[test]
    fn validation_messages() {
        assert!(validate_params(table_row_200km()).is_ok());

        let mut p = table_row_200km();
        p.mu1 = 0.2;
        p.mu2 = 0.2;
        let err = validate_params(p).unwrap_err().to_string();
        assert!(err.contains("mu1 must exceed mu2"), "{err}");

        let mut p = table_row_200km();
        p.p_z_alice = 1.2;
        let err = validate_params(p).unwrap_err().to_string();
        assert!(err.contains("probability out of range"), "{err}");

        let mut p = table_row_200km();
        p.mu1 = 1.3;
        assert!(validate_params(p).is_err());
        let mut p = table_row_200km();
        p.eps_sec = 0.0;
        assert!(validate_params(p).is_err());
    }

    #[test]
    fn degenerate_probabilities() {
        // Sampling does not require validated params, so the degenerate
        // distributions can be checked directly.
        let mut p = table_row_200km();
        p.p_z_alice = 1.0;
        p.p_mu1 = 1.0;
        let src = SeededChoices::new(p, 11);
        for r in 0..10_000 {
            let c = src.choice(r);
            assert!(c.state.is_z());
            assert_eq!(c.intensity, IntensityClass::Mu1);
        }
    }

    #[test]
    fn nibble_round_trip() {
        for s in StateSymbol::ALL {
            for k in IntensityClass::ALL {
                let c = RoundChoice { state: s, intensity: k, round_index: 9 };
                assert_eq!(RoundChoice::from_nibble(c.to_nibble(), 9), Some(c));
            }
        }
        assert_eq!(RoundChoice::from_nibble(0b0011, 0), None);
        assert_eq!(RoundChoice::from_nibble(0b1000, 0), None);
    }
}
