use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use crate::error::Error;
use crate::protocol::{IntensityClass, StateSymbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

/// Receiver time bin a detection was assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectionBin {
    Early,
    Late,
    XEarlySide,
    XCentral,
    /// Late side peak of a round. It shares its grid bin with the early side
    /// peak of the next round, so the simulator always records such
    /// detections as `XEarlySide` of the following round.
    XLateSide,
}

impl DetectionBin {
    pub fn basis(self) -> Basis {
        match self {
            DetectionBin::Early | DetectionBin::Late => Basis::Z,
            _ => Basis::X,
        }
    }

    fn label(self) -> &'static str {
        match self {
            DetectionBin::Early => "EARLY",
            DetectionBin::Late => "LATE",
            DetectionBin::XEarlySide => "X_EARLY_SIDE",
            DetectionBin::XCentral => "X_CENTRAL",
            DetectionBin::XLateSide => "X_LATE_SIDE",
        }
    }
}

/// One detection as seen by Bob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectionRecord {
    pub round_index: u64,
    pub basis: Basis,
    pub bin: DetectionBin,
    pub time_ps: i64,
}

impl fmt::Display for DetectionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let basis = match self.basis {
            Basis::Z => "Z",
            Basis::X => "X",
        };
        write!(f, "{},{},{},{}", self.round_index, basis, self.bin.label(), self.time_ps)
    }
}

impl FromStr for DetectionRecord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Malformed(format!("detection record {s:?}"));
        let mut it = s.trim().split(',');
        let round_index = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let basis = match it.next() {
            Some("Z") => Basis::Z,
            Some("X") => Basis::X,
            _ => return Err(bad()),
        };
        let bin = match it.next() {
            Some("EARLY") => DetectionBin::Early,
            Some("LATE") => DetectionBin::Late,
            Some("X_EARLY_SIDE") => DetectionBin::XEarlySide,
            Some("X_CENTRAL") => DetectionBin::XCentral,
            Some("X_LATE_SIDE") => DetectionBin::XLateSide,
            _ => return Err(bad()),
        };
        let time_ps = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() || bin.basis() != basis {
            return Err(bad());
        }
        Ok(Self { round_index, basis, bin, time_ps })
    }
}

/// Sifted statistics per intensity class, indexed by [`IntensityClass::index`].
///
/// `C` is `u64` for observed counts and `f64` for expectations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tallies<C> {
    /// Z-basis detections in rounds where Alice sent a Z state.
    pub n_z: [C; 2],
    /// Those of `n_z` whose bit disagrees with Alice's.
    pub m_z: [C; 2],
    /// Conclusive early-side X detections, attributed to the superposition round.
    pub n_x_side: [C; 2],
    /// Central-bin X detections in rounds where Alice sent the superposition.
    pub v_x: [C; 2],
    /// Rounds sent, indexed by state code then intensity.
    pub sent: [[C; 2]; 3],
}

pub type TallyCounts = Tallies<u64>;
pub type ExpectedTallies = Tallies<f64>;

impl<C: Copy + Add<Output = C> + Default> Tallies<C> {
    pub fn n_z_total(&self) -> C {
        self.n_z[0] + self.n_z[1]
    }

    pub fn m_z_total(&self) -> C {
        self.m_z[0] + self.m_z[1]
    }

    pub fn n_x_side_total(&self) -> C {
        self.n_x_side[0] + self.n_x_side[1]
    }

    pub fn v_x_total(&self) -> C {
        self.v_x[0] + self.v_x[1]
    }

    pub fn sent_of(&self, s: StateSymbol, k: IntensityClass) -> C {
        self.sent[s.code() as usize][k.index()]
    }

    /// Every field flattened, with a stable name, for field-by-field comparisons.
    pub fn fields(&self) -> Vec<(String, C)> {
        let mut v = Vec::with_capacity(14);
        for k in IntensityClass::ALL {
            let i = k.index();
            v.push((format!("n_z[{k:?}]"), self.n_z[i]));
            v.push((format!("m_z[{k:?}]"), self.m_z[i]));
            v.push((format!("n_x_side[{k:?}]"), self.n_x_side[i]));
            v.push((format!("v_x[{k:?}]"), self.v_x[i]));
        }
        for s in StateSymbol::ALL {
            for k in IntensityClass::ALL {
                v.push((format!("sent[{s:?},{k:?}]"), self.sent[s.code() as usize][k.index()]));
            }
        }
        v
    }
}

impl<C: Copy + AddAssign> AddAssign for Tallies<C> {
    fn add_assign(&mut self, o: Self) {
        for i in 0..2 {
            self.n_z[i] += o.n_z[i];
            self.m_z[i] += o.m_z[i];
            self.n_x_side[i] += o.n_x_side[i];
            self.v_x[i] += o.v_x[i];
            for s in 0..3 {
                self.sent[s][i] += o.sent[s][i];
            }
        }
    }
}

impl<C: Copy + AddAssign> Add for Tallies<C> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl TallyCounts {
    pub fn to_expected(&self) -> ExpectedTallies {
        let f = |a: [u64; 2]| a.map(|v| v as f64);
        ExpectedTallies {
            n_z: f(self.n_z),
            m_z: f(self.m_z),
            n_x_side: f(self.n_x_side),
            v_x: f(self.v_x),
            sent: self.sent.map(f),
        }
    }
}

impl ExpectedTallies {
    pub fn scaled(&self, factor: f64) -> Self {
        let f = |a: [f64; 2]| a.map(|v| v * factor);
        Self { n_z: f(self.n_z), m_z: f(self.m_z), n_x_side: f(self.n_x_side), v_x: f(self.v_x), sent: self.sent.map(f) }
    }
}

/// Photon-number bookkeeping only a simulator can know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TruthCounts {
    /// Kept Z detections in rounds where Alice emitted no photon.
    pub z_vacuum: [u64; 2],
    /// Kept Z detections in rounds where Alice emitted exactly one photon.
    pub z_single: [u64; 2],
    /// Detected photons from single-photon superposition rounds in the
    /// central bin, at the monitored (error) port and at the unmonitored port.
    pub x1_central_error: u64,
    pub x1_central_correct: u64,
}

impl TruthCounts {
    pub fn z_vacuum_total(&self) -> u64 {
        self.z_vacuum[0] + self.z_vacuum[1]
    }

    pub fn z_single_total(&self) -> u64 {
        self.z_single[0] + self.z_single[1]
    }

    /// True phase error rate of single-photon events, if any were seen.
    pub fn single_photon_phase_error(&self) -> Option<f64> {
        let n = self.x1_central_error + self.x1_central_correct;
        (n > 0).then(|| self.x1_central_error as f64 / n as f64)
    }
}

impl AddAssign for TruthCounts {
    fn add_assign(&mut self, o: Self) {
        for i in 0..2 {
            self.z_vacuum[i] += o.z_vacuum[i];
            self.z_single[i] += o.z_single[i];
        }
        self.x1_central_error += o.x1_central_error;
        self.x1_central_correct += o.x1_central_correct;
    }
}

/// Where every accepted detector event ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectorStats {
    pub accepted: u64,
    pub from_signal: u64,
    pub from_dark: u64,
    pub from_afterpulse: u64,
    /// Landed in one of the two measurement bins of a round.
    pub in_measurement_bins: u64,
    /// Landed in an empty separation bin.
    pub in_empty_bins: u64,
    /// Landed outside the simulated or owned range of rounds.
    pub out_of_range: u64,
}

impl AddAssign for DetectorStats {
    fn add_assign(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.from_signal += o.from_signal;
        self.from_dark += o.from_dark;
        self.from_afterpulse += o.from_afterpulse;
        self.in_measurement_bins += o.in_measurement_bins;
        self.in_empty_bins += o.in_empty_bins;
        self.out_of_range += o.out_of_range;
    }
}
