//! Sifting: key bits from Z detections, conclusive side-peak events and
//! observed error rates.

use std::collections::HashSet;

use num_traits::Num;
use rand::Rng;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::protocol::{ChoiceSource, IntensityClass, StateSymbol};
use crate::rng::{round_rng, Domain};
use crate::sim::{DetectionBin, DetectionRecord, TallyCounts};

/// Raw key material after basis sifting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiftedBlock {
    pub alice_bits: Bits,
    pub bob_bits: Bits,
    pub round_indices: Vec<u64>,
    pub tallies: TallyCounts,
}

impl SiftedBlock {
    pub fn len(&self) -> usize {
        self.round_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.round_indices.is_empty()
    }

    pub fn bit_errors(&self) -> usize {
        (self.alice_bits.clone() ^ self.bob_bits.clone()).count_ones()
    }
}

/// Bob's bit for one Z round: early gives 0, late gives 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZClick {
    pub round_index: u64,
    pub bit: bool,
    pub double: bool,
}

/// Groups Z detections by round, one result per round with any Z click,
/// in increasing round order. Double clicks get a seeded random bit.
pub fn resolve_z_clicks(detections: &[DetectionRecord], double_click_seed: u64) -> Vec<ZClick> {
    let mut z: Vec<(u64, bool)> = detections
        .iter()
        .filter_map(|d| match d.bin {
            DetectionBin::Early => Some((d.round_index, false)),
            DetectionBin::Late => Some((d.round_index, true)),
            _ => None,
        })
        .collect();
    z.sort_unstable();
    let mut out: Vec<ZClick> = Vec::with_capacity(z.len());
    let mut i = 0;
    while i < z.len() {
        let r = z[i].0;
        let mut early = false;
        let mut late = false;
        while i < z.len() && z[i].0 == r {
            early |= !z[i].1;
            late |= z[i].1;
            i += 1;
        }
        let double = early && late;
        let bit = if double { round_rng(double_click_seed, Domain::DoubleClick, r).random::<bool>() } else { late };
        out.push(ZClick { round_index: r, bit, double });
    }
    out
}

/// Key sifting of Z detections against Alice's choices. Rounds where
/// Alice sent the superposition state are discarded.
pub fn sift_z<C: ChoiceSource + ?Sized>(detections: &[DetectionRecord], alice: &C, double_click_seed: u64) -> SiftedBlock {
    let clicks = resolve_z_clicks(detections, double_click_seed);
    let mut block = SiftedBlock::default();
    for c in clicks {
        let a = alice.choice(c.round_index);
        let Some(abit) = a.state.z_bit() else { continue };
        let k = a.intensity.index();
        block.tallies.n_z[k] += 1;
        if abit != c.bit {
            block.tallies.m_z[k] += 1;
        }
        block.alice_bits.push(abit);
        block.bob_bits.push(c.bit);
        block.round_indices.push(c.round_index);
    }
    block
}

/// Intensity a conclusive early-side detection is attributed to, if the
/// `(prev, curr)` pattern is conclusive.
pub fn conclusive_attribution(
    prev: StateSymbol,
    prev_k: IntensityClass,
    curr: StateSymbol,
    curr_k: IntensityClass,
) -> Option<IntensityClass> {
    match (prev, curr) {
        (StateSymbol::Z0, StateSymbol::XPlus) => Some(curr_k),
        (StateSymbol::XPlus, StateSymbol::Z1) => Some(prev_k),
        _ => None,
    }
}

/// Conclusive early-side X detections per intensity. Round 0 has no
/// predecessor and is never conclusive.
pub fn conclusive_x_side<C: ChoiceSource + ?Sized>(detections: &[DetectionRecord], alice: &C) -> [u64; 2] {
    let mut out = [0u64; 2];
    for d in detections.iter().filter(|d| d.bin == DetectionBin::XEarlySide && d.round_index > 0) {
        let p = alice.choice(d.round_index - 1);
        let c = alice.choice(d.round_index);
        if let Some(k) = conclusive_attribution(p.state, p.intensity, c.state, c.intensity) {
            out[k.index()] += 1;
        }
    }
    out
}

/// Central-bin X detections in rounds where Alice sent the superposition.
pub fn x_central_errors<C: ChoiceSource + ?Sized>(detections: &[DetectionRecord], alice: &C) -> [u64; 2] {
    let mut out = [0u64; 2];
    for d in detections.iter().filter(|d| d.bin == DetectionBin::XCentral) {
        let c = alice.choice(d.round_index);
        if c.state == StateSymbol::XPlus {
            out[c.intensity.index()] += 1;
        }
    }
    out
}

/// Full sifting of a detection log; `sent` is left at zero.
pub fn sift_all<C: ChoiceSource + ?Sized>(detections: &[DetectionRecord], alice: &C, double_click_seed: u64) -> SiftedBlock {
    let mut block = sift_z(detections, alice, double_click_seed);
    block.tallies.n_x_side = conclusive_x_side(detections, alice);
    block.tallies.v_x = x_central_errors(detections, alice);
    block
}

/// Z round whose bit an announced conclusive pattern at round `r`
/// discloses: `(Z0, X+)` reveals `r - 1`, `(X+, Z1)` reveals `r`.
pub fn revealed_z_round(prev: StateSymbol, curr: StateSymbol, r: u64) -> Option<u64> {
    match (prev, curr) {
        (StateSymbol::Z0, StateSymbol::XPlus) => Some(r - 1),
        (StateSymbol::XPlus, StateSymbol::Z1) => Some(r),
        _ => None,
    }
}

/// Removes sifted bits whose value the conclusive announcements disclose
/// and recounts `n_z` and `m_z`.
pub fn drop_revealed<C: ChoiceSource + ?Sized>(block: SiftedBlock, detections: &[DetectionRecord], alice: &C) -> SiftedBlock {
    let revealed: HashSet<u64> = detections
        .iter()
        .filter(|d| d.bin == DetectionBin::XEarlySide && d.round_index > 0)
        .filter_map(|d| revealed_z_round(alice.choice(d.round_index - 1).state, alice.choice(d.round_index).state, d.round_index))
        .collect();
    let mut out = SiftedBlock { tallies: block.tallies, ..Default::default() };
    out.tallies.n_z = [0; 2];
    out.tallies.m_z = [0; 2];
    for (i, &r) in block.round_indices.iter().enumerate() {
        if revealed.contains(&r) {
            continue;
        }
        let k = alice.choice(r).intensity.index();
        let (a, b) = (block.alice_bits[i], block.bob_bits[i]);
        out.tallies.n_z[k] += 1;
        out.tallies.m_z[k] += u64::from(a != b);
        out.alice_bits.push(a);
        out.bob_bits.push(b);
        out.round_indices.push(r);
    }
    out
}

/// Estimated number of X-basis detections from the conclusive side-peak
/// count: `n_side / (p_z_alice / 4)`.
pub fn estimate_n_x<T: Num + Copy>(n_side: T, p_z_alice: T) -> Result<T> {
    if p_z_alice == T::zero() {
        return Err(Error::Domain("p_z_alice must be positive".into()));
    }
    let two = T::one() + T::one();
    Ok(n_side * two * two / p_z_alice)
}

fn rate(num: f64, den: f64, what: &'static str) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::UndefinedRate(what))
    }
}

/// Observed Z-basis error rate.
pub fn q_z(tallies: &TallyCounts) -> Result<f64> {
    rate(tallies.m_z_total() as f64, tallies.n_z_total() as f64, "Q_Z: no Z detections")
}

/// Observed X-basis error rate from conclusive statistics.
pub fn q_x(tallies: &TallyCounts, p_z_alice: f64) -> Result<f64> {
    let n_x = estimate_n_x(tallies.n_x_side_total() as f64, p_z_alice)?;
    rate(tallies.v_x_total() as f64, n_x, "Q_X: no conclusive X detections")
}

pub fn qber_stats(tallies: &TallyCounts, p_z_alice: f64) -> Result<(f64, f64)> {
    Ok((q_z(tallies)?, q_x(tallies, p_z_alice)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::RoundChoice;
    use crate::sim::Basis;

    fn rc(state: StateSymbol, k: IntensityClass, i: u64) -> RoundChoice {
        RoundChoice { state, intensity: k, round_index: i }
    }

    fn det(round: u64, bin: DetectionBin) -> DetectionRecord {
        let off = match bin {
            DetectionBin::Early | DetectionBin::XEarlySide => 0,
            DetectionBin::Late | DetectionBin::XCentral => 2,
            DetectionBin::XLateSide => 4,
        };
        DetectionRecord { round_index: round, basis: bin.basis(), bin, time_ps: (round as i64 * 4 + off) * 100 }
    }

    use IntensityClass::*;
    use StateSymbol::*;

    #[test]
    fn z_sifting_cases() {
        let alice = vec![rc(Z0, Mu1, 0), rc(XPlus, Mu1, 1), rc(Z1, Mu2, 2)];
        let dets = [det(0, DetectionBin::Early), det(1, DetectionBin::Late), det(2, DetectionBin::Early)];
        let b = sift_z(&dets, &alice, 0);
        assert_eq!(b.round_indices, vec![0, 2]);
        assert_eq!(b.tallies.n_z, [1, 1]);
        assert_eq!(b.tallies.m_z, [0, 1]);
        assert_eq!(b.alice_bits.iter().map(|b| *b).collect::<Vec<_>>(), vec![false, true]);
        assert_eq!(b.bob_bits.iter().map(|b| *b).collect::<Vec<_>>(), vec![false, false]);
        assert_eq!(b.bit_errors(), 1);
    }

    #[test]
    fn double_click_counted_once_with_seeded_bit() {
        let alice = vec![rc(Z0, Mu1, 0)];
        let dets = [det(0, DetectionBin::Late), det(0, DetectionBin::Early)];
        let a = sift_z(&dets, &alice, 7);
        assert_eq!(a.len(), 1);
        assert_eq!(a, sift_z(&dets, &alice, 7));
        let bits: Vec<bool> = (0..64).map(|s| resolve_z_clicks(&dets, s)[0].bit).collect();
        assert!(bits.iter().any(|b| *b) && bits.iter().any(|b| !*b));
    }

    #[test]
    fn conclusive_patterns() {
        let alice = vec![rc(Z0, Mu2, 0), rc(XPlus, Mu1, 1), rc(Z1, Mu2, 2), rc(XPlus, Mu2, 3), rc(Z1, Mu1, 4)];
        // (Z0, X+) counted on curr; (X+, Z1) counted on prev; (Z1, X+) dropped
        let dets = [
            det(0, DetectionBin::XEarlySide),
            det(1, DetectionBin::XEarlySide),
            det(2, DetectionBin::XEarlySide),
            det(3, DetectionBin::XEarlySide),
            det(4, DetectionBin::XEarlySide),
        ];
        assert_eq!(conclusive_x_side(&dets, &alice), [2, 1]);
        assert!(conclusive_x_side(&dets, &alice).iter().sum::<u64>() <= dets.len() as u64);
    }

    #[test]
    fn revealed_rounds_leave_the_key() {
        let alice = vec![rc(Z0, Mu1, 0), rc(XPlus, Mu1, 1), rc(Z1, Mu2, 2), rc(Z1, Mu1, 3), rc(Z0, Mu1, 4)];
        let dets = [
            det(0, DetectionBin::Early),
            det(1, DetectionBin::XEarlySide),
            det(2, DetectionBin::Late),
            det(2, DetectionBin::XEarlySide),
            det(3, DetectionBin::Early),
            det(4, DetectionBin::Early),
        ];
        let full = sift_all(&dets, &alice, 0);
        assert_eq!(full.round_indices, vec![0, 2, 3, 4]);
        let kept = drop_revealed(full.clone(), &dets, &alice);
        assert_eq!(kept.round_indices, vec![3, 4]);
        assert_eq!(kept.tallies.n_z, [2, 0]);
        assert_eq!(kept.tallies.m_z, [1, 0]);
        assert_eq!(kept.tallies.n_x_side, full.tallies.n_x_side);
        assert_eq!(revealed_z_round(Z1, XPlus, 5), None);
    }

    #[test]
    fn central_errors_only_for_superposition() {
        let alice = vec![rc(Z0, Mu1, 0), rc(XPlus, Mu2, 1)];
        let dets = [det(0, DetectionBin::XCentral), det(1, DetectionBin::XCentral)];
        assert_eq!(x_central_errors(&dets, &alice), [0, 1]);
        assert_eq!(dets[1].basis, Basis::X);
    }

    #[test]
    fn n_x_estimate_examples() {
        assert_eq!(estimate_n_x(225.0, 0.9).unwrap(), 1000.0);
        assert_eq!(estimate_n_x(0.0, 0.9).unwrap(), 0.0);
        assert!((estimate_n_x(900.0_f64, 0.9).unwrap() - 4000.0).abs() < 1e-9);
        assert!(matches!(estimate_n_x(1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn error_rates() {
        let mut t = TallyCounts::default();
        assert!(matches!(q_z(&t), Err(Error::UndefinedRate(_))));
        t.n_z = [50, 50];
        assert_eq!(q_z(&t).unwrap(), 0.0);
        t.v_x = [20, 5];
        t.n_x_side = [200, 25];
        let (_, qx) = qber_stats(&t, 0.9).unwrap();
        assert!((qx - 0.025).abs() < 1e-15);
    }
}
