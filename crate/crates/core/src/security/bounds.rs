use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::protocol::{binary_entropy, IntensityClass, ProtocolParams};
use crate::scalar::Real;
use crate::sifting::estimate_n_x;
use crate::sim::Tallies;

/// Uses of a concentration inequality or hashing step, each granted
/// `eps_sec / EPS_TERMS` of the secrecy budget.
pub const EPS_BUDGET: [(&str, u32); 8] = [
    ("n_z +/- per intensity", 4),
    ("n_x +/- per intensity", 4),
    ("m_x +/- per intensity", 4),
    ("m_z + for the vacuum upper bound, per basis", 2),
    ("sampling term of the vacuum upper bound, per basis", 2),
    ("conclusive-event extrapolation of n_x", 1),
    ("phase error sampling", 1),
    ("leftover hash", 1),
];

pub const EPS_TERMS: u32 = {
    let mut s = 0;
    let mut i = 0;
    while i < EPS_BUDGET.len() {
        s += EPS_BUDGET[i].1;
        i += 1;
    }
    s
};

const _: () = assert!(EPS_TERMS == 19);

/// Observed counts per basis and intensity, indexed by [`IntensityClass::index`].
///
/// `n_x` is the estimated X-basis detection count and `m_x` the X errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BasisCounts<T> {
    pub n_z: [T; 2],
    pub m_z: [T; 2],
    pub n_x: [T; 2],
    pub m_x: [T; 2],
}

impl<T: Real> BasisCounts<T> {
    pub fn from_tallies<C: Copy + ToPrimitive>(t: &Tallies<C>, p_z_alice: T) -> Result<Self> {
        let c = |a: [C; 2]| a.map(|v| T::lit(v.to_f64().unwrap_or(f64::NAN)));
        let side = c(t.n_x_side);
        Ok(Self {
            n_z: c(t.n_z),
            m_z: c(t.m_z),
            n_x: [estimate_n_x(side[0], p_z_alice)?, estimate_n_x(side[1], p_z_alice)?],
            m_x: c(t.v_x),
        })
    }

    /// Counts scaled by a common factor.
    pub fn scaled(&self, f: T) -> Self {
        let s = |a: [T; 2]| a.map(|v| v * f);
        Self { n_z: s(self.n_z), m_z: s(self.m_z), n_x: s(self.n_x), m_x: s(self.m_x) }
    }
}

fn sum<T: Real>(a: [T; 2]) -> T {
    a[0] + a[1]
}

/// Hoeffding half-width `sqrt(N/2 ln(1/eps'))` for a total of `n` events.
pub fn hoeffding_delta<T: Real>(n: T, eps_prime: T) -> T {
    (n * T::lit(0.5) * (T::one() / eps_prime).ln()).sqrt()
}

/// Rescaled count bounds `e^mu_k / p_k (count +/- delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FiniteCountBounds<T> {
    pub n_z_plus: [T; 2],
    pub n_z_minus: [T; 2],
    pub m_z_plus: [T; 2],
    pub m_z_minus: [T; 2],
    pub n_x_plus: [T; 2],
    pub n_x_minus: [T; 2],
    pub m_x_plus: [T; 2],
    pub m_x_minus: [T; 2],
    /// Raw totals the bounds were computed from.
    pub totals: BasisCounts<T>,
    pub n_z_total: T,
    pub n_x_total: T,
    /// Hoeffding half-widths for the four totals (n_z, m_z, n_x, m_x).
    pub delta: [T; 4],
}

/// Per-use failure probability `eps_sec / 19`.
pub fn eps_prime<T: Real>(params: &ProtocolParams<T>) -> T {
    params.eps_sec / T::lit(EPS_TERMS as f64)
}

pub fn finite_count_bounds<T: Real>(counts: &BasisCounts<T>, params: &ProtocolParams<T>) -> Result<FiniteCountBounds<T>> {
    let nz = sum(counts.n_z);
    let nx = sum(counts.n_x);
    if !(nz > T::zero()) {
        return Err(Error::InsufficientStatistics("no Z-basis detections"));
    }
    if !(nx > T::zero()) {
        return Err(Error::InsufficientStatistics("no X-basis detections"));
    }
    Ok(finite_count_bounds_unchecked(counts, params))
}

fn finite_count_bounds_unchecked<T: Real>(counts: &BasisCounts<T>, params: &ProtocolParams<T>) -> FiniteCountBounds<T> {
    let e = eps_prime(params);
    let d = [sum(counts.n_z), sum(counts.m_z), sum(counts.n_x), sum(counts.m_x)].map(|n| hoeffding_delta(n, e));
    let scale = |k: usize| {
        let kc = IntensityClass::from_index(k).expect("two classes");
        params.mu(kc).exp() / params.p_intensity(kc)
    };
    let pm = |c: [T; 2], delta: T, sign: T| [0, 1].map(|k| scale(k) * (c[k] + sign * delta));
    let one = T::one();
    FiniteCountBounds {
        n_z_plus: pm(counts.n_z, d[0], one),
        n_z_minus: pm(counts.n_z, d[0], -one),
        m_z_plus: pm(counts.m_z, d[1], one),
        m_z_minus: pm(counts.m_z, d[1], -one),
        n_x_plus: pm(counts.n_x, d[2], one),
        n_x_minus: pm(counts.n_x, d[2], -one),
        m_x_plus: pm(counts.m_x, d[3], one),
        m_x_minus: pm(counts.m_x, d[3], -one),
        totals: *counts,
        n_z_total: sum(counts.n_z),
        n_x_total: sum(counts.n_x),
        delta: d,
    }
}

/// Poisson mixture `sum_k p_k e^(-mu_k) mu_k^n / n!`.
pub fn tau<T: Real>(n: u32, params: &ProtocolParams<T>) -> T {
    let fact = (1..=n).fold(T::one(), |a, i| a * T::lit(i as f64));
    IntensityClass::ALL.iter().fold(T::zero(), |acc, &k| {
        let mu = params.mu(k);
        acc + params.p_intensity(k) * (-mu).exp() * mu.powi(n as i32) / fact
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorBound<T> {
    pub value: T,
    /// Set when the bound could not be estimated and defaults to one half.
    pub conservative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBounds<T> {
    pub s_z0_low: T,
    pub s_z0_high: T,
    pub s_z1_low: T,
    pub s_x0_high: T,
    pub s_x1_low: T,
    pub v_x1_high: T,
    pub phi_z_high: T,
    pub phi_conservative: bool,
    pub tau0: T,
    pub tau1: T,
}

struct BasisBounds<T> {
    s0_low: T,
    s0_high: T,
    s1_low: T,
}

#[allow(clippy::too_many_arguments)]
fn basis_bounds<T: Real>(
    n_plus: [T; 2],
    n_minus: [T; 2],
    m2_plus: T,
    total: T,
    delta_n: T,
    params: &ProtocolParams<T>,
    t0: T,
    t1: T,
) -> BasisBounds<T> {
    let (m1, m2) = (params.mu1, params.mu2);
    let zero = T::zero();
    let s0_low = (t0 / (m1 - m2) * (m1 * n_minus[1] - m2 * n_plus[0])).max(zero).min(total);
    // vacuum detections are errors half of the time
    let s0_high = (T::lit(2.0) * (t0 * m2_plus + delta_n)).max(zero);
    let r = m2 * m2 / (m1 * m1);
    let s1 = t1 * m1 / (m2 * (m1 - m2)) * (n_minus[1] - r * n_plus[0] - (T::one() - r) * s0_high / t0);
    let s1_low = s1.max(zero).min((total - s0_low).max(zero));
    BasisBounds { s0_low, s0_high, s1_low }
}

/// Finite-sampling correction for estimating the phase error rate of one
/// population of size `c` from an observed rate `b` on another of size `d`.
pub fn gamma<T: Real>(eps: T, b: T, c: T, d: T) -> T {
    if !(b > T::zero() && b < T::one() && c > T::zero() && d > T::zero()) {
        return T::zero();
    }
    let v = b * (T::one() - b);
    let terms = T::lit(EPS_TERMS as f64) / eps;
    let arg = (c + d) / (c * d * v) * terms * terms;
    let inner = (c + d) * v / (c * d * T::LN_2()) * arg.log2();
    if inner > T::zero() {
        inner.sqrt()
    } else {
        T::zero()
    }
}

pub fn phi_z_upper<T: Real>(db: &DecoyBounds<T>, params: &ProtocolParams<T>) -> PhaseErrorBound<T> {
    let half = T::lit(0.5);
    if !(db.s_x1_low > T::zero()) || !(db.s_z1_low > T::zero()) {
        return PhaseErrorBound { value: half, conservative: true };
    }
    let b = db.v_x1_high / db.s_x1_low;
    if b >= half {
        return PhaseErrorBound { value: half, conservative: false };
    }
    let g = gamma(params.eps_sec, b, db.s_z1_low, db.s_x1_low);
    PhaseErrorBound { value: (b + g).min(half), conservative: false }
}

pub fn decoy_bounds<T: Real>(fcb: &FiniteCountBounds<T>, params: &ProtocolParams<T>) -> Result<DecoyBounds<T>> {
    if params.mu1 == params.mu2 {
        return Err(Error::DegenerateIntensity);
    }
    let t0 = tau(0, params);
    let t1 = tau(1, params);
    let z = basis_bounds(fcb.n_z_plus, fcb.n_z_minus, fcb.m_z_plus[1], fcb.n_z_total, fcb.delta[0], params, t0, t1);
    let x = basis_bounds(fcb.n_x_plus, fcb.n_x_minus, fcb.m_x_plus[1], fcb.n_x_total, fcb.delta[2], params, t0, t1);
    let v_x1_high = (t1 / (params.mu1 - params.mu2) * (fcb.m_x_plus[0] - fcb.m_x_minus[1])).max(T::zero());
    let mut db = DecoyBounds {
        s_z0_low: z.s0_low,
        s_z0_high: z.s0_high,
        s_z1_low: z.s1_low,
        s_x0_high: x.s0_high,
        s_x1_low: x.s1_low,
        v_x1_high,
        phi_z_high: T::lit(0.5),
        phi_conservative: true,
        tau0: t0,
        tau1: t1,
    };
    let phi = phi_z_upper(&db, params);
    db.phi_z_high = phi.value;
    db.phi_conservative = phi.conservative;
    Ok(db)
}

/// Fixed cost `6 log2(19/eps_sec) + log2(2/eps_cor)` of the key length.
pub fn key_length_overhead<T: Real>(params: &ProtocolParams<T>) -> T {
    T::lit(6.0) * (T::lit(EPS_TERMS as f64) / params.eps_sec).log2() + (T::lit(2.0) / params.eps_cor).log2()
}

/// Extractable key length in bits.
pub fn key_length<T: Real>(db: &DecoyBounds<T>, lambda_ec: T, params: &ProtocolParams<T>) -> u64 {
    let phi = db.phi_z_high.max(T::zero()).min(T::lit(0.5));
    let h = binary_entropy(phi).unwrap_or(T::one());
    let l = db.s_z0_low + db.s_z1_low * (T::one() - h) - lambda_ec - key_length_overhead(params);
    if l > T::zero() {
        l.floor().to_u64().unwrap_or(u64::MAX)
    } else {
        0
    }
}
