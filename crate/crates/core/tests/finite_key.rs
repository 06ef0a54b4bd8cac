use num_rational::Ratio;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use tbqkd_core::bits::Bits;
use tbqkd_core::protocol::ProtocolParams;
use tbqkd_core::security::{
    decoy_bounds, finite_count_bounds, key_length, privacy_amplify, toeplitz_seed_len, BasisCounts, DecoyBounds,
    FiniteCountBounds,
};
use tbqkd_core::sifting::estimate_n_x;

/// `(s0, s1, phi, lambda, eps_sec, eps_cor, l)` from 60-digit arithmetic.
fn oracle() -> Vec<(f64, f64, f64, f64, f64, f64, u64)> {
    include_str!("../../../testdata/key_length_oracle.csv")
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let x = |i: usize| f[i].parse::<f64>().unwrap();
            (x(0), x(1), x(2), x(3), x(4), x(5), f[6].parse().unwrap())
        })
        .collect()
}

fn bounds_with(s0: f64, s1: f64, phi: f64) -> DecoyBounds<f64> {
    DecoyBounds {
        s_z0_low: s0,
        s_z0_high: s0,
        s_z1_low: s1,
        s_x0_high: 0.0,
        s_x1_low: 0.0,
        v_x1_high: 0.0,
        phi_z_high: phi,
        phi_conservative: false,
        tau0: 0.0,
        tau1: 0.0,
    }
}

fn params_with(eps_sec: f64, eps_cor: f64) -> ProtocolParams<f64> {
    ProtocolParams { eps_sec, eps_cor, ..ProtocolParams::half_decoy(0.4) }
}

#[test]
fn key_length_matches_high_precision_oracle() {
    let rows = oracle();
    assert_eq!(rows.len(), 100);
    assert_eq!(rows[0], (1000.0, 9000.0, 0.0, 0.0, 1e-9, 1e-9, 9764));
    for (i, &(s0, s1, phi, lam, es, ec, want)) in rows.iter().enumerate() {
        let got = key_length(&bounds_with(s0, s1, phi), lam, &params_with(es, ec));
        assert_eq!(got, want, "tuple {i}");
    }
}

fn counts(n_z: [f64; 2], m_z: [f64; 2], n_x: [f64; 2], m_x: [f64; 2]) -> BasisCounts<f64> {
    BasisCounts { n_z, m_z, n_x, m_x }
}

#[test]
fn hoeffding_intervals_cover_poisson_means() {
    let params = ProtocolParams::with_intensities(0.39, 0.18);
    let means = counts([4.0e4, 1.5e4], [1.2e3, 6.0e2], [3.0e3, 1.1e3], [60.0, 30.0]);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let draw = |m: [f64; 2], rng: &mut Xoshiro256PlusPlus| m.map(|x| Poisson::new(x).unwrap().sample(rng));
    let scale = [0.39_f64.exp() / 0.6, 0.18_f64.exp() / 0.4];
    let mut misses = 0;
    for _ in 0..1000 {
        let c =
            counts(draw(means.n_z, &mut rng), draw(means.m_z, &mut rng), draw(means.n_x, &mut rng), draw(means.m_x, &mut rng));
        let f = finite_count_bounds(&c, &params).unwrap();
        let pairs = [
            (f.n_z_minus, f.n_z_plus, means.n_z),
            (f.m_z_minus, f.m_z_plus, means.m_z),
            (f.n_x_minus, f.n_x_plus, means.n_x),
            (f.m_x_minus, f.m_x_plus, means.m_x),
        ];
        let covered =
            pairs.iter().all(|(lo, hi, mean)| (0..2).all(|k| lo[k] <= scale[k] * mean[k] && scale[k] * mean[k] <= hi[k]));
        misses += usize::from(!covered);
    }
    assert!(misses <= 1, "{misses} of 1000 intervals missed");
}

#[test]
fn zero_width_at_zero_total_and_sqrt_scaling() {
    let params = ProtocolParams::with_intensities(0.39, 0.18);
    let c = counts([4.0e4, 1.5e4], [0.0, 0.0], [3.0e3, 1.1e3], [60.0, 30.0]);
    let f = finite_count_bounds(&c, &params).unwrap();
    assert_eq!(f.m_z_plus, f.m_z_minus);
    let g = finite_count_bounds(&c.scaled(4.0), &params).unwrap();
    for k in 0..2 {
        let w1 = (f.n_z_plus[k] - f.n_z_minus[k]) / f.n_z_plus[k].midpoint(f.n_z_minus[k]);
        let w4 = (g.n_z_plus[k] - g.n_z_minus[k]) / g.n_z_plus[k].midpoint(g.n_z_minus[k]);
        assert!((w1 / w4 - 2.0).abs() < 1e-9);
    }
}

#[test]
fn smaller_eps_widens_intervals() {
    let c = counts([4.0e4, 1.5e4], [1.2e3, 6.0e2], [3.0e3, 1.1e3], [60.0, 30.0]);
    let widths: Vec<f64> = [1e-6, 1e-9, 1e-12]
        .iter()
        .map(|&e| {
            let f = finite_count_bounds(&c, &params_with(e, 1e-9)).unwrap();
            f.n_z_plus[0] - f.n_z_minus[0]
        })
        .collect();
    assert!(widths[0] < widths[1] && widths[1] < widths[2]);
}

#[test]
fn zero_counts_give_zero_bounds() {
    let params = ProtocolParams::with_intensities(0.39, 0.18);
    let db = decoy_bounds(&FiniteCountBounds::default(), &params).unwrap();
    assert_eq!((db.s_z0_low, db.s_z1_low, db.s_x1_low, db.v_x1_high), (0.0, 0.0, 0.0, 0.0));
    assert!(db.phi_conservative);
    assert_eq!(db.phi_z_high, 0.5);
    assert!(finite_count_bounds(&BasisCounts::default(), &params).is_err());
}

#[test]
fn conclusive_extrapolation_is_exact_on_rationals() {
    let p = Ratio::new(9i64, 10);
    assert_eq!(estimate_n_x(Ratio::from_integer(225), p).unwrap(), Ratio::from_integer(1000));
    assert_eq!(estimate_n_x(Ratio::from_integer(900), p).unwrap(), Ratio::from_integer(4000));
    assert_eq!(estimate_n_x(Ratio::from_integer(0), p).unwrap(), Ratio::from_integer(0));
    assert!(estimate_n_x(Ratio::from_integer(5), Ratio::from_integer(0)).is_err());
}

fn bits(words: &[u64], len: usize) -> Bits {
    let mut b = Bits::from_vec(words.to_vec());
    b.truncate(len);
    b
}

proptest! {
    #[test]
    fn key_length_is_monotone(
        s0 in 0.0f64..1e5, s1 in 0.0f64..1e6, phi in 0.0f64..0.5, lam in 0.0f64..1e5,
        ds in 0.0f64..1e4, dphi in 0.0f64..0.1, dlam in 0.0f64..1e4,
    ) {
        let p = ProtocolParams::half_decoy(0.4);
        let base = key_length(&bounds_with(s0, s1, phi), lam, &p);
        prop_assert!(key_length(&bounds_with(s0 + ds, s1, phi), lam, &p) >= base);
        prop_assert!(key_length(&bounds_with(s0, s1 + ds, phi), lam, &p) >= base);
        prop_assert!(key_length(&bounds_with(s0, s1, (phi + dphi).min(0.5)), lam, &p) <= base);
        prop_assert!(key_length(&bounds_with(s0, s1, phi), lam + dlam, &p) <= base);
    }

    #[test]
    fn conclusive_extrapolation_inverts(n in 0i64..1_000_000, num in 1i64..1000) {
        let p = Ratio::new(num, 1000);
        let est = estimate_n_x(Ratio::from_integer(n), p).unwrap();
        prop_assert_eq!(est * p / Ratio::from_integer(4), Ratio::from_integer(n));
        prop_assert_eq!(estimate_n_x(Ratio::from_integer(2 * n), p).unwrap(), est * Ratio::from_integer(2));
    }

    #[test]
    fn privacy_amplification_is_linear(
        a in proptest::collection::vec(any::<u64>(), 1..40),
        b in proptest::collection::vec(any::<u64>(), 40),
        s in proptest::collection::vec(any::<u64>(), 80),
        frac in 0.0f64..1.0,
    ) {
        let n = a.len() * 64 - 7;
        let l = ((n as f64) * frac) as usize;
        let ka = bits(&a, n);
        let kb = bits(&b[..a.len()], n);
        let seed = bits(&s, toeplitz_seed_len(n, l));
        let sum = ka.clone() ^ kb.clone();
        let lhs = privacy_amplify(&sum, l, &seed).unwrap();
        let rhs = privacy_amplify(&ka, l, &seed).unwrap() ^ privacy_amplify(&kb, l, &seed).unwrap();
        prop_assert_eq!(lhs, rhs);
    }
}
