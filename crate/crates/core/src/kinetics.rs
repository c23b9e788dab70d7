//! Three-state receptor kinetics (free, bound to information ligand, bound to
//! interferer): equilibrium occupancy, linearised fluctuation dynamics and an
//! exact stochastic simulator of the bound-receptor count.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::params::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LigandKinetics {
    pub k_on_m: f64,
    pub k_on_i: f64,
    pub k_off_m: f64,
    pub k_off_i: f64,
}

impl LigandKinetics {
    pub fn new(k_on_m: f64, k_on_i: f64, k_off_m: f64, k_off_i: f64) -> Result<Self> {
        for (name, v) in [
            ("k_plus_m", k_on_m),
            ("k_plus_i", k_on_i),
            ("k_minus_m", k_off_m),
            ("k_minus_i", k_off_i),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self {
            k_on_m,
            k_on_i,
            k_off_m,
            k_off_i,
        })
    }

    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            k_on_m: cfg.k_on_m,
            k_on_i: cfg.k_on_i,
            k_off_m: cfg.k_off_m,
            k_off_i: cfg.k_off_i,
        }
    }

    pub fn k_d_m(&self) -> f64 {
        self.k_off_m / self.k_on_m
    }

    pub fn k_d_i(&self) -> f64 {
        self.k_off_i / self.k_on_i
    }
}

pub fn bound_probability(c_m: f64, c_i: f64, k_d_m: f64, k_d_i: f64) -> f64 {
    let x = c_m / k_d_m + c_i / k_d_i;
    x / (1.0 + x)
}

/// Returns `(p_RM, p_RI, p_R)`.
pub fn equilibrium_probabilities(c_m: f64, c_i: f64, kin: &LigandKinetics) -> (f64, f64, f64) {
    let xm = c_m / kin.k_d_m();
    let xi = c_i / kin.k_d_i();
    let den = 1.0 + xm + xi;
    let p_m = xm / den;
    let p_i = xi / den;
    // Not `1 - p_m - p_i`, which cancels near saturation.
    (p_m, p_i, 1.0 / den)
}

pub type Mat2 = [[f64; 2]; 2];

/// Linearised dynamics around equilibrium for one concentration pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyModel {
    pub c_m: f64,
    pub c_i: f64,
    pub p_rm: f64,
    pub p_ri: f64,
    pub p_r: f64,
    pub omega: Mat2,
    pub gamma: Mat2,
}

/// Maps the two independent occupancies onto the three states.
pub const REDUCTION: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]];

impl OccupancyModel {
    pub fn new(c_m: f64, c_i: f64, kin: &LigandKinetics) -> Self {
        let (p_rm, p_ri, p_r) = equilibrium_probabilities(c_m, c_i, kin);
        Self {
            c_m,
            c_i,
            p_rm,
            p_ri,
            p_r,
            omega: omega_matrix(c_m, c_i, kin),
            gamma: [
                [p_rm * (1.0 - p_rm), -p_rm * p_ri],
                [-p_rm * p_ri, p_ri * (1.0 - p_ri)],
            ],
        }
    }

    pub fn bound_probability(&self) -> f64 {
        self.p_rm + self.p_ri
    }
}

pub fn omega_matrix(c_m: f64, c_i: f64, kin: &LigandKinetics) -> Mat2 {
    let a = kin.k_on_m * c_m;
    let b = kin.k_on_i * c_i;
    [[-a - kin.k_off_m, -a], [-b, -b - kin.k_off_i]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicTimes {
    /// Slow time constant (s), `tau_c1 >= tau_c2`.
    pub tau_c1: f64,
    pub tau_c2: f64,
}

impl CharacteristicTimes {
    pub fn frequencies(&self) -> (f64, f64) {
        let two_pi = 2.0 * std::f64::consts::PI;
        (1.0 / (two_pi * self.tau_c1), 1.0 / (two_pi * self.tau_c2))
    }
}

pub fn characteristic_times(c_m: f64, c_i: f64, kin: &LigandKinetics) -> CharacteristicTimes {
    let a = kin.k_on_m * c_m;
    let b = kin.k_on_i * c_i;
    let rm = a + kin.k_off_m;
    let ri = b + kin.k_off_i;
    let fast = 0.5 * ((rm + ri) + ((rm - ri) * (rm - ri) + 4.0 * a * b).sqrt());
    // Product of the rates is det Ω; written without cancellation.
    let det = a * kin.k_off_i + kin.k_off_m * b + kin.k_off_m * kin.k_off_i;
    let slow = det / fast;
    CharacteristicTimes {
        tau_c1: 1.0 / slow,
        tau_c2: 1.0 / fast,
    }
}

pub fn bound_count_stats(p_b: f64, n_r: u32) -> (f64, f64) {
    let n = n_r as f64;
    (n * p_b, n * p_b * (1.0 - p_b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCountSeries {
    pub counts: Vec<u32>,
    pub dt: f64,
    pub burn_in: f64,
}

impl BoundCountSeries {
    /// `time,count` rows with a header; time is measured from the end of burn-in.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("time,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{:e},{}", k as f64 * self.dt, c);
        }
        s
    }
}

/// Exact event-driven simulation of `n_r` independent receptors. The initial
/// state is drawn from the equilibrium distribution; after `burn_in` seconds
/// the bound count is recorded every `dt` for `n` samples.
#[allow(clippy::too_many_arguments)]
pub fn simulate_bound_counts<R: Rng + ?Sized>(
    n_r: u32,
    c_m: f64,
    c_i: f64,
    kin: &LigandKinetics,
    burn_in: f64,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<BoundCountSeries> {
    if !(burn_in >= 0.0) || !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "simulation needs burn_in >= 0 and dt > 0 (got {burn_in}, {dt})"
        )));
    }
    if !(c_m >= 0.0 && c_i >= 0.0) {
        return Err(Error::Domain(format!(
            "concentrations must be non-negative (got {c_m}, {c_i})"
        )));
    }
    let (p_m, p_i, _) = equilibrium_probabilities(c_m, c_i, kin);
    let (mut n_free, mut n_m, mut n_i) = (0u32, 0u32, 0u32);
    for _ in 0..n_r {
        let u: f64 = rng.random();
        if u < p_m {
            n_m += 1;
        } else if u < p_m + p_i {
            n_i += 1;
        } else {
            n_free += 1;
        }
    }

    let a = kin.k_on_m * c_m;
    let b = kin.k_on_i * c_i;
    let mut counts = Vec::with_capacity(n);
    let mut t = 0.0;
    let mut next_record = burn_in;
    let mut recorded = 0usize;
    while recorded < n {
        let r1 = a * n_free as f64;
        let r2 = kin.k_off_m * n_m as f64;
        let r3 = b * n_free as f64;
        let r4 = kin.k_off_i * n_i as f64;
        let total = r1 + r2 + r3 + r4;
        let t_next = if total > 0.0 {
            let e: f64 = Exp1.sample(rng);
            t + e / total
        } else {
            f64::INFINITY
        };
        // The state is constant on [t, t_next); record every grid point in it.
        while recorded < n && next_record < t_next {
            counts.push(n_m + n_i);
            recorded += 1;
            next_record = burn_in + recorded as f64 * dt;
        }
        if recorded == n {
            break;
        }
        t = t_next;
        let pick = rng.random::<f64>() * total;
        let rates = [r1, r2, r3, r4];
        let mut acc = 0.0;
        // Rounding can leave `pick` at the very top of the range; the last
        // channel with a positive rate takes it then.
        let mut chosen = rates.iter().rposition(|&r| r > 0.0).unwrap_or(0);
        for (idx, &r) in rates.iter().enumerate() {
            acc += r;
            if pick < acc {
                chosen = idx;
                break;
            }
        }
        match chosen {
            0 => {
                n_free -= 1;
                n_m += 1;
            }
            1 => {
                n_m -= 1;
                n_free += 1;
            }
            2 => {
                n_free -= 1;
                n_i += 1;
            }
            _ => {
                n_i -= 1;
                n_free += 1;
            }
        }
    }
    Ok(BoundCountSeries {
        counts,
        dt,
        burn_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const C_M1: f64 = 6.005_400_865_879_977e17;

    fn defaults() -> LigandKinetics {
        LigandKinetics::new(4e-17, 4e-17, 2.0, 8.0).unwrap()
    }

    fn eigen_rates(om: Mat2) -> (f64, f64) {
        let m = Matrix2::new(om[0][0], om[0][1], om[1][0], om[1][1]);
        let ev = m.complex_eigenvalues();
        let mut r = [-ev[0].re, -ev[1].re];
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ev[0].im.abs() < 1e-9 * r[1] && ev[1].im.abs() < 1e-9 * r[1]);
        (r[0], r[1])
    }

    #[test]
    fn bound_probability_cases() {
        assert_eq!(bound_probability(0.0, 0.0, 5e16, 2e17), 0.0);
        assert_eq!(bound_probability(5e16, 0.0, 5e16, 2e17), 0.5);
        let mu_ci = 0.7 * C_M1;
        assert_relative_eq!(C_M1 / 5e16, 12.010_801_731_759_954, max_relative = 1e-10);
        assert_relative_eq!(mu_ci / 2e17, 2.101_890_303_057_992, max_relative = 1e-10);
        assert_relative_eq!(
            bound_probability(C_M1, mu_ci, 5e16, 2e17),
            0.933_830_452_066_639_6,
            max_relative = 1e-9
        );
    }

    #[test]
    fn equilibrium_cases() {
        let k = defaults();
        assert_eq!(equilibrium_probabilities(0.0, 0.0, &k), (0.0, 0.0, 1.0));
        let (pm, pi, pr) = equilibrium_probabilities(5e16, 0.0, &k);
        assert_eq!((pm, pi, pr), (0.5, 0.0, 0.5));
        let (pm, pi, pr) = equilibrium_probabilities(C_M1, 0.7 * C_M1, &k);
        assert_relative_eq!(pm, 0.795, epsilon = 5e-4);
        assert_relative_eq!(pi, 0.139, epsilon = 5e-4);
        assert_relative_eq!(pr, 0.066, epsilon = 5e-4);
        assert_relative_eq!(pm + pi, bound_probability(C_M1, 0.7 * C_M1, 5e16, 2e17), max_relative = 1e-15);
    }

    #[test]
    fn omega_cases() {
        let k = defaults();
        assert_eq!(omega_matrix(0.0, 0.0, &k), [[-2.0, -0.0], [-0.0, -8.0]]);
        let om = omega_matrix(C_M1, 0.7 * C_M1, &k);
        assert_relative_eq!(om[0][0] + om[1][1], -(26.021_603_463_519_91 + 24.815_122_424_463_94), max_relative = 1e-10);
    }

    #[test]
    fn characteristic_time_cases() {
        let k = defaults();
        let t = characteristic_times(1e17, 0.0, &k);
        assert_relative_eq!(t.tau_c1, 1.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(t.tau_c2, 1.0 / 8.0, max_relative = 1e-14);
        let t = characteristic_times(C_M1, 0.0, &k);
        let (_, fc) = t.frequencies();
        assert_relative_eq!(fc, 26.021_603_463_519_91 / (2.0 * std::f64::consts::PI), max_relative = 1e-12);
        assert_relative_eq!(fc, 4.1415, epsilon = 1e-4);
    }

    #[test]
    fn bound_count_stats_cases() {
        assert_eq!(bound_count_stats(0.0, 120), (0.0, 0.0));
        assert_eq!(bound_count_stats(0.5, 120), (60.0, 30.0));
        let (m, v) = bound_count_stats(0.934, 120);
        assert_relative_eq!(m, 112.08, max_relative = 1e-12);
        assert_relative_eq!(v, 7.397_28, max_relative = 1e-12);
    }

    #[test]
    fn empty_channel_never_binds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = simulate_bound_counts(120, 0.0, 0.0, &defaults(), 1.0, 100, 0.005, &mut rng).unwrap();
        assert_eq!(s.counts.len(), 100);
        assert!(s.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn stationary_moments_match_binomial() {
        let k = defaults();
        let (cm, ci) = (C_M1, 0.7 * C_M1);
        let p = bound_probability(cm, ci, k.k_d_m(), k.k_d_i());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let s = simulate_bound_counts(120, cm, ci, &k, 1.0, n, 0.005, &mut rng).unwrap();
        let mean = s.counts.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
        let var = s.counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (mu, sig2) = bound_count_stats(p, 120);
        let tau = characteristic_times(cm, ci, &k).tau_c1;
        let n_eff = n as f64 / (1.0 + 2.0 * tau / 0.005);
        assert!((mean - mu).abs() < 3.0 * (sig2 / n_eff).sqrt(), "{mean} vs {mu}");
        assert_relative_eq!(var, sig2, max_relative = 0.05);
        assert!(s.counts.iter().all(|&c| c <= 120));
    }

    #[test]
    fn single_ligand_autocorrelation_time() {
        let k = defaults();
        let cm = 1e17;
        let tau_m = 1.0 / (k.k_on_m * cm + k.k_off_m);
        let dt = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let s = simulate_bound_counts(120, cm, 0.0, &k, 2.0, n, dt, &mut rng).unwrap();
        let x: Vec<f64> = s.counts.iter().map(|&c| c as f64).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let acf = |lag: usize| {
            (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / (n - lag) as f64
        };
        let c0 = acf(0);
        // Least-squares slope of ln ρ(lag) through the origin over the first decade.
        let max_lag = (tau_m / dt).round() as usize;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for lag in 1..=max_lag {
            let t = lag as f64 * dt;
            let y = (acf(lag) / c0).ln();
            sxy += t * y;
            sxx += t * t;
        }
        let fitted = -sxx / sxy;
        assert_relative_eq!(fitted, tau_m, max_relative = 0.1);
    }

    #[test]
    fn series_export() {
        let s = BoundCountSeries {
            counts: vec![3, 4],
            dt: 0.5,
            burn_in: 1.0,
        };
        assert_eq!(s.to_delimited(), "time,count\n0e0,3\n5e-1,4\n");
    }

    fn draw() -> impl Strategy<Value = (f64, f64, LigandKinetics)> {
        (
            14.0f64..19.0,
            14.0f64..19.0,
            -18.0f64..-15.0,
            -18.0f64..-15.0,
            -1.0f64..2.0,
            -1.0f64..2.0,
        )
            .prop_map(|(cm, ci, kpm, kpi, kmm, kmi)| {
                (
                    10f64.powf(cm),
                    10f64.powf(ci),
                    LigandKinetics::new(10f64.powf(kpm), 10f64.powf(kpi), 10f64.powf(kmm), 10f64.powf(kmi))
                        .unwrap(),
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn probabilities_sum_to_one((cm, ci, k) in draw()) {
            let (a, b, c) = equilibrium_probabilities(cm, ci, &k);
            prop_assert!((a + b + c - 1.0).abs() <= 4.0 * f64::EPSILON);
            prop_assert!(a >= 0.0 && b >= 0.0 && c >= 0.0);
        }

        #[test]
        fn detailed_balance((cm, ci, k) in draw()) {
            let (pm, pi, pr) = equilibrium_probabilities(cm, ci, &k);
            let lhs = k.k_on_m * cm * pr;
            let rhs = k.k_off_m * pm;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(lhs));
            let lhs = k.k_on_i * ci * pr;
            let rhs = k.k_off_i * pi;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(lhs));
        }

        #[test]
        fn omega_is_stable_and_matches_closed_form((cm, ci, k) in draw()) {
            let om = omega_matrix(cm, ci, &k);
            let (slow, fast) = eigen_rates(om);
            prop_assert!(slow > 0.0);
            let t = characteristic_times(cm, ci, &k);
            prop_assert!(t.tau_c1 >= t.tau_c2);
            prop_assert!((1.0 / t.tau_c1 - slow).abs() <= 1e-9 * slow);
            prop_assert!((1.0 / t.tau_c2 - fast).abs() <= 1e-9 * fast);
            let tr = om[0][0] + om[1][1];
            prop_assert!((tr + 1.0 / t.tau_c1 + 1.0 / t.tau_c2).abs() <= 1e-12 * tr.abs());
        }

        #[test]
        fn gamma_is_valid_covariance((cm, ci, k) in draw()) {
            let m = OccupancyModel::new(cm, ci, &k);
            let g = m.gamma;
            prop_assert_eq!(g[0][1], g[1][0]);
            prop_assert!(g[0][0] >= 0.0 && g[1][1] >= 0.0);
            prop_assert!(g[0][0] * g[1][1] - g[0][1] * g[0][1] >= -1e-15);
        }
    }
}
