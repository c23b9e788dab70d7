//! Thresholds, decisions and closed-form bit-error probabilities for the
//! time-domain and frequency-domain detectors.

use statrs::function::erf::erfc;

use crate::channel::InterfererDistribution;
use crate::error::{Error, Result};
use crate::estimation::estimator_variances;
use crate::kinetics::bound_probability;
use crate::params::{DerivedParams, SystemConfig};
use crate::quadrature::{integrate, QuadOptions};
use crate::spectral::PsdMode;

/// Relative variance gap below which the two Gaussians count as equal-variance.
pub const EQUAL_VARIANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    General,
    EqualVarianceMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub mode: ThresholdMode,
}

fn log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean) * (x - mean) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Point where two Gaussian densities cross between their means.
pub fn two_gaussian_threshold(mu0: f64, var0: f64, mu1: f64, var1: f64) -> Result<Threshold> {
    if !(var0 > 0.0 && var1 > 0.0) || !mu0.is_finite() || !mu1.is_finite() {
        return Err(Error::Domain(format!(
            "threshold needs finite means and positive variances (got {mu0}, {var0}, {mu1}, {var1})"
        )));
    }
    if (var1 - var0).abs() < EQUAL_VARIANCE_TOLERANCE * var0.max(var1) {
        if mu1 < mu0 {
            return Err(Error::Domain(format!("bit-1 mean {mu1} is below bit-0 mean {mu0}")));
        }
        return Ok(Threshold {
            value: 0.5 * (mu0 + mu1),
            mode: ThresholdMode::EqualVarianceMidpoint,
        });
    }
    if !(mu1 > mu0) {
        return Err(Error::Domain(format!("bit-1 mean {mu1} must exceed bit-0 mean {mu0}")));
    }
    // With x = μ0 + z and δ = μ1 − μ0 the crossing solves a z² + b z + c = 0.
    let delta = mu1 - mu0;
    let a = var1 - var0;
    let b = 2.0 * var0 * delta;
    let c = -var0 * delta * delta - var0 * var1 * (var1 / var0).ln();
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(Error::Numerical(format!("threshold quadratic has negative discriminant {disc:e}")));
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = [q / a, if q != 0.0 { c / q } else { f64::NAN }];
    let interior = roots
        .iter()
        .copied()
        .filter(|z| z.is_finite() && *z > 0.0 && *z < delta)
        .min_by(|x, y| (x - 0.5 * delta).abs().total_cmp(&(y - 0.5 * delta).abs()));
    match interior {
        Some(z) => Ok(Threshold {
            value: mu0 + z,
            mode: ThresholdMode::General,
        }),
        None => Err(Error::Numerical(format!(
            "no density crossing between the means (roots {:e}, {:e} from {mu0:e})",
            mu0 + roots[0],
            mu0 + roots[1]
        ))),
    }
}

/// Relative mismatch of the two log-densities at `x`, for checks.
pub fn density_mismatch(x: f64, mu0: f64, var0: f64, mu1: f64, var1: f64) -> f64 {
    let l0 = log_density(x, mu0, var0);
    let l1 = log_density(x, mu1, var1);
    // |p0 − p1| / max(p0, p1)
    -(-(l0 - l1).abs()).exp_m1()
}

pub fn tdd_threshold(mu0: f64, var0: f64, mu1: f64, var1: f64) -> Result<Threshold> {
    two_gaussian_threshold(mu0, var0, mu1, var1)
}

/// 1 iff the sample strictly exceeds the threshold.
pub fn tdd_decide(sample: f64, threshold: &Threshold) -> u8 {
    u8::from(sample > threshold.value)
}

/// 1 iff the concentration estimate strictly exceeds the threshold.
pub fn fdd_decide(c_m_hat: f64, threshold: &Threshold) -> u8 {
    u8::from(c_m_hat > threshold.value)
}

/// Error probability of a threshold test on two Gaussians with equal priors.
pub fn gaussian_bep(threshold: f64, mu0: f64, var0: f64, mu1: f64, var1: f64) -> f64 {
    0.25 * erfc((threshold - mu0) / (2.0 * var0).sqrt()) + 0.25 * erfc((mu1 - threshold) / (2.0 * var1).sqrt())
}

/// Output-current statistics for one bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TddBitStats {
    /// Averaged over the interferer distribution.
    pub mean: f64,
    pub var: f64,
    /// With no interferer present, as assumed by the receiver.
    pub mean_free: f64,
    pub var_free: f64,
}

pub fn tdd_signal_stats(bit: u8, cfg: &SystemConfig, derived: &DerivedParams) -> Result<TddBitStats> {
    let c_m = derived.peak_concentration(bit);
    let zeta = derived.zeta;
    let n_r = cfg.receptor_count as f64;
    let sigma2_f = derived.flicker_variance;
    let p_free = bound_probability(c_m, 0.0, derived.k_d_m, derived.k_d_i);
    let mean_free = zeta * n_r * p_free;
    let var_free = zeta * zeta * n_r * p_free * (1.0 - p_free) + sigma2_f;

    let p = |c_i: f64| bound_probability(c_m, c_i, derived.k_d_m, derived.k_d_i);
    let (e_p, e_p2, e_pq) = if derived.interferer_mean <= 0.0 {
        let v = p(0.0);
        (v, v * v, v * (1.0 - v))
    } else if derived.interferer_std <= 0.0 {
        let v = p(derived.interferer_mean);
        (v, v * v, v * (1.0 - v))
    } else {
        let dist = InterfererDistribution::new(derived.interferer_mean, derived.interferer_std)?;
        let (a, b) = dist.log_params();
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let [m1, m2, mq] = integrate(
            |z: f64| {
                let w = norm * (-0.5 * z * z).exp();
                let v = p((a + b * z).exp());
                [w * v, w * v * v, w * v * (1.0 - v)]
            },
            -8.0,
            8.0,
            QuadOptions {
                rel_tol: 1e-10,
                ..Default::default()
            },
        )
        .map_err(|e| Error::Numerical(format!("interferer marginalisation for bit {bit}: {e}")))?;
        (m1, m2, mq)
    };
    let var_p = (e_p2 - e_p * e_p).max(0.0);
    Ok(TddBitStats {
        mean: zeta * n_r * e_p,
        var: zeta * zeta * (n_r * e_pq + n_r * n_r * var_p) + sigma2_f,
        mean_free,
        var_free,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TddAnalysis {
    pub threshold: Threshold,
    pub stats: [TddBitStats; 2],
    pub bep: f64,
}

/// Threshold from the interference-free statistics, error probability from
/// the interference-averaged ones.
pub fn tdd_bep(cfg: &SystemConfig, derived: &DerivedParams) -> Result<TddAnalysis> {
    let s0 = tdd_signal_stats(0, cfg, derived)?;
    let s1 = tdd_signal_stats(1, cfg, derived)?;
    let threshold = tdd_threshold(s0.mean_free, s0.var_free, s1.mean_free, s1.var_free)?;
    let bep = gaussian_bep(threshold.value, s0.mean, s0.var, s1.mean, s1.var);
    Ok(TddAnalysis {
        threshold,
        stats: [s0, s1],
        bep,
    })
}

/// Threshold on `ĉ_m` from single-ligand estimator variances.
pub fn fdd_threshold(cfg: &SystemConfig, derived: &DerivedParams) -> Result<Threshold> {
    let (v0, v1) = estimator_variances(cfg, derived, PsdMode::SingleLigand)?;
    two_gaussian_threshold(derived.c_m0, v0, derived.c_m1, v1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FddAnalysis {
    pub threshold: Threshold,
    /// Variances assumed by the receiver (interferer ignored).
    pub var_single: [f64; 2],
    /// Variances with the interferer as a nuisance parameter.
    pub var_full: [f64; 2],
    pub bep: f64,
}

/// Asymptotic (Gaussian-estimator) error probability of the frequency-domain detector.
pub fn fdd_bep(cfg: &SystemConfig, derived: &DerivedParams) -> Result<FddAnalysis> {
    let (s0, s1) = estimator_variances(cfg, derived, PsdMode::SingleLigand)?;
    let threshold = two_gaussian_threshold(derived.c_m0, s0, derived.c_m1, s1)?;
    let (f0, f1) = estimator_variances(cfg, derived, PsdMode::Full)?;
    Ok(FddAnalysis {
        threshold,
        var_single: [s0, s1],
        var_full: [f0, f1],
        bep: gaussian_bep(threshold.value, derived.c_m0, f0, derived.c_m1, f1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_all;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_variance_midpoint() {
        let t = tdd_threshold(0.0, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(t.value, 1.0);
        assert_eq!(t.mode, ThresholdMode::EqualVarianceMidpoint);
        let t = two_gaussian_threshold(3.0, 2.0, 3.0, 2.0).unwrap();
        assert_eq!(t.value, 3.0);
    }

    #[test]
    fn unequal_variance_against_quadratic_formula() {
        // Textbook quadratic on the raw log-likelihood ratio.
        let (m0, v0, m1, v1): (f64, f64, f64, f64) = (0.0, 1.0, 4.0, 4.0);
        let a = v1 - v0;
        let b = -2.0 * (v1 * m0 - v0 * m1);
        let c = v1 * m0 * m0 - v0 * m1 * m1 - v0 * v1 * (v1 / v0).ln();
        let r1 = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        let r2 = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        let root = if r1 > m0 && r1 < m1 { r1 } else { r2 };
        let t = tdd_threshold(m0, v0, m1, v1).unwrap();
        assert_eq!(t.mode, ThresholdMode::General);
        assert_relative_eq!(t.value, root, max_relative = 1e-13);
        assert!(density_mismatch(t.value, m0, v0, m1, v1) < 1e-12);
    }

    #[test]
    fn decisions_are_strict() {
        let t = Threshold {
            value: 2.5,
            mode: ThresholdMode::General,
        };
        assert_eq!(tdd_decide(2.5, &t), 0);
        assert_eq!(tdd_decide(2.5f64.next_up(), &t), 1);
        assert_eq!(fdd_decide(2.5, &t), 0);
        assert_eq!(fdd_decide(2.5f64.next_up(), &t), 1);
    }

    #[test]
    fn indistinguishable_symbols_give_half() {
        let t = two_gaussian_threshold(1.0, 0.3, 1.0, 0.3).unwrap();
        assert_eq!(gaussian_bep(t.value, 1.0, 0.3, 1.0, 0.3), 0.5);
    }

    #[test]
    fn no_interferer_limit() {
        let mut cfg = SystemConfig::default();
        let mut d = derive_all(&cfg).unwrap();
        d.interferer_mean = 0.0;
        d.interferer_std = 0.0;
        for bit in [0, 1] {
            let s = tdd_signal_stats(bit, &cfg, &d).unwrap();
            let p = bound_probability(d.peak_concentration(bit), 0.0, d.k_d_m, d.k_d_i);
            assert_relative_eq!(s.mean, d.zeta * 120.0 * p, max_relative = 1e-15);
            assert_relative_eq!(s.var, d.zeta * d.zeta * 120.0 * p * (1.0 - p) + d.flicker_variance, max_relative = 1e-15);
            assert_eq!(s.mean, s.mean_free);
        }
        cfg.interference_mean_std_ratio = 1e12;
        let d = derive_all(&cfg).unwrap();
        let s = tdd_signal_stats(1, &cfg, &d).unwrap();
        let p = bound_probability(d.c_m1, d.interferer_mean, d.k_d_m, d.k_d_i);
        assert_relative_eq!(s.mean, d.zeta * 120.0 * p, max_relative = 1e-9);
    }

    #[test]
    fn marginal_mean_matches_sampling() {
        let cfg = SystemConfig::default();
        let d = derive_all(&cfg).unwrap();
        let s = tdd_signal_stats(1, &cfg, &d).unwrap();
        let dist = InterfererDistribution::new(d.interferer_mean, d.interferer_std).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let ci = crate::channel::sample_interferer(&dist, &mut rng);
            acc += bound_probability(d.c_m1, ci, d.k_d_m, d.k_d_i);
        }
        assert_relative_eq!(s.mean, d.zeta * 120.0 * acc / n as f64, max_relative = 5e-3);
    }

    #[test]
    fn default_analysis_reference() {
        let cfg = SystemConfig::default();
        let d = derive_all(&cfg).unwrap();
        let t = tdd_bep(&cfg, &d).unwrap();
        // Independent evaluation (log-space trapezoid, 30 digits).
        assert_relative_eq!(t.threshold.value, 1.5699e-9, max_relative = 1e-3);
        assert_relative_eq!(t.stats[0].mean, 1.53259e-9, max_relative = 1e-4);
        assert_relative_eq!(t.stats[1].mean, 1.74947e-9, max_relative = 1e-4);
        assert_relative_eq!(t.stats[0].var, 4.8745e-21, max_relative = 1e-3);
        assert_relative_eq!(t.stats[1].var, 2.16595e-21, max_relative = 1e-3);
        assert_relative_eq!(t.bep, 0.14829, max_relative = 2e-3);

        let f = fdd_bep(&cfg, &d).unwrap();
        assert!(f.threshold.value > d.c_m0 && f.threshold.value < d.c_m1);
        assert_relative_eq!(f.threshold.value, 2.153e17, max_relative = 2e-3);
        assert_relative_eq!(f.var_single[0].sqrt(), 2.385e16, max_relative = 2e-3);
        assert_relative_eq!(f.var_single[1].sqrt(), 1.071e17, max_relative = 2e-3);
        assert_relative_eq!(f.var_full[0].sqrt(), 3.847e16, max_relative = 2e-3);
        assert_relative_eq!(f.var_full[1].sqrt(), 9.047e16, max_relative = 2e-3);
        assert_relative_eq!(f.bep, 0.00334, max_relative = 1e-2);
    }

    #[test]
    fn fdd_improves_with_window_length() {
        let mut prev = 1.0;
        for n in [350, 700, 1400, 2800] {
            let mut cfg = SystemConfig::default();
            cfg.samples = n;
            let d = derive_all(&cfg).unwrap();
            let b = fdd_bep(&cfg, &d).unwrap().bep;
            assert!(b < prev, "N = {n}: {b} >= {prev}");
            prev = b;
        }
    }

    #[test]
    fn heavy_interference_pushes_tdd_towards_half() {
        let mut prev = 0.0;
        for gamma in [0.7, 3.0, 10.0, 50.0] {
            let mut cfg = SystemConfig::default();
            cfg.interference_ratio = gamma;
            let d = derive_all(&cfg).unwrap();
            let b = tdd_bep(&cfg, &d).unwrap().bep;
            assert!(b >= prev && b <= 0.5 + 1e-9, "{gamma}: {b}");
            prev = b;
        }
        assert!(prev > 0.45);
    }

    fn gaussian_pair() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        // σ ≤ Δμ keeps a crossing strictly between the means.
        (-10.0f64..10.0, 0.1f64..10.0, 0.05f64..1.0, 0.05f64..1.0, -3.0f64..3.0).prop_map(
            |(mu0, delta, s0, s1, exp)| {
                let scale = 10f64.powf(exp);
                (mu0 * scale, (s0 * delta * scale).powi(2), (mu0 + delta) * scale, (s1 * delta * scale).powi(2))
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn threshold_equalises_densities((m0, v0, m1, v1) in gaussian_pair()) {
            let t = two_gaussian_threshold(m0, v0, m1, v1).unwrap();
            prop_assert!(t.value >= m0 && t.value <= m1);
            prop_assert!(density_mismatch(t.value, m0, v0, m1, v1) < 1e-9);
        }

        #[test]
        fn threshold_scale_equivariant((m0, v0, m1, v1) in gaussian_pair(), alpha in 0.01f64..100.0) {
            let t = two_gaussian_threshold(m0, v0, m1, v1).unwrap();
            let s = two_gaussian_threshold(alpha * m0, alpha * alpha * v0, alpha * m1, alpha * alpha * v1).unwrap();
            prop_assert!((s.value - alpha * t.value).abs() <= 1e-9 * (alpha * (m1 - m0)));
        }

        #[test]
        fn decisions_monotone(a in -1e3f64..1e3, b in -1e3f64..1e3, thr in -1e3f64..1e3) {
            let t = Threshold { value: thr, mode: ThresholdMode::General };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(tdd_decide(lo, &t) <= tdd_decide(hi, &t));
            prop_assert!(fdd_decide(lo, &t) <= fdd_decide(hi, &t));
        }

        #[test]
        fn matched_bep_bounded((m0, v0, m1, v1) in gaussian_pair()) {
            let t = two_gaussian_threshold(m0, v0, m1, v1).unwrap();
            let b = gaussian_bep(t.value, m0, v0, m1, v1);
            prop_assert!((0.0..=0.5).contains(&b));
        }
    }
}
