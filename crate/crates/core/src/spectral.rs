//! Noise spectra, periodograms, 1/f synthesis and filtering.
//!
//! All PSDs are single-sided: integrating over `(0, ∞)` gives the variance.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kinetics::{LigandKinetics, OccupancyModel};
use crate::params::{DerivedParams, SystemConfig};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

/// Everything a PSD evaluation needs besides frequency and concentrations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdContext {
    pub kinetics: LigandKinetics,
    pub zeta: f64,
    pub receptor_count: u32,
    pub flicker_power_1hz: f64,
    pub flicker_exponent: f64,
}

impl PsdContext {
    pub fn new(cfg: &SystemConfig, derived: &DerivedParams) -> Self {
        Self {
            kinetics: LigandKinetics::from_config(cfg),
            zeta: derived.zeta,
            receptor_count: cfg.receptor_count,
            flicker_power_1hz: cfg.flicker_power_1hz,
            flicker_exponent: cfg.flicker_exponent,
        }
    }
}

/// Which PSD the receiver fits or evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdMode {
    /// Both ligands, `λ = [c_m, c_i]`.
    Full,
    /// Information ligand only, `λ = [c_m]`.
    SingleLigand,
}

fn check_frequency(f: f64) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("frequency must be positive and finite, got {f}")))
    }
}

/// Binding-noise contribution to the output-current PSD (A²/Hz).
pub fn binding_noise_psd(f: f64, c_m: f64, c_i: f64, ctx: &PsdContext) -> Result<f64> {
    check_frequency(f)?;
    if !(c_m >= 0.0 && c_i >= 0.0) {
        return Err(Error::Domain(format!(
            "concentrations must be non-negative, got ({c_m}, {c_i})"
        )));
    }
    Ok(binding_noise_unchecked(f, c_m, c_i, ctx))
}

fn binding_noise_unchecked(f: f64, c_m: f64, c_i: f64, ctx: &PsdContext) -> f64 {
    ModelSpectrum::new(c_m, c_i, ctx).binding(f)
}

/// Model PSD at fixed concentrations, with the frequency-independent parts
/// precomputed for evaluation on many frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpectrum {
    omega: crate::kinetics::Mat2,
    /// Column sums of Γ.
    gcol: [f64; 2],
    scale: f64,
    s_1hz: f64,
    beta: f64,
}

impl ModelSpectrum {
    pub fn new(c_m: f64, c_i: f64, ctx: &PsdContext) -> Self {
        let m = OccupancyModel::new(c_m, c_i, &ctx.kinetics);
        let g = m.gamma;
        Self {
            omega: m.omega,
            gcol: [g[0][0] + g[1][0], g[0][1] + g[1][1]],
            scale: 4.0 * ctx.receptor_count as f64 * ctx.zeta * ctx.zeta,
            s_1hz: ctx.flicker_power_1hz,
            beta: ctx.flicker_exponent,
        }
    }

    pub fn for_lambda(lambda: &[f64], ctx: &PsdContext) -> Self {
        Self::new(lambda[0], lambda.get(1).copied().unwrap_or(0.0), ctx)
    }

    pub fn binding(&self, f: f64) -> f64 {
        let om = self.omega;
        let w = 2.0 * PI * f;
        // (jωI − Ω) = [[a, b], [c, d]] with a, d complex and b, c real.
        let a = Complex64::new(-om[0][0], w);
        let d = Complex64::new(-om[1][1], w);
        let b = -om[0][1];
        let c = -om[1][0];
        let det = a * d - b * c;
        let inv_det = det.conj() / det.norm_sqr();
        // vᵀ Γ Mᵀ v with v = [1, 1] is Σ_k (column sums of Γ)_k (column sums of M)_k.
        let mcol0 = ((d - c) * inv_det).re;
        let mcol1 = ((a - b) * inv_det).re;
        self.scale * (self.gcol[0] * mcol0 + self.gcol[1] * mcol1)
    }

    pub fn total(&self, f: f64) -> f64 {
        self.binding(f) + one_over_f_psd(f, self.s_1hz, self.beta)
    }
}

pub fn one_over_f_psd(f: f64, s_1hz: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        s_1hz / f
    } else {
        s_1hz / f.powf(beta)
    }
}

pub fn total_psd(f: f64, c_m: f64, c_i: f64, ctx: &PsdContext) -> Result<f64> {
    let s = binding_noise_psd(f, c_m, c_i, ctx)?
        + one_over_f_psd(f, ctx.flicker_power_1hz, ctx.flicker_exponent);
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numerical(format!("model PSD is {s} at f = {f}")));
    }
    Ok(s)
}

/// Total PSD with the interferer absent.
pub fn single_ligand_psd(f: f64, c_m: f64, ctx: &PsdContext) -> Result<f64> {
    total_psd(f, c_m, 0.0, ctx)
}

/// Model PSD for a parameter vector in the given mode.
pub fn model_psd(f: f64, lambda: &[f64], mode: PsdMode, ctx: &PsdContext) -> Result<f64> {
    match mode {
        PsdMode::Full => total_psd(f, lambda[0], lambda[1], ctx),
        PsdMode::SingleLigand => single_ligand_psd(f, lambda[0], ctx),
    }
}

/// Closed single-ligand Lorentzian for the binding term, used as a check on
/// the matrix form.
pub fn single_ligand_lorentzian(f: f64, c_m: f64, ctx: &PsdContext) -> f64 {
    let k = &ctx.kinetics;
    let tau = 1.0 / (k.k_on_m * c_m + k.k_off_m);
    let p = c_m / (c_m + k.k_d_m());
    let wt = 2.0 * PI * f * tau;
    4.0 * ctx.receptor_count as f64 * ctx.zeta * ctx.zeta * p * (1.0 - p) * tau / (1.0 + wt * wt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub values: Vec<f64>,
    pub freqs: Vec<f64>,
    pub n: usize,
    pub dt: f64,
}

impl Periodogram {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keep only bins with `f_k <= f_max`.
    pub fn truncated(&self, f_max: f64) -> Self {
        let keep = self.freqs.iter().take_while(|&&f| f <= f_max).count();
        Self {
            values: self.values[..keep].to_vec(),
            freqs: self.freqs[..keep].to_vec(),
            n: self.n,
            dt: self.dt,
        }
    }
}

/// Frequencies `k/(NΔt)` for `k = 1 .. N/2 − 1`.
pub fn periodogram_grid(n: usize, dt: f64) -> Vec<f64> {
    (1..n / 2).map(|k| k as f64 / (n as f64 * dt)).collect()
}

/// Raw single-sided periodogram of mean-removed samples, DC and Nyquist excluded.
pub fn periodogram(samples: &[f64], dt: f64) -> Result<Periodogram> {
    let n = samples.len();
    if n % 2 != 0 || n < 8 {
        return Err(Error::Domain(format!(
            "periodogram needs an even sample count of at least 8, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("sampling period must be positive, got {dt}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
    fft_in_place(&mut buf, false);
    let scale = 2.0 * dt / n as f64;
    let values = buf[1..n / 2].iter().map(|x| scale * x.norm_sqr()).collect();
    Ok(Periodogram {
        values,
        freqs: periodogram_grid(n, dt),
        n,
        dt,
    })
}

/// Gaussian noise with a `S_1Hz / f^β` spectrum on the periodogram grid. The
/// DC bin is left empty, so the output has zero mean.
pub fn synthesize_one_over_f<R: Rng + ?Sized>(
    n: usize,
    dt: f64,
    s_1hz: f64,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n % 2 != 0 || n == 0 {
        return Err(Error::Domain(format!("sample count must be even, got {n}")));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let df = 1.0 / (n as f64 * dt);
    // E|X_k|² = N S(f_k) / (2Δt) makes the periodogram unbiased.
    let level = n as f64 / (2.0 * dt);
    for k in 1..n / 2 {
        let sd = (0.5 * level * one_over_f_psd(k as f64 * df, s_1hz, beta)).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        buf[k] = Complex64::new(sd * re, sd * im);
        buf[n - k] = buf[k].conj();
    }
    let z: f64 = StandardNormal.sample(rng);
    buf[n / 2] = Complex64::new(z * (level * one_over_f_psd(0.5 / dt, s_1hz, beta)).sqrt(), 0.0);
    fft_in_place(&mut buf, true);
    Ok(buf.iter().map(|x| x.re / n as f64).collect())
}

/// Band-limit to the Nyquist frequency of a grid `factor` times coarser and
/// resample onto it. The input length must be `factor` times an even count.
pub fn decimate(samples: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || samples.len() % factor != 0 || (samples.len() / factor) % 2 != 0 {
        return Err(Error::Domain(format!(
            "cannot decimate {} samples by {factor} onto an even grid",
            samples.len()
        )));
    }
    if factor == 1 {
        return Ok(samples.to_vec());
    }
    let n = samples.len() / factor;
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut buf, false);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    out[0] = buf[0];
    for k in 1..n / 2 {
        out[k] = buf[k];
        out[n - k] = buf[k].conj();
    }
    out[n / 2] = Complex64::new(buf[n / 2].re, 0.0);
    fft_in_place(&mut out, true);
    let scale = 1.0 / (n as f64 * factor as f64);
    Ok(out.iter().map(|x| x.re * scale).collect())
}

pub const LOWPASS_TAPS: usize = 129;
/// Roughly half the transition band of a 129-tap Hamming design, as a
/// fraction of Nyquist; the design corner sits this far above the passband edge.
const HALF_TRANSITION: f64 = 3.3 / LOWPASS_TAPS as f64;

/// Hamming-windowed sinc taps with corner `corner` (fraction of Nyquist) and
/// unit DC gain.
pub fn lowpass_taps(corner: f64) -> Vec<f64> {
    let m = (LOWPASS_TAPS - 1) as f64;
    let mut h: Vec<f64> = (0..LOWPASS_TAPS)
        .map(|i| {
            let x = i as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                corner
            } else {
                (PI * corner * x).sin() / (PI * x)
            };
            sinc * (0.54 - 0.46 * (2.0 * PI * i as f64 / m).cos())
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

fn fir_causal(h: &[f64], x: &[f64]) -> Vec<f64> {
    // History before the first sample is held at x[0] (steady-state start).
    let x0 = x[0];
    (0..x.len())
        .map(|n| {
            h.iter()
                .enumerate()
                .map(|(k, &hk)| hk * if n >= k { x[n - k] } else { x0 })
                .sum()
        })
        .collect()
}

/// Zero-phase low-pass. `cutoff_fraction` is the passband edge as a fraction
/// of Nyquist. Edges are extended by odd reflection before filtering forward
/// and backward.
pub fn lowpass_filter(samples: &[f64], cutoff_fraction: f64) -> Result<Vec<f64>> {
    if !(cutoff_fraction > 0.0 && cutoff_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "cutoff must lie in (0, 1) of Nyquist, got {cutoff_fraction}"
        )));
    }
    let n = samples.len();
    if n < 2 {
        return Ok(samples.to_vec());
    }
    let corner = (cutoff_fraction + HALF_TRANSITION).min(1.0);
    let h = lowpass_taps(corner);
    let pad = (3 * LOWPASS_TAPS).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * samples[0] - samples[i]);
    }
    ext.extend_from_slice(samples);
    for i in 1..=pad {
        ext.push(2.0 * samples[n - 1] - samples[n - 1 - i]);
    }
    let mut y = fir_causal(&h, &ext);
    y.reverse();
    let mut y = fir_causal(&h, &y);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

/// Element-wise mean of equally sized periodograms.
pub fn average_periodograms(list: &[Periodogram]) -> Result<Periodogram> {
    let first = list
        .first()
        .ok_or_else(|| Error::Domain("no periodograms to average".into()))?;
    let mut acc = vec![0.0; first.len()];
    for p in list {
        if p.len() != first.len() {
            return Err(Error::Domain("periodograms differ in length".into()));
        }
        acc.iter_mut().zip(&p.values).for_each(|(a, v)| *a += v);
    }
    let m = list.len() as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    Ok(Periodogram {
        values: acc,
        ..first.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBin {
    pub f_low: f64,
    pub f_high: f64,
    /// Geometric mean of the member frequencies.
    pub f_center: f64,
    pub mean: f64,
    pub count: usize,
}

/// Average `values` over `bins` logarithmically spaced intervals covering
/// `[f_low, f_high]`. Empty bins are dropped.
pub fn log_binned(freqs: &[f64], values: &[f64], f_low: f64, f_high: f64, bins: usize) -> Vec<LogBin> {
    let (la, lb) = (f_low.ln(), f_high.ln());
    let width = (lb - la) / bins as f64;
    let mut out = Vec::new();
    for b in 0..bins {
        let lo = (la + b as f64 * width).exp();
        let hi = if b + 1 == bins { f_high } else { (la + (b + 1) as f64 * width).exp() };
        let mut sum = 0.0;
        let mut lsum = 0.0;
        let mut count = 0;
        for (&f, &v) in freqs.iter().zip(values) {
            let inside = f >= lo && (f < hi || (b + 1 == bins && f <= hi));
            if inside {
                sum += v;
                lsum += f.ln();
                count += 1;
            }
        }
        if count > 0 {
            out.push(LogBin {
                f_low: lo,
                f_high: hi,
                f_center: (lsum / count as f64).exp(),
                mean: sum / count as f64,
                count,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdRow {
    pub f: f64,
    pub binding: f64,
    pub flicker: f64,
    pub total: f64,
}

/// Log-spaced PSD table.
pub fn psd_table(c_m: f64, c_i: f64, ctx: &PsdContext, f_min: f64, f_max: f64, points: usize) -> Result<Vec<PsdRow>> {
    check_frequency(f_min)?;
    check_frequency(f_max)?;
    if f_max < f_min || points == 0 {
        return Err(Error::Domain(format!(
            "need 0 < fmin <= fmax and points >= 1 (got {f_min}, {f_max}, {points})"
        )));
    }
    (0..points)
        .map(|i| {
            let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
            let f = (f_min.ln() + t * (f_max / f_min).ln()).exp();
            let binding = binding_noise_psd(f, c_m, c_i, ctx)?;
            let flicker = one_over_f_psd(f, ctx.flicker_power_1hz, ctx.flicker_exponent);
            Ok(PsdRow {
                f,
                binding,
                flicker,
                total: binding + flicker,
            })
        })
        .collect()
}

pub fn psd_table_csv(rows: &[PsdRow]) -> String {
    let mut s = String::from("f,S_b,S_f,S_total\n");
    for r in rows {
        let _ = writeln!(s, "{:e},{:e},{:e},{:e}", r.f, r.binding, r.flicker, r.total);
    }
    s
}
