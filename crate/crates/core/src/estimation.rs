//! Whittle-likelihood estimation of ligand concentrations from a periodogram,
//! and the Fisher information that bounds its accuracy.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::params::{DerivedParams, SystemConfig};
use crate::quadrature::{integrate, QuadOptions};
use crate::spectral::{ModelSpectrum, PsdContext, PsdMode};

/// Relative step for the numerical PSD derivatives.
pub const DERIVATIVE_STEP: f64 = 1e-6;
/// Fraction of K_D below which the derivative step stops shrinking.
const DERIVATIVE_FLOOR: f64 = 1e-3;
/// Relative step for second derivatives inside the Newton Hessian.
const HESSIAN_STEP: f64 = 1e-4;
/// Estimates are kept within this factor of the dissociation constant.
const BOX_FACTOR: f64 = 1e6;

fn mode_of(lambda: &[f64]) -> Result<PsdMode> {
    match lambda.len() {
        1 => Ok(PsdMode::SingleLigand),
        2 => Ok(PsdMode::Full),
        n => Err(Error::Domain(format!("parameter vector must have 1 or 2 entries, got {n}"))),
    }
}

fn dissociation_constants(ctx: &PsdContext, dim: usize) -> Vec<f64> {
    [ctx.kinetics.k_d_m(), ctx.kinetics.k_d_i()][..dim].to_vec()
}

fn spectrum(freqs: &[f64], lambda: &[f64], ctx: &PsdContext) -> Vec<f64> {
    let m = ModelSpectrum::for_lambda(lambda, ctx);
    freqs.iter().map(|&f| m.total(f)).collect()
}

/// `Σ_k Y_k/S_k + ln S_k` for an already evaluated model spectrum.
pub fn whittle_nll_from_psd(y: &[f64], s: &[f64]) -> Result<f64> {
    let mut l = 0.0;
    for (&yk, &sk) in y.iter().zip(s) {
        if !(sk > 0.0 && sk.is_finite()) {
            return Err(Error::Numerical(format!("model PSD is {sk} inside the likelihood")));
        }
        l += yk / sk + sk.ln();
    }
    Ok(l)
}

/// Negative Whittle log-likelihood. `lambda` is `[c_m]` for the single-ligand
/// model or `[c_m, c_i]` for the full model.
pub fn whittle_nll(y: &[f64], freqs: &[f64], lambda: &[f64], ctx: &PsdContext) -> Result<f64> {
    mode_of(lambda)?;
    if y.len() != freqs.len() {
        return Err(Error::Domain(format!(
            "periodogram has {} bins but the grid has {}",
            y.len(),
            freqs.len()
        )));
    }
    if lambda.iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::Domain(format!("concentrations must be non-negative, got {lambda:?}")));
    }
    whittle_nll_from_psd(y, &spectrum(freqs, lambda, ctx))
}

/// Central-difference derivatives of the model spectrum with respect to each
/// concentration, at relative step `DERIVATIVE_STEP`.
fn psd_jacobian(freqs: &[f64], lambda: &[f64], ctx: &PsdContext) -> Vec<Vec<f64>> {
    (0..lambda.len())
        .map(|i| {
            let h = DERIVATIVE_STEP * lambda[i];
            let mut up = lambda.to_vec();
            let mut dn = lambda.to_vec();
            up[i] += h;
            dn[i] -= h;
            let (mu, md) = (
                ModelSpectrum::for_lambda(&up, ctx),
                ModelSpectrum::for_lambda(&dn, ctx),
            );
            let width = up[i] - dn[i];
            freqs.iter().map(|&f| (mu.total(f) - md.total(f)) / width).collect()
        })
        .collect()
}

/// Gradient of [`whittle_nll`] with respect to the concentrations.
pub fn whittle_gradient(y: &[f64], freqs: &[f64], lambda: &[f64], ctx: &PsdContext) -> Result<Vec<f64>> {
    mode_of(lambda)?;
    let s = spectrum(freqs, lambda, ctx);
    let ds = psd_jacobian(freqs, lambda, ctx);
    Ok(ds
        .iter()
        .map(|d| {
            y.iter()
                .zip(&s)
                .zip(d)
                .map(|((&yk, &sk), &dk)| (1.0 - yk / sk) / sk * dk)
                .sum()
        })
        .collect())
}

/// Coordinates the optimiser works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinates {
    /// `θ = ln(c / K_D)`; positivity is automatic.
    Log,
    /// `u = c / K_D`, projected back onto the positive box after each step.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Convergence when the log-coordinate gradient ∞-norm is below this
    /// times the number of bins.
    pub gradient_tolerance: f64,
    /// Largest step per iteration in log-concentration units.
    pub max_step: f64,
    pub coordinates: Coordinates,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            max_step: 2.0,
            coordinates: Coordinates::Log,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub lambda: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// ∞-norm of the (projected) log-coordinate gradient at the last iterate.
    pub gradient_norm: f64,
    pub std_errors: Option<Vec<f64>>,
}

impl Estimate {
    pub fn c_m(&self) -> f64 {
        self.lambda[0]
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "c_m_hat = {:e}", self.lambda[0]);
        if let Some(ci) = self.lambda.get(1) {
            let _ = writeln!(s, "c_i_hat = {ci:e}");
        }
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "objective = {:e}", self.objective);
        let _ = writeln!(s, "gradient_norm = {:e}", self.gradient_norm);
        if let Some(se) = &self.std_errors {
            let _ = writeln!(s, "se_c_m = {:e}", se[0]);
            if let Some(v) = se.get(1) {
                let _ = writeln!(s, "se_c_i = {v:e}");
            }
        }
        s
    }

    /// Attach `sqrt(diag(F⁻¹))`.
    pub fn with_standard_errors(mut self, fim: &FisherMatrix) -> Result<Self> {
        let inv = fim.inverse()?;
        self.std_errors = Some((0..fim.dim).map(|i| inv[i][i].sqrt()).collect());
        Ok(self)
    }
}

/// Log-spaced grid of `points` values over `[1e-2, 1e2]·K_D`; a single point
/// sits at `K_D`.
pub fn init_grid_axis(k_d: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![k_d];
    }
    (0..points)
        .map(|i| k_d * 10f64.powf(-2.0 + 4.0 * i as f64 / (points - 1) as f64))
        .collect()
}

/// Best point of a coarse log grid, used to start the optimiser.
pub fn coarse_grid_init(
    y: &[f64],
    freqs: &[f64],
    ctx: &PsdContext,
    mode: PsdMode,
    points: usize,
) -> Result<Vec<f64>> {
    Ok(grid_local_minima(y, freqs, ctx, mode, points)?.swap_remove(0))
}

/// Grid points whose objective is no larger than any neighbour's, best
/// first. Each marks a separate basin the optimiser may fall into.
pub fn grid_local_minima(
    y: &[f64],
    freqs: &[f64],
    ctx: &PsdContext,
    mode: PsdMode,
    points: usize,
) -> Result<Vec<Vec<f64>>> {
    if y.is_empty() {
        return Err(Error::Domain("empty periodogram".into()));
    }
    let dim = mode.dimension();
    let kd = dissociation_constants(ctx, dim);
    let axes: Vec<Vec<f64>> = kd.iter().map(|&k| init_grid_axis(k, points)).collect();
    let n1 = if dim == 2 { axes[1].len() } else { 1 };
    let n0 = axes[0].len();
    let point = |i: usize, j: usize| -> Vec<f64> {
        if dim == 2 {
            vec![axes[0][i], axes[1][j]]
        } else {
            vec![axes[0][i]]
        }
    };
    let mut values = vec![0.0; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            values[i * n1 + j] = whittle_nll(y, freqs, &point(i, j), ctx)?;
        }
    }
    let mut minima = Vec::new();
    for i in 0..n0 {
        for j in 0..n1 {
            let v = values[i * n1 + j];
            let mut lowest = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= n0 as i64 || b >= n1 as i64 {
                        continue;
                    }
                    if values[a as usize * n1 + b as usize] < v {
                        lowest = false;
                    }
                }
            }
            if lowest {
                minima.push((v, point(i, j)));
            }
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(minima.into_iter().map(|(_, p)| p).collect())
}

/// Run the optimiser from the `starts` best grid minima and keep the lowest
/// objective.
pub fn multi_start_estimate(
    y: &[f64],
    freqs: &[f64],
    ctx: &PsdContext,
    mode: PsdMode,
    points: usize,
    starts: usize,
    opts: &MleOptions,
) -> Result<Estimate> {
    let mut best: Option<Estimate> = None;
    for start in grid_local_minima(y, freqs, ctx, mode, points)?.iter().take(starts.max(1)) {
        let est = mle_estimate(y, freqs, start, ctx, opts)?;
        if best.as_ref().is_none_or(|b| est.objective < b.objective) {
            best = Some(est);
        }
    }
    Ok(best.expect("at least one grid minimum"))
}

struct Problem<'a> {
    y: &'a [f64],
    freqs: &'a [f64],
    ctx: &'a PsdContext,
    kd: Vec<f64>,
    coords: Coordinates,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct Local {
    value: f64,
    /// Gradient in optimiser coordinates.
    grad: Vec<f64>,
    hessian: [[f64; 2]; 2],
    fisher: [[f64; 2]; 2],
}

impl Problem<'_> {
    fn to_conc(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.kd)
            .map(|(&v, &k)| match self.coords {
                Coordinates::Log => k * v.exp(),
                Coordinates::Raw => k * v,
            })
            .collect()
    }

    fn project(&self, u: &mut [f64]) {
        for i in 0..u.len() {
            u[i] = u[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    fn value(&self, u: &[f64]) -> Result<f64> {
        whittle_nll_from_psd(self.y, &spectrum(self.freqs, &self.to_conc(u), self.ctx))
    }

    fn step(&self, u: &[f64], i: usize, rel: f64) -> f64 {
        match self.coords {
            Coordinates::Log => rel,
            Coordinates::Raw => rel * u[i].abs(),
        }
    }

    fn shifted(&self, u: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
        let mut v = u.to_vec();
        for &(i, d) in moves {
            v[i] += d;
        }
        spectrum(self.freqs, &self.to_conc(&v), self.ctx)
    }

    fn local(&self, u: &[f64]) -> Result<Local> {
        let dim = u.len();
        let s0 = spectrum(self.freqs, &self.to_conc(u), self.ctx);
        let value = whittle_nll_from_psd(self.y, &s0)?;
        let mut d1 = Vec::with_capacity(dim);
        let mut d2 = vec![vec![Vec::new(); dim]; dim];
        for i in 0..dim {
            let h = self.step(u, i, DERIVATIVE_STEP);
            let (p, m) = (self.shifted(u, &[(i, h)]), self.shifted(u, &[(i, -h)]));
            d1.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
            let h = self.step(u, i, HESSIAN_STEP);
            let (p, m) = (self.shifted(u, &[(i, h)]), self.shifted(u, &[(i, -h)]));
            d2[i][i] = p
                .iter()
                .zip(&m)
                .zip(&s0)
                .map(|((a, b), c)| (a - 2.0 * c + b) / (h * h))
                .collect();
        }
        if dim == 2 {
            let (h0, h1) = (self.step(u, 0, HESSIAN_STEP), self.step(u, 1, HESSIAN_STEP));
            let pp = self.shifted(u, &[(0, h0), (1, h1)]);
            let pm = self.shifted(u, &[(0, h0), (1, -h1)]);
            let mp = self.shifted(u, &[(0, -h0), (1, h1)]);
            let mm = self.shifted(u, &[(0, -h0), (1, -h1)]);
            d2[0][1] = (0..s0.len())
                .map(|k| (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h0 * h1))
                .collect();
            d2[1][0] = d2[0][1].clone();
        }
        let mut grad = vec![0.0; dim];
        let mut hessian = [[0.0; 2]; 2];
        let mut fisher = [[0.0; 2]; 2];
        for k in 0..s0.len() {
            let (yk, sk) = (self.y[k], s0[k]);
            let r = yk / sk;
            for i in 0..dim {
                grad[i] += (1.0 - r) / sk * d1[i][k];
                for j in 0..dim {
                    let cross = d1[i][k] * d1[j][k] / (sk * sk);
                    hessian[i][j] += (2.0 * r - 1.0) * cross + (1.0 - r) / sk * d2[i][j][k];
                    fisher[i][j] += cross;
                }
            }
        }
        Ok(Local {
            value,
            grad,
            hessian,
            fisher,
        })
    }

    /// Coordinates not held at a bound by the gradient.
    fn free_coordinates(&self, u: &[f64], grad: &[f64]) -> Vec<bool> {
        (0..u.len())
            .map(|i| !((u[i] <= self.lower[i] && grad[i] > 0.0) || (u[i] >= self.upper[i] && grad[i] < 0.0)))
            .collect()
    }

    /// Gradient expressed in log coordinates, with components pinned at an
    /// active bound zeroed.
    fn convergence_gradient(&self, u: &[f64], grad: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|i| {
                let g = match self.coords {
                    Coordinates::Log => grad[i],
                    Coordinates::Raw => grad[i] * u[i],
                };
                let pinned = (u[i] <= self.lower[i] && g > 0.0) || (u[i] >= self.upper[i] && g < 0.0);
                if pinned {
                    0.0
                } else {
                    g
                }
            })
            .collect()
    }
}

/// Relative objective change treated as rounding noise.
const RESOLUTION: f64 = 64.0 * f64::EPSILON;

/// Newton direction on the free coordinates, falling back to Fisher scoring
/// and then steepest descent. The flag is true for a Newton or scoring step.
fn descent_direction(local: &Local, free: &[bool]) -> (Vec<f64>, bool) {
    let dim = free.len();
    let idx: Vec<usize> = (0..dim).filter(|&i| free[i]).collect();
    let mut dir = vec![0.0; dim];
    if idx.is_empty() {
        return (dir, true);
    }
    let sub = |m: &[[f64; 2]; 2]| {
        let mut r = [[0.0; 2]; 2];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                r[a][b] = m[i][j];
            }
        }
        r
    };
    let neg: Vec<f64> = idx.iter().map(|&i| -local.grad[i]).collect();
    let (step, newton) = match solve_pd(&sub(&local.hessian), &neg).or_else(|| solve_pd(&sub(&local.fisher), &neg)) {
        Some(s) => (s, true),
        None => (neg, false),
    };
    for (a, &i) in idx.iter().enumerate() {
        dir[i] = step[a];
    }
    (dir, newton)
}

/// Solve `A x = b` if `A` is positive definite.
fn solve_pd(a: &[[f64; 2]; 2], b: &[f64]) -> Option<Vec<f64>> {
    match b.len() {
        1 => (a[0][0] > 0.0).then(|| vec![b[0] / a[0][0]]),
        _ => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            (a[0][0] > 0.0 && det > 0.0).then(|| {
                vec![
                    (a[1][1] * b[0] - a[0][1] * b[1]) / det,
                    (a[0][0] * b[1] - a[1][0] * b[0]) / det,
                ]
            })
        }
    }
}

/// Damped Newton minimisation of the Whittle objective from `lambda0`. When
/// the Hessian is not positive definite the step uses the Fisher scoring
/// metric instead.
pub fn mle_estimate(
    y: &[f64],
    freqs: &[f64],
    lambda0: &[f64],
    ctx: &PsdContext,
    opts: &MleOptions,
) -> Result<Estimate> {
    let dim = mode_of(lambda0)?.dimension();
    if lambda0.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Domain(format!("initial point must be positive, got {lambda0:?}")));
    }
    if y.len() != freqs.len() || y.is_empty() {
        return Err(Error::Domain("periodogram and grid must be non-empty and equal in length".into()));
    }
    let kd = dissociation_constants(ctx, dim);
    let (lower, upper) = match opts.coordinates {
        Coordinates::Log => (vec![-BOX_FACTOR.ln(); dim], vec![BOX_FACTOR.ln(); dim]),
        Coordinates::Raw => (vec![1.0 / BOX_FACTOR; dim], vec![BOX_FACTOR; dim]),
    };
    let p = Problem {
        y,
        freqs,
        ctx,
        kd: kd.clone(),
        coords: opts.coordinates,
        lower,
        upper,
    };
    let mut u: Vec<f64> = lambda0
        .iter()
        .zip(&kd)
        .map(|(&c, &k)| match opts.coordinates {
            Coordinates::Log => (c / k).ln(),
            Coordinates::Raw => c / k,
        })
        .collect();
    p.project(&mut u);

    let tol = opts.gradient_tolerance * y.len() as f64;
    let mut iterations = 0;
    let mut local = p.local(&u)?;
    loop {
        let g = p.convergence_gradient(&u, &local.grad);
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        log::trace!("iteration {iterations}: u = {u:?}, objective {:e}, |g| {gnorm:e}", local.value);
        if gnorm <= tol || iterations >= opts.max_iterations {
            return Ok(Estimate {
                lambda: p.to_conc(&u),
                converged: gnorm <= tol,
                iterations,
                objective: local.value,
                gradient_norm: gnorm,
                std_errors: None,
            });
        }
        iterations += 1;
        let (mut dir, newton) = descent_direction(&local, &p.free_coordinates(&u, &local.grad));
        let longest = (0..dim)
            .map(|i| match opts.coordinates {
                Coordinates::Log => dir[i].abs(),
                Coordinates::Raw => (dir[i] / u[i]).abs(),
            })
            .fold(0.0f64, f64::max);
        if longest > opts.max_step {
            let r = opts.max_step / longest;
            dir.iter_mut().for_each(|d| *d *= r);
        }
        // Once the predicted decrease is below what the objective can resolve,
        // the Armijo test only sees rounding noise; trust the Newton step.
        let predicted: f64 = -0.5 * (0..dim).map(|i| local.grad[i] * dir[i]).sum::<f64>();
        if newton && predicted <= RESOLUTION * (1.0 + local.value.abs()) {
            let mut next: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + d).collect();
            p.project(&mut next);
            if next == u {
                return Ok(Estimate {
                    lambda: p.to_conc(&u),
                    converged: gnorm <= tol,
                    iterations,
                    objective: local.value,
                    gradient_norm: gnorm,
                    std_errors: None,
                });
            }
            u = next;
            local = p.local(&u)?;
            continue;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            p.project(&mut trial);
            let slope: f64 = (0..dim).map(|i| local.grad[i] * (trial[i] - u[i])).sum();
            match p.value(&trial) {
                Ok(v) if v <= local.value + 1e-4 * slope => {
                    accepted = Some(trial);
                    break;
                }
                _ => t *= 0.5,
            }
        }
        match accepted {
            Some(next) if next != u => {
                u = next;
                local = p.local(&u)?;
            }
            _ => {
                // No further decrease is representable; report where we are.
                log::debug!("line search stalled after {iterations} iterations");
                return Ok(Estimate {
                    lambda: p.to_conc(&u),
                    converged: gnorm <= tol,
                    iterations,
                    objective: local.value,
                    gradient_norm: gnorm,
                    std_errors: None,
                });
            }
        }
    }
}

impl PsdMode {
    pub fn dimension(self) -> usize {
        match self {
            PsdMode::Full => 2,
            PsdMode::SingleLigand => 1,
        }
    }
}

/// Fisher information for `λ` from an `N`-sample window at period `dt`.
/// Symmetric by construction; `dim` is 1 in single-ligand mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    pub matrix: [[f64; 2]; 2],
    pub dim: usize,
    pub lambda: [f64; 2],
    pub n: usize,
    pub dt: f64,
}

/// Determinants below this fraction of `F₁₁F₂₂` count as singular.
pub const SINGULARITY_RATIO: f64 = 1e-12;

impl FisherMatrix {
    pub fn inverse(&self) -> Result<[[f64; 2]; 2]> {
        let m = self.matrix;
        if self.dim == 1 {
            if !(m[0][0] > 0.0) {
                return Err(Error::NonIdentifiable {
                    det: m[0][0],
                    threshold: 0.0,
                });
            }
            return Ok([[1.0 / m[0][0], 0.0], [0.0, 0.0]]);
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let threshold = SINGULARITY_RATIO * m[0][0] * m[1][1];
        if !(det >= threshold && det > 0.0) {
            return Err(Error::NonIdentifiable { det, threshold });
        }
        Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
    }

    /// Cramér-Rao variance bound for `ĉ_m`.
    pub fn variance_cm(&self) -> Result<f64> {
        Ok(self.inverse()?[0][0])
    }
}

fn psd_and_gradient(f: f64, lambda: &[f64], ctx: &PsdContext) -> (f64, [f64; 2]) {
    let s = ModelSpectrum::for_lambda(lambda, ctx).total(f);
    let mut d = [0.0; 2];
    let k_d = [ctx.kinetics.k_d_m(), ctx.kinetics.k_d_i()];
    for i in 0..lambda.len() {
        // A concentration far below K_D barely moves S, so a step relative to
        // it alone leaves the difference in round-off. Below the floor the
        // difference is one-sided to stay positive.
        let h = DERIVATIVE_STEP * lambda[i].max(DERIVATIVE_FLOOR * k_d[i]);
        let mut up = lambda.to_vec();
        let mut dn = lambda.to_vec();
        up[i] += h;
        if h < lambda[i] {
            dn[i] -= h;
        }
        d[i] = (ModelSpectrum::for_lambda(&up, ctx).total(f) - ModelSpectrum::for_lambda(&dn, ctx).total(f))
            / (up[i] - dn[i]);
    }
    (s, d)
}

/// `F_ij = NΔt ∫₀^{1/(2Δt)} ∂_iS ∂_jS / S² df`, the continuum limit of the
/// per-bin Whittle information `Σ_k ∂_iS ∂_jS / S²`.
pub fn fisher_matrix(lambda: &[f64], n: usize, dt: f64, ctx: &PsdContext) -> Result<FisherMatrix> {
    let mode = mode_of(lambda)?;
    if lambda.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Domain(format!("Fisher information needs positive concentrations, got {lambda:?}")));
    }
    if !(dt > 0.0) || n == 0 {
        return Err(Error::Domain(format!("need N > 0 and dt > 0 (got {n}, {dt})")));
    }
    let f_nyq = 0.5 / dt;
    let opts = QuadOptions::default();
    let window = n as f64 * dt;
    let mut matrix = [[0.0; 2]; 2];
    match mode {
        PsdMode::SingleLigand => {
            let [v] = integrate(
                |f| {
                    let (s, d) = psd_and_gradient(f, lambda, ctx);
                    [d[0] * d[0] / (s * s)]
                },
                0.0,
                f_nyq,
                opts,
            )?;
            matrix[0][0] = window * v;
        }
        PsdMode::Full => {
            let [a, b, c] = integrate(
                |f| {
                    let (s, d) = psd_and_gradient(f, lambda, ctx);
                    let s2 = s * s;
                    [d[0] * d[0] / s2, d[0] * d[1] / s2, d[1] * d[1] / s2]
                },
                0.0,
                f_nyq,
                opts,
            )?;
            matrix = [[window * a, window * b], [window * b, window * c]];
        }
    }
    let fim = FisherMatrix {
        matrix,
        dim: mode.dimension(),
        lambda: [lambda[0], lambda.get(1).copied().unwrap_or(0.0)],
        n,
        dt,
    };
    if mode == PsdMode::Full {
        fim.inverse()?;
    }
    Ok(fim)
}

/// Per-bin Whittle information `Σ_k ∂_iS ∂_jS / S²` on an explicit grid.
pub fn fisher_from_bins(freqs: &[f64], lambda: &[f64], ctx: &PsdContext) -> Result<[[f64; 2]; 2]> {
    mode_of(lambda)?;
    let mut m = [[0.0; 2]; 2];
    for &f in freqs {
        let (s, d) = psd_and_gradient(f, lambda, ctx);
        for i in 0..lambda.len() {
            for j in 0..lambda.len() {
                m[i][j] += d[i] * d[j] / (s * s);
            }
        }
    }
    Ok(m)
}

/// Variances of `ĉ_m` for bit 0 and bit 1. Full mode evaluates the
/// two-ligand information at the mean interferer concentration; single-ligand
/// mode ignores the interferer.
pub fn estimator_variances(cfg: &SystemConfig, derived: &DerivedParams, mode: PsdMode) -> Result<(f64, f64)> {
    let ctx = PsdContext::new(cfg, derived);
    let var = |c_m: f64| -> Result<f64> {
        let lambda = match mode {
            PsdMode::Full => vec![c_m, derived.interferer_mean],
            PsdMode::SingleLigand => vec![c_m],
        };
        fisher_matrix(&lambda, cfg.samples, cfg.sampling_period, &ctx)?.variance_cm()
    };
    Ok((var(derived.c_m0)?, var(derived.c_m1)?))
}
