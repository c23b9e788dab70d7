//! Advection-diffusion propagation and the log-normal interferer model.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationProfile {
    pub molecules: f64,
    pub cross_section: f64,
    pub diffusion: f64,
    pub velocity: f64,
}

impl ConcentrationProfile {
    pub fn new(molecules: f64, cross_section: f64, diffusion: f64, velocity: f64) -> Result<Self> {
        if !(molecules >= 0.0 && cross_section > 0.0 && diffusion > 0.0 && velocity >= 0.0) {
            return Err(Error::Domain(format!(
                "invalid profile: N_m={molecules}, A_ch={cross_section}, D={diffusion}, u={velocity}"
            )));
        }
        Ok(Self {
            molecules,
            cross_section,
            diffusion,
            velocity,
        })
    }

    /// Concentration (molecules/m³) at position `x` and time `t > 0`.
    pub fn concentration_at(&self, x: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        let spread = 4.0 * self.diffusion * t;
        let offset = x - self.velocity * t;
        Ok(self.molecules / (self.cross_section * (std::f64::consts::PI * spread).sqrt())
            * (-offset * offset / spread).exp())
    }
}

/// Peak concentration seen at the receiver, i.e. the profile at `x = u t_D`.
pub fn peak_concentration(molecules: f64, cross_section: f64, diffusion: f64, t_d: f64) -> Result<f64> {
    if !(t_d > 0.0 && cross_section > 0.0 && diffusion > 0.0) {
        return Err(Error::Domain(format!(
            "peak concentration needs positive A_ch, D, t_D (got {cross_section}, {diffusion}, {t_d})"
        )));
    }
    Ok(molecules / (cross_section * (4.0 * std::f64::consts::PI * diffusion * t_d).sqrt()))
}

/// Log-normal interferer concentration, parameterised by its own mean and std.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererDistribution {
    mean: f64,
    std: f64,
    /// Location of ln c_i.
    log_mu: f64,
    /// Scale of ln c_i.
    log_sigma: f64,
}

impl InterfererDistribution {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) || !(std >= 0.0 && std.is_finite()) {
            return Err(Error::Domain(format!(
                "interferer distribution needs mean > 0 and std >= 0, got ({mean}, {std})"
            )));
        }
        let ratio = std / mean;
        let b2 = (ratio * ratio).ln_1p();
        Ok(Self {
            mean,
            std,
            log_mu: mean.ln() - 0.5 * b2,
            log_sigma: b2.sqrt(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    /// Parameters `(a, b)` of the underlying normal for ln c_i.
    pub fn log_params(&self) -> (f64, f64) {
        (self.log_mu, self.log_sigma)
    }

    /// Mean and variance implied by `log_params`, for round-trip checks.
    pub fn implied_moments(&self) -> (f64, f64) {
        let (a, b) = (self.log_mu, self.log_sigma);
        let m = (a + 0.5 * b * b).exp();
        (m, m * m * (b * b).exp_m1())
    }
}

pub fn sample_interferer<R: Rng + ?Sized>(dist: &InterfererDistribution, rng: &mut R) -> f64 {
    if dist.std == 0.0 {
        return dist.mean;
    }
    let z: f64 = StandardNormal.sample(rng);
    (dist.log_mu + dist.log_sigma * z).exp()
}
