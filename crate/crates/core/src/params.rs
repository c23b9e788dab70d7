//! System configuration and derived physical quantities.
//!
//! Configuration files are plain `key = value` lines with `#` comments. Every
//! key is optional; anything missing keeps its default. Concentrations are
//! carried as molecules/m³ everywhere except `c_ion`, which is read in
//! mol/m³ and converted where the Debye length needs it.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::channel;
use crate::constants::{AVOGADRO, BOLTZMANN, ELEMENTARY_CHARGE, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};

/// Inputs to the model. Field comments give the config key and unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// `T` (K)
    pub temperature: f64,
    /// `h_ch` (m)
    pub channel_height: f64,
    /// `w_ch` (m)
    pub channel_width: f64,
    /// `u` (m/s)
    pub flow_velocity: f64,
    /// `x_R` (m)
    pub receiver_distance: f64,
    /// `c_ion` (mol/m³)
    pub ionic_concentration: f64,
    /// `eps_r`
    pub relative_permittivity: f64,
    /// `D_0` (m²/s)
    pub intrinsic_diffusion: f64,
    /// `k_plus_m` (m³/s)
    pub k_on_m: f64,
    /// `k_plus_i` (m³/s)
    pub k_on_i: f64,
    /// `k_minus_m` (1/s)
    pub k_off_m: f64,
    /// `k_minus_i` (1/s)
    pub k_off_i: f64,
    /// `N_e`
    pub electrons_per_ligand: f64,
    /// `N_r`
    pub receptor_count: u32,
    /// `r` (m)
    pub receptor_length: f64,
    /// `g` (A/V)
    pub transconductance: f64,
    /// `l_gr` (m)
    pub graphene_width: f64,
    /// `c_q` (F/m²)
    pub quantum_capacitance: f64,
    /// `N_m0`
    pub molecules_bit0: f64,
    /// `N_m1`
    pub molecules_bit1: f64,
    /// `N`
    pub samples: usize,
    /// `dt` (s)
    pub sampling_period: f64,
    /// `gamma`: mean interferer concentration over the bit-1 peak concentration.
    pub interference_ratio: f64,
    /// `ci_mean_std_ratio`
    pub interference_mean_std_ratio: f64,
    /// `S_f_1Hz` (A²/Hz)
    pub flicker_power_1hz: f64,
    /// `beta`
    pub flicker_exponent: f64,
    /// `f_L` (Hz)
    pub flicker_f_low: f64,
    /// `f_H` (Hz)
    pub flicker_f_high: f64,
    /// `l_ch` (m): length scale in the dispersion formula; defaults to `w_ch`.
    pub channel_length: Option<f64>,
    /// `A_Gr` (m²): exposed graphene area; defaults to `l_gr²`.
    pub graphene_area: Option<f64>,
    /// `oversample`: SSA recording rate as a multiple of 1/dt before band-limited
    /// decimation. 1 records point samples directly.
    pub acquisition_oversample: usize,
    /// `lpf_cutoff`: low-pass passband edge as a fraction of Nyquist.
    pub lpf_cutoff: f64,
    /// `burn_in_factor`: SSA burn-in in units of the slowest relaxation time.
    pub burn_in_factor: f64,
    /// `grid_points`: points per axis of the MLE initialisation grid.
    pub init_grid_points: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            temperature: 300.0,
            channel_height: 5e-6,
            channel_width: 10e-6,
            flow_velocity: 10e-6,
            receiver_distance: 1e-3,
            ionic_concentration: 30.0,
            relative_permittivity: 80.0,
            intrinsic_diffusion: 2e-11,
            k_on_m: 4e-17,
            k_on_i: 4e-17,
            k_off_m: 2.0,
            k_off_i: 8.0,
            electrons_per_ligand: 3.0,
            receptor_count: 120,
            receptor_length: 2e-9,
            transconductance: 1.9044e-4,
            graphene_width: 10e-6,
            quantum_capacitance: 2e-2,
            molecules_bit0: 1e3,
            molecules_bit1: 5e3,
            samples: 700,
            sampling_period: 0.005,
            interference_ratio: 0.7,
            interference_mean_std_ratio: 10.0,
            flicker_power_1hz: 1e-23,
            flicker_exponent: 1.0,
            flicker_f_low: 1e-8,
            flicker_f_high: 1e7,
            channel_length: None,
            graphene_area: None,
            acquisition_oversample: 8,
            lpf_cutoff: 0.8,
            burn_in_factor: 10.0,
            init_grid_points: 12,
        }
    }
}

/// Config keys in canonical output order, with a short description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("T", "temperature (K)"),
    ("h_ch", "channel height (m)"),
    ("w_ch", "channel width (m)"),
    ("u", "mean flow velocity (m/s)"),
    ("x_R", "transmitter to receiver distance (m)"),
    ("c_ion", "ionic concentration (mol/m^3)"),
    ("eps_r", "relative permittivity"),
    ("D_0", "intrinsic diffusion coefficient (m^2/s)"),
    ("k_plus_m", "information binding rate (m^3/s)"),
    ("k_plus_i", "interferer binding rate (m^3/s)"),
    ("k_minus_m", "information unbinding rate (1/s)"),
    ("k_minus_i", "interferer unbinding rate (1/s)"),
    ("N_e", "electrons per ligand"),
    ("N_r", "receptor count"),
    ("r", "receptor length (m)"),
    ("g", "transconductance (A/V)"),
    ("l_gr", "graphene width (m)"),
    ("c_q", "quantum capacitance per area (F/m^2)"),
    ("N_m0", "molecules released for bit 0"),
    ("N_m1", "molecules released for bit 1"),
    ("N", "samples per window (even)"),
    ("dt", "sampling period (s)"),
    ("gamma", "mean interferer / bit-1 peak concentration"),
    ("ci_mean_std_ratio", "interferer mean / std"),
    ("S_f_1Hz", "1/f noise power at 1 Hz (A^2/Hz)"),
    ("beta", "1/f noise exponent"),
    ("f_L", "1/f lower band limit (Hz)"),
    ("f_H", "1/f upper band limit (Hz)"),
    ("l_ch", "dispersion length scale (m), default w_ch"),
    ("A_Gr", "graphene area (m^2), default l_gr^2"),
    ("eta", "similarity K_Di/K_Dm; rewrites k_minus_i and gamma"),
    ("oversample", "SSA oversampling factor before decimation"),
    ("lpf_cutoff", "low-pass passband edge / Nyquist"),
    ("burn_in_factor", "SSA burn-in / slowest relaxation time"),
    ("grid_points", "MLE initialisation grid points per axis"),
];

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("`{key}` expects a number, got `{value}`"),
    })
}

fn parse_count(line: usize, key: &str, value: &str) -> Result<u64> {
    // Accept `700`, `700.0` and `7e2`, but not fractional counts.
    let v = parse_f64(line, key, value)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::Parse {
            line,
            message: format!("`{key}` expects a non-negative integer, got `{value}`"),
        });
    }
    Ok(v as u64)
}

pub fn load_config_file(path: &std::path::Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_config(&text)
}

/// Parse a `key = value` document on top of the defaults and validate it.
pub fn load_config(text: &str) -> Result<SystemConfig> {
    let mut cfg = SystemConfig::default();
    let mut eta = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("missing value for `{key}`"),
            });
        }
        match key {
            "T" => cfg.temperature = parse_f64(line, key, value)?,
            "h_ch" => cfg.channel_height = parse_f64(line, key, value)?,
            "w_ch" => cfg.channel_width = parse_f64(line, key, value)?,
            "u" => cfg.flow_velocity = parse_f64(line, key, value)?,
            "x_R" => cfg.receiver_distance = parse_f64(line, key, value)?,
            "c_ion" => cfg.ionic_concentration = parse_f64(line, key, value)?,
            "eps_r" => cfg.relative_permittivity = parse_f64(line, key, value)?,
            "D_0" => cfg.intrinsic_diffusion = parse_f64(line, key, value)?,
            "k_plus_m" => cfg.k_on_m = parse_f64(line, key, value)?,
            "k_plus_i" => cfg.k_on_i = parse_f64(line, key, value)?,
            "k_minus_m" => cfg.k_off_m = parse_f64(line, key, value)?,
            "k_minus_i" => cfg.k_off_i = parse_f64(line, key, value)?,
            "N_e" => cfg.electrons_per_ligand = parse_f64(line, key, value)?,
            "N_r" => cfg.receptor_count = parse_count(line, key, value)? as u32,
            "r" => cfg.receptor_length = parse_f64(line, key, value)?,
            "g" => cfg.transconductance = parse_f64(line, key, value)?,
            "l_gr" => cfg.graphene_width = parse_f64(line, key, value)?,
            "c_q" => cfg.quantum_capacitance = parse_f64(line, key, value)?,
            "N_m0" => cfg.molecules_bit0 = parse_f64(line, key, value)?,
            "N_m1" => cfg.molecules_bit1 = parse_f64(line, key, value)?,
            "N" => cfg.samples = parse_count(line, key, value)? as usize,
            "dt" => cfg.sampling_period = parse_f64(line, key, value)?,
            "gamma" => cfg.interference_ratio = parse_f64(line, key, value)?,
            "ci_mean_std_ratio" => cfg.interference_mean_std_ratio = parse_f64(line, key, value)?,
            "S_f_1Hz" => cfg.flicker_power_1hz = parse_f64(line, key, value)?,
            "beta" => cfg.flicker_exponent = parse_f64(line, key, value)?,
            "f_L" => cfg.flicker_f_low = parse_f64(line, key, value)?,
            "f_H" => cfg.flicker_f_high = parse_f64(line, key, value)?,
            "l_ch" => cfg.channel_length = Some(parse_f64(line, key, value)?),
            "A_Gr" => cfg.graphene_area = Some(parse_f64(line, key, value)?),
            "eta" => eta = Some((line, parse_f64(line, key, value)?)),
            "oversample" => cfg.acquisition_oversample = parse_count(line, key, value)? as usize,
            "lpf_cutoff" => cfg.lpf_cutoff = parse_f64(line, key, value)?,
            "burn_in_factor" => cfg.burn_in_factor = parse_f64(line, key, value)?,
            "grid_points" => cfg.init_grid_points = parse_count(line, key, value)? as usize,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }
    if let Some((line, eta)) = eta {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("`eta` must be positive, got {eta}"),
            });
        }
        cfg = cfg.with_similarity(eta);
    }
    cfg.validate()?;
    Ok(cfg)
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 27] = [
            ("T", self.temperature),
            ("h_ch", self.channel_height),
            ("w_ch", self.channel_width),
            ("u", self.flow_velocity),
            ("x_R", self.receiver_distance),
            ("c_ion", self.ionic_concentration),
            ("eps_r", self.relative_permittivity),
            ("D_0", self.intrinsic_diffusion),
            ("k_plus_m", self.k_on_m),
            ("k_plus_i", self.k_on_i),
            ("k_minus_m", self.k_off_m),
            ("k_minus_i", self.k_off_i),
            ("N_e", self.electrons_per_ligand),
            ("r", self.receptor_length),
            ("g", self.transconductance),
            ("l_gr", self.graphene_width),
            ("c_q", self.quantum_capacitance),
            ("N_m0", self.molecules_bit0),
            ("N_m1", self.molecules_bit1),
            ("dt", self.sampling_period),
            ("gamma", self.interference_ratio),
            ("ci_mean_std_ratio", self.interference_mean_std_ratio),
            ("S_f_1Hz", self.flicker_power_1hz),
            ("f_L", self.flicker_f_low),
            ("f_H", self.flicker_f_high),
            ("lpf_cutoff", self.lpf_cutoff),
            ("burn_in_factor", self.burn_in_factor),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [("l_ch", self.channel_length), ("A_Gr", self.graphene_area)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::validation(field, format!("must be positive, got {v}")));
                }
            }
        }
        if self.receptor_count == 0 {
            return Err(Error::validation("N_r", "must be at least 1"));
        }
        if self.samples % 2 != 0 {
            return Err(Error::validation("N", format!("must be even, got {}", self.samples)));
        }
        if self.samples < 8 {
            return Err(Error::validation("N", format!("must be at least 8, got {}", self.samples)));
        }
        if self.molecules_bit0 >= self.molecules_bit1 {
            return Err(Error::validation(
                "N_m0",
                format!(
                    "must be below N_m1 ({} >= {})",
                    self.molecules_bit0, self.molecules_bit1
                ),
            ));
        }
        if self.flicker_f_low >= self.flicker_f_high {
            return Err(Error::validation("f_L", "must be below f_H"));
        }
        if !self.flicker_exponent.is_finite() || self.flicker_exponent < 0.0 {
            return Err(Error::validation("beta", "must be a non-negative number"));
        }
        if !(0.8..=1.2).contains(&self.flicker_exponent) {
            log::warn!(
                "beta = {} lies outside the typical 0.8..=1.2 range for graphene 1/f noise",
                self.flicker_exponent
            );
        }
        if self.lpf_cutoff >= 1.0 {
            return Err(Error::validation("lpf_cutoff", "must be below 1 (fraction of Nyquist)"));
        }
        if self.acquisition_oversample == 0 {
            return Err(Error::validation("oversample", "must be at least 1"));
        }
        if self.init_grid_points == 0 {
            return Err(Error::validation("grid_points", "must be at least 1"));
        }
        Ok(())
    }

    /// Dissociation-constant ratio K_Di / K_Dm.
    pub fn similarity(&self) -> f64 {
        (self.k_off_i / self.k_on_i) / (self.k_off_m / self.k_on_m)
    }

    /// Reconfigure to similarity `eta` while keeping the interferer's
    /// equilibrium occupancy fixed: `k_minus_i` is set so that
    /// `K_Di = eta * K_Dm`, and the mean interferer concentration is scaled by
    /// `eta / eta_current`.
    pub fn with_similarity(&self, eta: f64) -> Self {
        let current = self.similarity();
        let mut out = self.clone();
        let k_d_m = self.k_off_m / self.k_on_m;
        out.k_off_i = eta * k_d_m * self.k_on_i;
        out.interference_ratio = self.interference_ratio * eta / current;
        out
    }

    /// The config as `key = value` lines, in canonical order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("T", format!("{:e}", self.temperature));
        put("h_ch", format!("{:e}", self.channel_height));
        put("w_ch", format!("{:e}", self.channel_width));
        put("u", format!("{:e}", self.flow_velocity));
        put("x_R", format!("{:e}", self.receiver_distance));
        put("c_ion", format!("{:e}", self.ionic_concentration));
        put("eps_r", format!("{:e}", self.relative_permittivity));
        put("D_0", format!("{:e}", self.intrinsic_diffusion));
        put("k_plus_m", format!("{:e}", self.k_on_m));
        put("k_plus_i", format!("{:e}", self.k_on_i));
        put("k_minus_m", format!("{:e}", self.k_off_m));
        put("k_minus_i", format!("{:e}", self.k_off_i));
        put("N_e", format!("{:e}", self.electrons_per_ligand));
        put("N_r", self.receptor_count.to_string());
        put("r", format!("{:e}", self.receptor_length));
        put("g", format!("{:e}", self.transconductance));
        put("l_gr", format!("{:e}", self.graphene_width));
        put("c_q", format!("{:e}", self.quantum_capacitance));
        put("N_m0", format!("{:e}", self.molecules_bit0));
        put("N_m1", format!("{:e}", self.molecules_bit1));
        put("N", self.samples.to_string());
        put("dt", format!("{:e}", self.sampling_period));
        put("gamma", format!("{:e}", self.interference_ratio));
        put("ci_mean_std_ratio", format!("{:e}", self.interference_mean_std_ratio));
        put("S_f_1Hz", format!("{:e}", self.flicker_power_1hz));
        put("beta", format!("{:e}", self.flicker_exponent));
        put("f_L", format!("{:e}", self.flicker_f_low));
        put("f_H", format!("{:e}", self.flicker_f_high));
        if let Some(v) = self.channel_length {
            put("l_ch", format!("{v:e}"));
        }
        if let Some(v) = self.graphene_area {
            put("A_Gr", format!("{v:e}"));
        }
        put("oversample", self.acquisition_oversample.to_string());
        put("lpf_cutoff", format!("{:e}", self.lpf_cutoff));
        put("burn_in_factor", format!("{:e}", self.burn_in_factor));
        put("grid_points", self.init_grid_points.to_string());
        s
    }

    /// Short stable hash of the canonical key-value form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_kv().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Debye screening length (m). `c_ion` is in mol/m³.
pub fn debye_length(relative_permittivity: f64, temperature: f64, c_ion: f64) -> f64 {
    let eps = relative_permittivity * VACUUM_PERMITTIVITY;
    (eps * BOLTZMANN * temperature
        / (2.0 * AVOGADRO * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * c_ion))
        .sqrt()
}

/// Screened charge of one elementary charge sitting `receptor_length` above
/// the surface.
pub fn effective_charge(receptor_length: f64, debye_length: f64) -> f64 {
    ELEMENTARY_CHARGE * (-receptor_length / debye_length).exp()
}

/// Taylor-dispersion-corrected diffusion coefficient for a rectangular channel.
pub fn effective_diffusion(d0: f64, u: f64, h_ch: f64, l_ch: f64) -> f64 {
    let num = 8.5 * u * u * h_ch * h_ch * l_ch * l_ch;
    let den = 210.0 * d0 * d0 * (h_ch * h_ch + 2.4 * h_ch * l_ch + l_ch * l_ch);
    (1.0 + num / den) * d0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transduction {
    /// Series gate capacitance (F).
    pub gate_capacitance: f64,
    /// Current change per bound receptor (A).
    pub gain: f64,
}

/// Series gate capacitance and per-receptor current gain.
pub fn transduction_gain(
    q_eff: f64,
    electrons_per_ligand: f64,
    transconductance: f64,
    c_gr: f64,
    c_q: f64,
) -> Transduction {
    let gate_capacitance = 1.0 / (1.0 / c_gr + 1.0 / c_q);
    Transduction {
        gate_capacitance,
        gain: q_eff * electrons_per_ligand * transconductance / gate_capacitance,
    }
}

/// Variance of band-limited 1/f noise: a flat floor below `f_low` plus the
/// power-law integral up to `f_high`.
pub fn one_over_f_variance(s_1hz: f64, beta: f64, f_low: f64, f_high: f64) -> f64 {
    let floor = f_low * s_1hz / f_low.powf(beta);
    let span = (f_high / f_low).ln();
    // ∫ f^-β = f_L^(1-β) · span · expm1(x)/x with x = (1-β)·span; x → 0 is the log case.
    let x = (1.0 - beta) * span;
    let shape = if x.abs() < 1e-12 { 1.0 } else { x.exp_m1() / x };
    floor + s_1hz * f_low.powf(1.0 - beta) * span * shape
}

/// Everything computed from a [`SystemConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    /// K_Dm (molecules/m³)
    pub k_d_m: f64,
    /// K_Di (molecules/m³)
    pub k_d_i: f64,
    /// λ_D (m)
    pub debye_length: f64,
    /// q_eff (C)
    pub effective_charge: f64,
    /// Graphene area actually used (m²).
    pub graphene_area: f64,
    /// Dispersion length scale actually used (m).
    pub channel_length: f64,
    /// C_Gr (F)
    pub double_layer_capacitance: f64,
    /// C_Q (F)
    pub quantum_capacitance: f64,
    /// C_G (F)
    pub gate_capacitance: f64,
    /// ζ (A per bound receptor)
    pub zeta: f64,
    /// D (m²/s)
    pub effective_diffusion: f64,
    /// A_ch (m²)
    pub channel_area: f64,
    /// t_D (s)
    pub transit_time: f64,
    /// Peak information concentration for bit 0 (molecules/m³).
    pub c_m0: f64,
    /// Peak information concentration for bit 1 (molecules/m³).
    pub c_m1: f64,
    /// μ_ci (molecules/m³)
    pub interferer_mean: f64,
    /// σ_ci (molecules/m³)
    pub interferer_std: f64,
    /// σ²_f (A²)
    pub flicker_variance: f64,
}

impl DerivedParams {
    pub fn peak_concentration(&self, bit: u8) -> f64 {
        if bit == 0 {
            self.c_m0
        } else {
            self.c_m1
        }
    }

    pub fn to_kv(&self) -> String {
        let rows = [
            ("K_Dm", self.k_d_m),
            ("K_Di", self.k_d_i),
            ("lambda_D", self.debye_length),
            ("q_eff", self.effective_charge),
            ("A_Gr", self.graphene_area),
            ("l_ch", self.channel_length),
            ("C_Gr", self.double_layer_capacitance),
            ("C_Q", self.quantum_capacitance),
            ("C_G", self.gate_capacitance),
            ("zeta", self.zeta),
            ("D", self.effective_diffusion),
            ("A_ch", self.channel_area),
            ("t_D", self.transit_time),
            ("c_m0", self.c_m0),
            ("c_m1", self.c_m1),
            ("mu_ci", self.interferer_mean),
            ("sigma_ci", self.interferer_std),
            ("sigma2_f", self.flicker_variance),
        ];
        let mut s = String::new();
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        s
    }
}

pub fn derive_all(cfg: &SystemConfig) -> Result<DerivedParams> {
    let debye = debye_length(cfg.relative_permittivity, cfg.temperature, cfg.ionic_concentration);
    let q_eff = effective_charge(cfg.receptor_length, debye);
    let eps = cfg.relative_permittivity * VACUUM_PERMITTIVITY;
    let area = cfg
        .graphene_area
        .unwrap_or(cfg.graphene_width * cfg.graphene_width);
    let c_gr = area * eps / debye;
    let c_q = cfg.quantum_capacitance * area;
    let t = transduction_gain(q_eff, cfg.electrons_per_ligand, cfg.transconductance, c_gr, c_q);

    let l_ch = cfg.channel_length.unwrap_or(cfg.channel_width);
    let d = effective_diffusion(cfg.intrinsic_diffusion, cfg.flow_velocity, cfg.channel_height, l_ch);
    let a_ch = cfg.channel_height * cfg.channel_width;
    let t_d = cfg.receiver_distance / cfg.flow_velocity;
    let c_m0 = channel::peak_concentration(cfg.molecules_bit0, a_ch, d, t_d)?;
    let c_m1 = channel::peak_concentration(cfg.molecules_bit1, a_ch, d, t_d)?;
    let mu_ci = cfg.interference_ratio * c_m1;

    Ok(DerivedParams {
        k_d_m: cfg.k_off_m / cfg.k_on_m,
        k_d_i: cfg.k_off_i / cfg.k_on_i,
        debye_length: debye,
        effective_charge: q_eff,
        graphene_area: area,
        channel_length: l_ch,
        double_layer_capacitance: c_gr,
        quantum_capacitance: c_q,
        gate_capacitance: t.gate_capacitance,
        zeta: t.gain,
        effective_diffusion: d,
        channel_area: a_ch,
        transit_time: t_d,
        c_m0,
        c_m1,
        interferer_mean: mu_ci,
        interferer_std: mu_ci / cfg.interference_mean_std_ratio,
        flicker_variance: one_over_f_variance(
            cfg.flicker_power_1hz,
            cfg.flicker_exponent,
            cfg.flicker_f_low,
            cfg.flicker_f_high,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_document_is_table_defaults() {
        assert_eq!(load_config("").unwrap(), SystemConfig::default());
        assert_eq!(load_config("# only a comment\n\n").unwrap(), SystemConfig::default());
    }

    #[test]
    fn odd_sample_count_rejected() {
        match load_config("N = 701") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "N"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn single_override() {
        let cfg = load_config("u = 10e-6").unwrap();
        assert_eq!(cfg.flow_velocity, 1e-5);
        let mut expected = SystemConfig::default();
        expected.flow_velocity = 1e-5;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match load_config("T = 300\n\nbogus = 1\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        match load_config("T 300") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match load_config("dt = fast") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_config("N = 700.5"), Err(Error::Parse { .. })));
    }

    #[test]
    fn validation_names_field() {
        for (doc, field) in [
            ("h_ch = -1", "h_ch"),
            ("N_m0 = 6000", "N_m0"),
            ("f_L = 1e8", "f_L"),
            ("N_r = 0", "N_r"),
            ("lpf_cutoff = 1.0", "lpf_cutoff"),
        ] {
            match load_config(doc) {
                Err(Error::Validation { field: f, .. }) => assert_eq!(f, field, "{doc}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
    }

    #[test]
    fn beta_outside_typical_range_only_warns() {
        let cfg = load_config("beta = 1.5").unwrap();
        assert_eq!(cfg.flicker_exponent, 1.5);
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = SystemConfig::default();
        cfg.channel_length = Some(3e-6);
        cfg.flicker_exponent = 0.9;
        assert_eq!(load_config(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn eta_key_rescales_interferer() {
        let cfg = load_config("eta = 8").unwrap();
        assert_relative_eq!(cfg.similarity(), 8.0, max_relative = 1e-14);
        assert_relative_eq!(cfg.k_off_i, 16.0, max_relative = 1e-14);
        assert_relative_eq!(cfg.interference_ratio, 1.4, max_relative = 1e-14);
    }

    // Reference values from an independent 30-digit evaluation with the same
    // CODATA 2018 constants.
    #[test]
    fn debye_length_reference() {
        let ld = debye_length(80.0, 300.0, 30.0);
        assert_relative_eq!(ld, 1.778_525_748_412_759e-9, max_relative = 1e-12);
        assert_relative_eq!(
            effective_charge(2e-9, ld) / ELEMENTARY_CHARGE,
            0.324_806_105_258_691_4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn debye_length_quarter_concentration_scaling() {
        for c in [0.1, 1.0, 30.0, 150.0] {
            let a = debye_length(80.0, 300.0, c);
            let b = debye_length(80.0, 300.0, 4.0 * c);
            assert_relative_eq!(b, a / 2.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn effective_diffusion_reference() {
        let d = effective_diffusion(2e-11, 1e-5, 5e-6, 1e-5);
        assert_relative_eq!(d, 2.206_511_175_898_931e-11, max_relative = 1e-12);
        assert_eq!(effective_diffusion(2e-11, 0.0, 5e-6, 1e-5), 2e-11);
        assert_eq!(effective_diffusion(4e-11, 0.0, 5e-6, 1e-5), 2.0 * 2e-11);
    }

    #[test]
    fn effective_diffusion_monotone_in_flow() {
        let mut prev = 0.0;
        for k in 0..50 {
            let u = k as f64 * 1e-6;
            let d = effective_diffusion(2e-11, u, 5e-6, 1e-5);
            assert!(d >= 2e-11 && d >= prev);
            prev = d;
        }
    }

    #[test]
    fn series_capacitance_symmetry() {
        let t = transduction_gain(1.0, 1.0, 1.0, 2.0, 2.0);
        assert_relative_eq!(t.gate_capacitance, 1.0, max_relative = 1e-15);
        assert_eq!(transduction_gain(1e-19, 0.0, 1e-4, 1e-11, 1e-12).gain, 0.0);
    }

    #[test]
    fn gate_capacitance_scales_with_area() {
        let base = SystemConfig::default();
        let d1 = derive_all(&base).unwrap();
        for alpha in [0.25, 3.0, 10.0] {
            let mut cfg = base.clone();
            cfg.graphene_area = Some(alpha * d1.graphene_area);
            let d2 = derive_all(&cfg).unwrap();
            assert_relative_eq!(d2.gate_capacitance, alpha * d1.gate_capacitance, max_relative = 1e-13);
            assert_relative_eq!(d2.zeta, d1.zeta / alpha, max_relative = 1e-13);
        }
    }

    #[test]
    fn flicker_variance_reference() {
        // S·(1 + ln(1e15)) for β = 1.
        let v = one_over_f_variance(1e-23, 1.0, 1e-8, 1e7);
        assert_relative_eq!(v, 3.553_877_639_491_068_5e-22, max_relative = 1e-13);
        assert_relative_eq!(one_over_f_variance(1e-23, 1.0, 2.0, 2.0), 2.0 * 1e-23 / 2.0);
        assert_relative_eq!(
            one_over_f_variance(2e-23, 1.0, 1e-8, 1e7),
            2.0 * v,
            max_relative = 1e-14
        );
    }

    #[test]
    fn flicker_variance_matches_quadrature_off_unity() {
        // Trapezoid in log-frequency as an independent check.
        for beta in [0.8, 0.95, 1.0 + 1e-9, 1.2] {
            let (fl, fh, s) = (1e-3f64, 1e4f64, 1e-23);
            let n = 200_000;
            let (a, b) = (fl.ln(), fh.ln());
            let h = (b - a) / n as f64;
            let g = |x: f64| s * (x * (1.0 - beta)).exp();
            let mut sum = 0.5 * (g(a) + g(b));
            for k in 1..n {
                sum += g(a + k as f64 * h);
            }
            let expected = fl * s / fl.powf(beta) + sum * h;
            assert_relative_eq!(one_over_f_variance(s, beta, fl, fh), expected, max_relative = 1e-8);
        }
    }

    #[test]
    fn defaults_derived_values() {
        let d = derive_all(&SystemConfig::default()).unwrap();
        assert_relative_eq!(d.transit_time, 100.0, max_relative = 1e-14);
        assert_relative_eq!(d.k_d_m, 5e16, max_relative = 1e-14);
        assert_relative_eq!(d.k_d_i, 2e17, max_relative = 1e-14);
        assert_relative_eq!(d.interferer_mean, 0.7 * d.c_m1, max_relative = 1e-15);
        assert_relative_eq!(d.interferer_std, d.interferer_mean / 10.0, max_relative = 1e-15);
        assert_relative_eq!(d.zeta, 1.561_216_331_274_986e-11, max_relative = 1e-10);
        assert_relative_eq!(d.c_m1, 6.005_400_865_879_977e17, max_relative = 1e-10);
        assert_relative_eq!(d.c_m0, 1.201_080_173_175_995_4e17, max_relative = 1e-10);
    }

    #[test]
    fn derive_all_is_deterministic() {
        let cfg = SystemConfig::default();
        let a = derive_all(&cfg).unwrap();
        let b = derive_all(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_kv(), b.to_kv());
    }
}
