//! Monte Carlo bit-error simulation, parameter sweeps and report files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{sample_interferer, InterfererDistribution};
use crate::detection::{fdd_bep, fdd_decide, fdd_threshold, tdd_bep, tdd_decide, Threshold};
use crate::error::{Error, Result};
use crate::estimation::{multi_start_estimate, MleOptions};
use crate::kinetics::{characteristic_times, simulate_bound_counts, LigandKinetics};
use crate::params::{derive_all, DerivedParams, SystemConfig};
use crate::spectral::{decimate, lowpass_filter, periodogram, synthesize_one_over_f, PsdContext, PsdMode};

pub const DEFAULT_TRIALS: usize = 1000;
pub const MIN_TRIALS: usize = 100;
/// Grid basins the estimator is started from.
pub const MLE_STARTS: usize = 3;
const Z_95: f64 = 1.959_963_984_540_054;

/// Per-configuration state shared by every trial.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: SystemConfig,
    pub derived: DerivedParams,
    pub psd: PsdContext,
    pub kinetics: LigandKinetics,
    pub interferer: Option<InterfererDistribution>,
    pub tdd_threshold: Threshold,
    pub fdd_threshold: Threshold,
    pub analytic_tdd: f64,
    /// `None` when the two-ligand information is singular.
    pub analytic_fdd: Option<f64>,
}

pub fn prepare(cfg: &SystemConfig) -> Result<Prepared> {
    let derived = derive_all(cfg)?;
    let tdd = tdd_bep(cfg, &derived)?;
    let fdd_thr = fdd_threshold(cfg, &derived)?;
    let analytic_fdd = if derived.interferer_mean == 0.0 {
        log::warn!("no interferer: the two-ligand analytic FDD error probability is undefined");
        None
    } else {
        match fdd_bep(cfg, &derived) {
            Ok(a) => Some(a.bep),
            Err(e @ Error::NonIdentifiable { .. }) => {
                log::warn!("analytic FDD error probability unavailable: {e}");
                None
            }
            Err(e) => return Err(e),
        }
    };
    let interferer = if derived.interferer_mean > 0.0 {
        Some(InterfererDistribution::new(derived.interferer_mean, derived.interferer_std)?)
    } else {
        None
    };
    Ok(Prepared {
        config: cfg.clone(),
        psd: PsdContext::new(cfg, &derived),
        kinetics: LigandKinetics::from_config(cfg),
        derived,
        interferer,
        tdd_threshold: tdd.threshold,
        fdd_threshold: fdd_thr,
        analytic_tdd: tdd.bep,
        analytic_fdd,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: u64,
    pub master_seed: u64,
    pub bit: u8,
    pub c_i: f64,
    pub tdd_sample: f64,
    pub tdd_decision: u8,
    pub fdd_estimate: Vec<f64>,
    pub fdd_converged: bool,
    pub fdd_iterations: usize,
    pub fdd_decision: u8,
}

/// Random stream for trial `index`; independent of which thread runs it.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Transduced binding-noise current `ζ·n_B`, simulated at `dt/L` and
/// decimated to `N` samples at `dt` so nothing aliases into the band.
pub fn acquire_binding<R: Rng + ?Sized>(p: &Prepared, c_m: f64, c_i: f64, rng: &mut R) -> Result<Vec<f64>> {
    let cfg = &p.config;
    let l = cfg.acquisition_oversample;
    let burn_in = cfg.burn_in_factor * characteristic_times(c_m, c_i, &p.kinetics).tau_c1;
    let series = simulate_bound_counts(
        cfg.receptor_count,
        c_m,
        c_i,
        &p.kinetics,
        burn_in,
        cfg.samples * l,
        cfg.sampling_period / l as f64,
        rng,
    )?;
    let counts: Vec<f64> = series.counts.iter().map(|&c| c as f64).collect();
    let bound = decimate(&counts, l)?;
    Ok(bound.iter().map(|&nb| p.derived.zeta * nb).collect())
}

/// Received current for one symbol: binding noise plus synthesized 1/f
/// noise, `N` samples at `dt`.
pub fn acquire<R: Rng + ?Sized>(p: &Prepared, c_m: f64, c_i: f64, rng: &mut R) -> Result<Vec<f64>> {
    let cfg = &p.config;
    let binding = acquire_binding(p, c_m, c_i, rng)?;
    let flicker = synthesize_one_over_f(cfg.samples, cfg.sampling_period, cfg.flicker_power_1hz, cfg.flicker_exponent, rng)?;
    Ok(binding.iter().zip(&flicker).map(|(b, f)| b + f).collect())
}

/// Frequency-domain estimate of `[c_m, c_i]` from one received window.
pub fn estimate_window(p: &Prepared, current: &[f64]) -> Result<crate::estimation::Estimate> {
    let cfg = &p.config;
    let mean = current.iter().sum::<f64>() / current.len() as f64;
    let noise: Vec<f64> = current.iter().map(|x| x - mean).collect();
    let filtered = lowpass_filter(&noise, cfg.lpf_cutoff)?;
    let nyquist = 0.5 / cfg.sampling_period;
    let pg = periodogram(&filtered, cfg.sampling_period)?.truncated(cfg.lpf_cutoff * nyquist);
    multi_start_estimate(
        &pg.values,
        &pg.freqs,
        &p.psd,
        PsdMode::Full,
        cfg.init_grid_points,
        MLE_STARTS,
        &MleOptions::default(),
    )
}

pub fn run_trial<R: Rng + ?Sized>(bit: u8, p: &Prepared, rng: &mut R) -> Result<TrialRecord> {
    let c_m = p.derived.peak_concentration(bit);
    let c_i = match &p.interferer {
        Some(d) => sample_interferer(d, rng),
        None => 0.0,
    };
    let current = acquire(p, c_m, c_i, rng)?;
    let tdd_sample = current[p.config.samples / 2];
    let est = estimate_window(p, &current)?;
    if !est.converged {
        log::debug!("estimator stopped after {} iterations without converging", est.iterations);
    }
    Ok(TrialRecord {
        index: 0,
        master_seed: 0,
        bit,
        c_i,
        tdd_sample,
        tdd_decision: tdd_decide(tdd_sample, &p.tdd_threshold),
        fdd_decision: fdd_decide(est.c_m(), &p.fdd_threshold),
        fdd_converged: est.converged,
        fdd_iterations: est.iterations,
        fdd_estimate: est.lambda,
    })
}

/// Trials `0..m` with equiprobable bits, in index order.
pub fn run_trials(p: &Prepared, m: usize, master_seed: u64) -> Result<Vec<TrialRecord>> {
    (0..m as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = trial_rng(master_seed, index);
            let bit = u8::from(rng.random::<bool>());
            let mut rec = run_trial(bit, p, &mut rng)?;
            rec.index = index;
            rec.master_seed = master_seed;
            Ok(rec)
        })
        .collect()
}

/// Wilson score interval at 95%.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BepReport {
    pub trials: u64,
    pub tdd_errors: u64,
    pub tdd_bep: f64,
    pub tdd_interval: (f64, f64),
    pub fdd_errors: u64,
    pub fdd_bep: f64,
    pub fdd_interval: (f64, f64),
    pub analytic_tdd: f64,
    pub analytic_fdd: Option<f64>,
    pub fdd_nonconverged: u64,
    pub fingerprint: String,
    pub master_seed: u64,
}

impl BepReport {
    pub fn from_trials(p: &Prepared, records: &[TrialRecord], master_seed: u64) -> Self {
        let trials = records.len() as u64;
        let tdd_errors = records.iter().filter(|r| r.tdd_decision != r.bit).count() as u64;
        let fdd_errors = records.iter().filter(|r| r.fdd_decision != r.bit).count() as u64;
        let rate = |e: u64| if trials == 0 { 0.0 } else { e as f64 / trials as f64 };
        Self {
            trials,
            tdd_errors,
            tdd_bep: rate(tdd_errors),
            tdd_interval: wilson_interval(tdd_errors, trials),
            fdd_errors,
            fdd_bep: rate(fdd_errors),
            fdd_interval: wilson_interval(fdd_errors, trials),
            analytic_tdd: p.analytic_tdd,
            analytic_fdd: p.analytic_fdd,
            fdd_nonconverged: records.iter().filter(|r| !r.fdd_converged).count() as u64,
            fingerprint: p.config.fingerprint(),
            master_seed,
        }
    }
}

pub fn monte_carlo_bep(cfg: &SystemConfig, trials: usize, master_seed: u64) -> Result<BepReport> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!("at least {MIN_TRIALS} trials are required, got {trials}")));
    }
    let p = prepare(cfg)?;
    let records = run_trials(&p, trials, master_seed)?;
    Ok(BepReport::from_trials(&p, &records, master_seed))
}

/// Run `f` on a dedicated pool of `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    /// Similarity `K_Di/K_Dm`; the mean interferer concentration scales with it.
    Eta,
    Samples,
    FlickerPower,
    /// `N_m0 / N_m1` with `N_m1` held fixed.
    BitRatio,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Eta => "eta",
            SweepParam::Samples => "N",
            SweepParam::FlickerPower => "s1hz",
            SweepParam::BitRatio => "bit_ratio",
        }
    }

    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::Gamma => cfg.interference_ratio = value,
            SweepParam::Eta => {
                if !(value > 0.0) {
                    return Err(Error::validation("eta", format!("must be positive, got {value}")));
                }
                cfg = base.with_similarity(value);
            }
            SweepParam::Samples => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::validation("N", format!("must be an integer, got {value}")));
                }
                cfg.samples = value as usize;
            }
            SweepParam::FlickerPower => cfg.flicker_power_1hz = value,
            SweepParam::BitRatio => cfg.molecules_bit0 = value * base.molecules_bit1,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "eta" => Ok(SweepParam::Eta),
            "N" | "n" => Ok(SweepParam::Samples),
            "s1hz" | "S_f_1Hz" => Ok(SweepParam::FlickerPower),
            "bit_ratio" => Ok(SweepParam::BitRatio),
            other => Err(Error::Domain(format!(
                "unknown sweep parameter `{other}` (expected gamma, eta, N, s1hz or bit_ratio)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub report: Option<BepReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub master_seed: u64,
    pub base_fingerprint: String,
    pub points: Vec<SweepPoint>,
}

fn strictly_monotone(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] > w[0]) || values.windows(2).all(|w| w[1] < w[0])
}

/// One Monte Carlo run per value, all with the same master seed. A point
/// that fails is recorded and the sweep moves on.
pub fn sweep(param: SweepParam, values: &[f64], base: &SystemConfig, trials: usize, master_seed: u64) -> Result<SweepResult> {
    if values.is_empty() || !strictly_monotone(values) {
        return Err(Error::Domain(format!("sweep values must be non-empty and strictly monotone, got {values:?}")));
    }
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let outcome = param
            .apply(base, value)
            .and_then(|cfg| monte_carlo_bep(&cfg, trials, master_seed));
        match outcome {
            Ok(report) => {
                log::info!(
                    "{} = {value:e}: TDD {:.4} FDD {:.4}",
                    param.name(),
                    report.tdd_bep,
                    report.fdd_bep
                );
                points.push(SweepPoint {
                    value,
                    report: Some(report),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("{} = {value:e} failed: {e}", param.name());
                points.push(SweepPoint {
                    value,
                    report: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(SweepResult {
        param,
        master_seed,
        base_fingerprint: base.fingerprint(),
        points,
    })
}

const REPORT_COLUMNS: [&str; 13] = [
    "trials",
    "tdd_errors",
    "tdd_bep",
    "tdd_ci_low",
    "tdd_ci_high",
    "fdd_errors",
    "fdd_bep",
    "fdd_ci_low",
    "fdd_ci_high",
    "analytic_tdd",
    "analytic_fdd",
    "fdd_nonconverged",
    "fingerprint",
];

fn report_cells(r: &BepReport) -> Vec<String> {
    vec![
        r.trials.to_string(),
        r.tdd_errors.to_string(),
        format!("{:e}", r.tdd_bep),
        format!("{:e}", r.tdd_interval.0),
        format!("{:e}", r.tdd_interval.1),
        r.fdd_errors.to_string(),
        format!("{:e}", r.fdd_bep),
        format!("{:e}", r.fdd_interval.0),
        format!("{:e}", r.fdd_interval.1),
        format!("{:e}", r.analytic_tdd),
        r.analytic_fdd.map(|v| format!("{v:e}")).unwrap_or_default(),
        r.fdd_nonconverged.to_string(),
        r.fingerprint.clone(),
    ]
}

/// `#` rows identifying the tool version, configuration and seed.
pub fn metadata(kind: &str, fingerprint: &str, seed: Option<u64>, extra: &[(&str, &str)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# tool = mcfdd {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# kind = {kind}");
    let _ = writeln!(s, "# config_fingerprint = {fingerprint}");
    if let Some(seed) = seed {
        let _ = writeln!(s, "# master_seed = {seed}");
    }
    for (k, v) in extra {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

fn table(meta: String, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    // Writing into a Vec cannot fail.
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    meta + &String::from_utf8(bytes).expect("cells are UTF-8")
}

struct Table {
    meta: Vec<(String, String)>,
    rows: Vec<(usize, csv::StringRecord)>,
    header_line: usize,
}

impl Table {
    fn parse(text: &str, header: &[&str]) -> Result<Self> {
        let meta = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .filter_map(|m| m.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let found = reader.headers().map_err(csv_error)?.clone();
        let header_line = reader.position().line() as usize;
        if found.iter().ne(header.iter().copied()) {
            return Err(Error::Parse {
                line: header_line.max(1),
                message: format!("unexpected header `{}`", found.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self { meta, rows, header_line })
    }

    fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing `# {key} = ...` metadata"),
            })
    }

    fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta(key)?.parse().map_err(|_| Error::Parse {
            line: 1,
            message: format!("metadata `{key}` is not an unsigned integer"),
        })
    }
}

fn parse_cell<T: FromStr>(line: usize, row: &csv::StringRecord, idx: usize) -> Result<T> {
    let cell = &row[idx];
    cell.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse column {} value `{cell}`", idx + 1),
    })
}

/// Report columns starting at `offset` in `row`.
fn parse_report(line: usize, row: &csv::StringRecord, offset: usize, seed: u64) -> Result<BepReport> {
    let cell = |i: usize| parse_cell::<f64>(line, row, offset + i);
    let count = |i: usize| parse_cell::<u64>(line, row, offset + i);
    Ok(BepReport {
        trials: count(0)?,
        tdd_errors: count(1)?,
        tdd_bep: cell(2)?,
        tdd_interval: (cell(3)?, cell(4)?),
        fdd_errors: count(5)?,
        fdd_bep: cell(6)?,
        fdd_interval: (cell(7)?, cell(8)?),
        analytic_tdd: cell(9)?,
        analytic_fdd: if row[offset + 10].is_empty() { None } else { Some(cell(10)?) },
        fdd_nonconverged: count(11)?,
        fingerprint: row[offset + 12].to_string(),
        master_seed: seed,
    })
}

impl BepReport {
    pub fn to_csv(&self) -> String {
        let meta = metadata("bep_report", &self.fingerprint, Some(self.master_seed), &[]);
        table(meta, &REPORT_COLUMNS, [report_cells(self)])
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let t = Table::parse(text, &REPORT_COLUMNS)?;
        let seed = t.meta_u64("master_seed")?;
        match t.rows.as_slice() {
            [(line, row)] => parse_report(*line, row, 0, seed),
            _ => Err(Error::Parse {
                line: t.header_line,
                message: format!("expected exactly one data row, found {}", t.rows.len()),
            }),
        }
    }
}

fn sweep_columns() -> Vec<&'static str> {
    let mut cols = vec!["value"];
    cols.extend(REPORT_COLUMNS);
    cols.push("error");
    cols
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let meta = metadata(
            "sweep",
            &self.base_fingerprint,
            Some(self.master_seed),
            &[("param", self.param.name())],
        );
        let rows = self.points.iter().map(|p| {
            let mut row = vec![format!("{:e}", p.value)];
            match &p.report {
                Some(r) => row.extend(report_cells(r)),
                None => row.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len())),
            }
            row.push(p.error.clone().unwrap_or_default());
            row
        });
        table(meta, &sweep_columns(), rows)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let t = Table::parse(text, &sweep_columns())?;
        let seed = t.meta_u64("master_seed")?;
        let param: SweepParam = t.meta("param")?.parse()?;
        let mut points = Vec::new();
        for (line, row) in &t.rows {
            let report_empty = (1..=REPORT_COLUMNS.len()).all(|i| row[i].is_empty());
            let error = &row[REPORT_COLUMNS.len() + 1];
            points.push(SweepPoint {
                value: parse_cell(*line, row, 0)?,
                report: if report_empty { None } else { Some(parse_report(*line, row, 1, seed)?) },
                error: (!error.is_empty()).then(|| error.to_string()),
            });
        }
        Ok(SweepResult {
            param,
            master_seed: seed,
            base_fingerprint: t.meta("config_fingerprint")?.to_string(),
            points,
        })
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_report(report: &BepReport, path: &Path) -> Result<()> {
    write_text(path, &report.to_csv())
}

pub fn write_sweep(result: &SweepResult, path: &Path) -> Result<()> {
    write_text(path, &result.to_csv())
}

pub fn read_report(path: &Path) -> Result<BepReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    BepReport::from_csv(&text)
}

pub fn read_sweep(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SweepResult::from_csv(&text)
}
