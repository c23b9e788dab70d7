use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcfdd::detection::{fdd_bep, fdd_threshold, tdd_bep};
use mcfdd::harness::{self, metadata, SweepParam};
use mcfdd::spectral::{psd_table, psd_table_csv, PsdContext};
use mcfdd::{derive_all, load_config_file, Error, SystemConfig};

#[derive(Parser)]
#[command(name = "mcfdd", version, about = "Time- vs frequency-domain detection for a bioFET receiver with an interfering ligand")]
struct Cli {
    /// `key = value` configuration; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo runs (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a configuration, then print it with the derived quantities.
    Validate {
        /// Same as `--config`.
        path: Option<PathBuf>,
    },
    /// Tabulate the model noise spectrum at fixed concentrations (molecules/m³).
    Psd {
        #[arg(long, allow_negative_numbers = true)]
        cm: f64,
        #[arg(long, allow_negative_numbers = true)]
        ci: f64,
        #[arg(long, default_value_t = 1e-2)]
        fmin: f64,
        /// Defaults to the Nyquist frequency.
        #[arg(long)]
        fmax: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Thresholds and analytic error probabilities of both detectors.
    Analytic,
    /// Monte Carlo error probabilities.
    Simulate {
        #[arg(long, default_value_t = harness::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo over a list of values of one parameter.
    Sweep {
        /// gamma, eta, N, s1hz or bit_ratio
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = harness::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: Option<&Path>) -> mcfdd::Result<SystemConfig> {
    match path {
        Some(p) => load_config_file(p),
        None => Ok(SystemConfig::default()),
    }
}

fn kv_rows(kv: &str, out: &mut String) {
    for line in kv.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            let _ = writeln!(out, "{k},{v}");
        }
    }
}

fn run(cli: Cli) -> mcfdd::Result<String> {
    match cli.command {
        Command::Validate { path } => {
            let cfg = load(path.as_deref().or(cli.config.as_deref()))?;
            let derived = derive_all(&cfg)?;
            let mut s = metadata("config", &cfg.fingerprint(), None, &[]);
            s.push_str("name,value\n");
            kv_rows(&cfg.to_kv(), &mut s);
            kv_rows(&derived.to_kv(), &mut s);
            Ok(s)
        }
        Command::Psd {
            cm,
            ci,
            fmin,
            fmax,
            points,
        } => {
            let cfg = load(cli.config.as_deref())?;
            let derived = derive_all(&cfg)?;
            let ctx = PsdContext::new(&cfg, &derived);
            let fmax = fmax.unwrap_or(0.5 / cfg.sampling_period);
            let rows = psd_table(cm, ci, &ctx, fmin, fmax, points)?;
            let (cm_s, ci_s) = (format!("{cm:e}"), format!("{ci:e}"));
            let mut s = metadata("psd", &cfg.fingerprint(), None, &[("c_m", &cm_s), ("c_i", &ci_s)]);
            s.push_str(&psd_table_csv(&rows));
            Ok(s)
        }
        Command::Analytic => {
            let cfg = load(cli.config.as_deref())?;
            let derived = derive_all(&cfg)?;
            let tdd = tdd_bep(&cfg, &derived)?;
            let mut s = metadata("analytic", &cfg.fingerprint(), None, &[]);
            s.push_str("name,value\n");
            let _ = writeln!(s, "gamma_td,{:e}", tdd.threshold.value);
            let _ = writeln!(s, "tdd_bep,{:e}", tdd.bep);
            for (bit, st) in tdd.stats.iter().enumerate() {
                let _ = writeln!(s, "tdd_mean_{bit},{:e}", st.mean);
                let _ = writeln!(s, "tdd_var_{bit},{:e}", st.var);
            }
            match fdd_bep(&cfg, &derived) {
                Ok(fdd) => {
                    let _ = writeln!(s, "gamma_fd,{:e}", fdd.threshold.value);
                    let _ = writeln!(s, "fdd_bep,{:e}", fdd.bep);
                    for bit in 0..2 {
                        let _ = writeln!(s, "fdd_var_single_{bit},{:e}", fdd.var_single[bit]);
                        let _ = writeln!(s, "fdd_var_full_{bit},{:e}", fdd.var_full[bit]);
                    }
                }
                Err(e @ Error::NonIdentifiable { .. }) => {
                    log::warn!("{e}");
                    let _ = writeln!(s, "gamma_fd,{:e}", fdd_threshold(&cfg, &derived)?.value);
                    let _ = writeln!(s, "fdd_bep,");
                }
                Err(e) => return Err(e),
            }
            Ok(s)
        }
        Command::Simulate { trials, seed } => {
            let cfg = load(cli.config.as_deref())?;
            let report = harness::with_threads(cli.threads, || harness::monte_carlo_bep(&cfg, trials, seed))??;
            log::info!(
                "TDD {:.5} [{:.5}, {:.5}] (analytic {:.5}); FDD {:.5} [{:.5}, {:.5}]",
                report.tdd_bep,
                report.tdd_interval.0,
                report.tdd_interval.1,
                report.analytic_tdd,
                report.fdd_bep,
                report.fdd_interval.0,
                report.fdd_interval.1
            );
            Ok(report.to_csv())
        }
        Command::Sweep {
            param,
            values,
            trials,
            seed,
        } => {
            let cfg = load(cli.config.as_deref())?;
            let param: SweepParam = param.parse()?;
            let result = harness::with_threads(cli.threads, || harness::sweep(param, &values, &cfg, trials, seed))??;
            Ok(result.to_csv())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation { .. } => 2,
        Error::Io { .. } => 3,
        Error::Domain(_) => 4,
        Error::Numerical(_) | Error::NonIdentifiable { .. } => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = cli.out.clone();
    let result = run(cli).and_then(|text| match &out {
        Some(path) => harness::write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
