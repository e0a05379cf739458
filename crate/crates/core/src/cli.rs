//! Command-line front end: `estimate` on a count table, `run` on a scenario.
//!
//! Exit codes: 0 success, 2 invalid input, 3 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::asymptotics::{self, ConfidenceInterval};
use crate::config::{CountTableInput, ScenarioConfig};
use crate::error::Error;
use crate::experiments::{self, ExperimentReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const ACTIVEINFO_HEADER: &str =
    "n,replicates,discarded,mean_p_hat,mean_p0_hat,i_t,i_c,i_plus,p0,p_testing,i_t_exact";
pub const RMSE_HEADER: &str =
    "n,replicates,discarded,rmse_p0_hat,sd_p0_hat,rmse_poststrat,sd_poststrat";
pub const COVERAGE_HEADER: &str = "n,replicates,discarded,boundary,covered,coverage,alpha";
pub const CIFAN_HEADER: &str = "replicate,n,p0_hat,lo,hi,hit";

#[derive(Debug, Parser)]
#[command(name = "prevalence", version, about = "Prevalence estimation under biased testing")]
pub struct Cli {
    /// Worker threads for replicate simulation (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate prevalence and active information from a count table.
    Estimate {
        /// JSON count table.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a simulation scenario and write its tables.
    Run {
        /// JSON scenario config.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }

    fn from_estimation(e: Error) -> Self {
        match e {
            Error::RejectionStarvation { .. } | Error::NegativeVarianceCombination(_) => {
                Self::runtime(e.to_string())
            }
            other => Self::invalid(other.to_string()),
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::invalid("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::runtime(e.to_string()))?;
    match &cli.command {
        Command::Estimate { config, format } => cmd_estimate(config, *format, out),
        Command::Run { config, seed, out_dir, format } => {
            let files = pool.install(|| cmd_run(config, *seed, out_dir, *format))?;
            for f in files {
                let _ = writeln!(out, "{}", f.display());
            }
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))
}

fn ci_json(ci: &Option<ConfidenceInterval>) -> serde_json::Value {
    match ci {
        Some(c) => json!({ "lo": c.lo, "hi": c.hi, "level": c.level }),
        None => serde_json::Value::Null,
    }
}

/// One-shot estimation on a count table.
pub fn cmd_estimate(path: &Path, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::invalid(e.to_string()))?;
    let input = CountTableInput::from_json(&text).map_err(|e| CliError::invalid(e.to_string()))?;
    let outcome = input.outcome().map_err(CliError::from_estimation)?;
    let mech = input.mechanism().map_err(CliError::from_estimation)?;
    let report = asymptotics::estimate_with_intervals(&outcome, &mech, input.alpha)
        .map_err(CliError::from_estimation)?;
    let est = &report.estimate;

    let value = json!({
        "mechanism": mech.name(),
        "n": outcome.n(),
        "n_tested": outcome.tested(),
        "alpha": input.alpha,
        "p_hat": est.p_hat,
        "p0_hat": est.p0_hat,
        "rho_hat": est.rho_hat,
        "p0s_hat": est.p0s_hat,
        "pi_hat": est.pi_hat,
        "i_t_hat": est.i_t_hat,
        "i_c_hat": est.i_c_hat,
        "v1": report.variances.v1,
        "v2": report.variances.v2,
        "v3": report.variances.v3,
        "v4": report.variances.v4,
        "sigma_p": report.sigma_p,
        "sigma_p0": report.sigma_p0,
        "sigma_i_t": report.sigma_i_t,
        "ci_p": ci_json(&report.ci_p),
        "ci_p0": ci_json(&report.ci_p0),
        "ci_i_t": ci_json(&report.ci_i_t),
        "warnings": report.warnings,
    });

    let text = match format {
        Format::Json => serde_json::to_string_pretty(&value).expect("json value serializes") + "\n",
        Format::Csv => {
            let mut s = String::from("field,value\n");
            for (k, v) in value.as_object().expect("object") {
                flatten_csv(&mut s, k, v);
            }
            s
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::runtime(e.to_string()))
}

/// Writes `key,value` lines, expanding arrays to `key_0, key_1, ...` and
/// objects to `key_field`.
fn flatten_csv(s: &mut String, key: &str, v: &serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten_csv(s, &format!("{key}_{i}"), item);
            }
        }
        Value::Object(fields) => {
            for (name, item) in fields {
                flatten_csv(s, &format!("{key}_{name}"), item);
            }
        }
        Value::Null => {
            let _ = writeln!(s, "{key},");
        }
        Value::String(t) if t.contains([',', '"', '\n']) => {
            let _ = writeln!(s, "{key},\"{}\"", t.replace('"', "\"\""));
        }
        Value::String(t) => {
            let _ = writeln!(s, "{key},{t}");
        }
        other => {
            let _ = writeln!(s, "{key},{other}");
        }
    }
}

/// Fixed-width float text: 17 significant digits, empty for missing values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn activeinfo_csv(report: &ExperimentReport) -> String {
    let mut s = format!("{ACTIVEINFO_HEADER}\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.replicates,
            r.discarded,
            fmt_f64(r.mean_p_hat),
            fmt_f64(r.mean_p0_hat),
            fmt_opt(r.i_t),
            fmt_opt(r.i_c),
            fmt_opt(r.i_plus),
            fmt_f64(r.p0),
            fmt_f64(r.p_testing),
            fmt_opt(r.i_t_exact),
        );
    }
    s
}

pub fn rmse_csv(report: &ExperimentReport) -> String {
    let mut s = format!("{RMSE_HEADER}\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n,
            r.replicates,
            r.discarded,
            fmt_f64(r.rmse_p0_hat),
            fmt_f64(r.sd_p0_hat),
            fmt_opt(r.rmse_poststrat),
            fmt_opt(r.sd_poststrat),
        );
    }
    s
}

pub fn coverage_csv(report: &ExperimentReport) -> String {
    let mut s = format!("{COVERAGE_HEADER}\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n,
            r.replicates,
            r.discarded,
            r.boundary,
            r.covered,
            fmt_f64(r.coverage),
            fmt_f64(report.alpha),
        );
    }
    s
}

pub fn cifan_csv(report: &ExperimentReport) -> String {
    let mut s = format!("{CIFAN_HEADER}\n");
    for r in &report.ci_fan {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.replicate,
            r.n,
            fmt_opt(r.p0_hat),
            fmt_opt(r.lo),
            fmt_opt(r.hi),
            u8::from(r.hit),
        );
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs a scenario file and writes its outputs; returns the written paths.
pub fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    out_dir: &Path,
    format: Format,
) -> Result<Vec<PathBuf>, CliError> {
    let bytes = read(config)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::invalid(e.to_string()))?;
    let mut cfg = ScenarioConfig::from_json(&text).map_err(|e| CliError::invalid(e.to_string()))?;
    let config_seed = cfg.seed;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = experiments::run_experiment(&cfg).map_err(|e| CliError::runtime(e.to_string()))?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let label = &cfg.label;
    let outputs: Vec<(String, String)> = match format {
        Format::Csv => vec![
            (format!("{label}_activeinfo.csv"), activeinfo_csv(&report)),
            (format!("{label}_rmse.csv"), rmse_csv(&report)),
            (format!("{label}_coverage.csv"), coverage_csv(&report)),
            (format!("{label}_cifan.csv"), cifan_csv(&report)),
        ],
        Format::Json => vec![(
            format!("{label}_report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )],
    };
    let manifest = json!({
        "tool": "prevalence",
        "version": env!("CARGO_PKG_VERSION"),
        "label": label,
        "seed": cfg.seed,
        "config_seed": config_seed,
        "seed_overridden": seed.is_some(),
        "config_sha256": sha256_hex(&bytes),
        "mechanism": report.mechanism,
        "n_grid": cfg.n_grid,
        "replicates": cfg.replicates,
        "alpha": cfg.alpha,
        "files": outputs.iter().map(|(name, _)| name.clone()).collect::<Vec<_>>(),
    });

    let mut written = Vec::new();
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    for (name, body) in outputs.iter().chain(std::iter::once(&("manifest.json".to_string(), manifest_text))) {
        let path = out_dir.join(name);
        fs::write(&path, body)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
