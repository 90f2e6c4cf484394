//! The `flowtab` command line.
//!
//! Every subcommand accepts `--config FILE`, a JSON object whose keys are the
//! subcommand's long flag names; values in the file replace the ones given on
//! the command line.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{check_model, ModelError, TrafficModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CONSISTENCY: i32 = 3;

/// Directory searched for model names that are not paths.
pub const MODEL_DIR_ENV: &str = "FLOWTAB_MODEL_DIR";

#[derive(Debug, Parser)]
#[command(name = "flowtab", version, about = "Flow-table usage reduction: simulation and analysis")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON file whose keys override this subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and list every problem found.
    Validate(ValidateArgs),
    /// Run a multi-seed simulation sweep and write the result tables.
    Simulate(SimulateArgs),
    /// Evaluate the model directly at a grid of coverage targets.
    Analyze(AnalyzeArgs),
    /// Effective sampling probability over a network path.
    Peff(PeffArgs),
    /// Write a synthetic flow population as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ValidateArgs {
    /// Model file, or a name looked up in $FLOWTAB_MODEL_DIR.
    #[arg(long = "model", value_name = "MODEL", required_unless_present = "path")]
    pub model: Option<String>,
    #[arg(value_name = "MODEL", conflicts_with = "model")]
    #[serde(skip)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: String,
    /// Decision axis: length (packets) or size (bytes).
    #[arg(long, default_value = "length")]
    pub axis: String,
    /// Comma-separated subset of first, threshold, sampling.
    #[arg(long, default_value = "first,threshold,sampling")]
    pub algo: String,
    /// `a,b,c` or `geom:start:ratio:count`; defaults to powers of two.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// `a,b,c` or `geom:start:ratio:count`; defaults to 1, 1/2, 1/4, ...
    #[arg(long)]
    pub probs: Option<String>,
    #[arg(long, default_value = "1,2,3,4,5")]
    pub seeds: String,
    /// Flows per seed; scientific notation such as 1e6 is accepted.
    #[arg(long, conflicts_with = "input")]
    pub flows: Option<String>,
    /// Evaluate flows from a CSV file instead of generating them.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, conflicts_with = "input")]
    pub coupling: Option<String>,
    #[arg(long, conflicts_with = "input")]
    pub min_packet: Option<String>,
    /// even-split or last-remainder.
    #[arg(long)]
    pub packetization: Option<String>,
    /// equal or proportional.
    #[arg(long)]
    pub duration: Option<String>,
    /// Skip the analytic values in the stats output.
    #[arg(long)]
    #[serde(default)]
    pub no_analytic: bool,
    /// Comma-separated subset of csv, markdown, plot, stats.
    #[arg(long)]
    pub formats: Option<String>,
    /// Output prefix; each format adds its own suffix. Without it the
    /// tables go to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "length")]
    pub axis: String,
    #[arg(long, default_value = "first,threshold,sampling")]
    pub algo: String,
    /// Coverage targets in percent; default 1, 2, ..., 99, 99.5, 99.9.
    #[arg(long)]
    pub coverage: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PeffArgs {
    /// Per-switch sampling probability.
    #[arg(long, requires = "l_avg", conflicts_with = "profile")]
    pub p: Option<String>,
    /// Average number of switches on the path.
    #[arg(long)]
    pub l_avg: Option<String>,
    /// JSON path profile `{"paths": [{"probability": .., "switches": [..]}]}`.
    #[arg(long, required_unless_present = "p")]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub flows: String,
    #[arg(long)]
    pub seed: String,
    #[arg(long)]
    pub coupling: Option<String>,
    #[arg(long)]
    pub min_packet: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Model(Vec<ModelError>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Model(errs) if errs.iter().all(ModelError::is_consistency) => EXIT_CONSISTENCY,
            CliError::Model(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command, writing its primary output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let config = match &cli.config {
        Some(path) => Some(read_config(path)?),
        None => None,
    };
    let mut jobs = cli.jobs;
    if let Some(cfg) = &config {
        if let Some(v) = cfg.get("jobs") {
            jobs = Some(v.as_u64().ok_or_else(|| usage("config: `jobs` must be a positive integer"))? as usize);
        }
    }
    let cfg = config.map(|mut c| {
        c.remove("jobs");
        c
    });
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut buf: Vec<u8> = Vec::new();
    let code = pool.install(|| {
        let sink: &mut dyn Write = &mut buf;
        match cli.command {
            Command::Validate(a) => {
                let mut a = apply_config(a, cfg.as_ref())?;
                a.model = a.model.or(a.path.take());
                commands::validate(&a, sink)
            }
            Command::Simulate(a) => commands::simulate(&apply_config(a, cfg.as_ref())?, sink),
            Command::Analyze(a) => commands::analyze(&apply_config(a, cfg.as_ref())?, sink),
            Command::Peff(a) => commands::peff(&apply_config(a, cfg.as_ref())?, sink),
            Command::Generate(a) => commands::generate(&apply_config(a, cfg.as_ref())?, sink),
        }
    })?;
    out.write_all(&buf).and_then(|_| out.flush()).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(code)
}

fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(usage(format!("config {}: expected a JSON object", path.display()))),
        Err(e) => Err(usage(format!("config {}: {e}", path.display()))),
    }
}

/// Overlays config keys on parsed flags. Numbers and arrays are accepted
/// where a flag takes text and are converted to its textual form.
fn apply_config<A: Serialize + DeserializeOwned>(args: A, config: Option<&Map<String, Value>>) -> Result<A, CliError> {
    let Some(config) = config else { return Ok(args) };
    let mut merged = match serde_json::to_value(&args) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    for (key, value) in config {
        let key = key.replace('_', "-");
        let value = match value {
            Value::Number(n) => Value::String(n.to_string()),
            Value::Array(items) => Value::String(
                items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            v => v.clone(),
        };
        merged.insert(key, value);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))
}

/// Finds a model by path, or by name in [`MODEL_DIR_ENV`], trying the name
/// with and without a `.json` suffix.
pub fn resolve_model_path(name: &str) -> Result<PathBuf, CliError> {
    let mut candidates = vec![PathBuf::from(name), PathBuf::from(format!("{name}.json"))];
    if let Some(dir) = std::env::var_os(MODEL_DIR_ENV) {
        let dir = PathBuf::from(dir);
        candidates.push(dir.join(name));
        candidates.push(dir.join(format!("{name}.json")));
    }
    candidates
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| usage(format!("model `{name}` not found (also searched ${MODEL_DIR_ENV})")))
}

pub fn load_model(name: &str) -> Result<TrafficModel, CliError> {
    let path = resolve_model_path(name)?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    check_model(&text).map_err(CliError::Model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("flowtab").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn config_overrides_flags() {
        let cli = parse(&["simulate", "--model", "m", "--seeds", "1", "--flows", "10"]);
        let Command::Simulate(a) = cli.command else { panic!() };
        let cfg: Map<String, Value> =
            serde_json::from_str(r#"{"seeds": [4, 5], "flows": 1e3, "no_analytic": true}"#).unwrap();
        let a = apply_config(a, Some(&cfg)).unwrap();
        assert_eq!(a.seeds, "4,5");
        assert_eq!(a.flows.as_deref(), Some("1000.0"));
        assert!(a.no_analytic);
        assert_eq!(a.model, "m");
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let cli = parse(&["peff", "--p", "0.1", "--l-avg", "3"]);
        let Command::Peff(a) = cli.command else { panic!() };
        let cfg: Map<String, Value> = serde_json::from_str(r#"{"bogus": 1}"#).unwrap();
        let err = apply_config(a, Some(&cfg)).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_VALIDATION);
    }

    #[test]
    fn generation_and_ingestion_are_exclusive() {
        let r = Cli::try_parse_from(["flowtab", "simulate", "--model", "m", "--flows", "5", "--input", "f.csv"]);
        assert!(r.is_err());
    }

    #[test]
    fn model_errors_map_to_exit_codes() {
        let weight = ModelError::Weight { location: "x".into(), sum: 1.1 };
        let cons = ModelError::Consistency("c".into());
        assert_eq!(CliError::Model(vec![weight.clone()]).exit_code(), EXIT_VALIDATION);
        assert_eq!(CliError::Model(vec![cons.clone()]).exit_code(), EXIT_CONSISTENCY);
        assert_eq!(CliError::Model(vec![cons, weight]).exit_code(), EXIT_VALIDATION);
    }
}
