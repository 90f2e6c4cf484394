use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::{
    load_model, resolve_model_path, usage, AnalyzeArgs, CliError, GenerateArgs, PeffArgs, SimulateArgs, ValidateArgs,
};
use super::{EXIT_CONSISTENCY, EXIT_OK, EXIT_VALIDATION};
use crate::algorithms::{p_eff_avg, p_eff_paths, AlgorithmError, AlgorithmKind, PathProfile};
use crate::analytic::{invert_for_coverage, AnalyticError, Inversion};
use crate::generator::{generate_population, read_flows_csv, write_flows_csv, GeneratorConfig, GeneratorError};
use crate::model::{check_model, Axis};
use crate::sweep::format::{exact, parse_count, parse_list, parse_number};
use crate::sweep::{
    default_length_thresholds, default_probabilities, default_size_thresholds, emit_table, run_sweep, OutputFormat,
    SweepError, SweepSpec,
};

pub const ANALYZE_HEADER: &str =
    "algorithm,target,param,coverage,ops_reduction,occ_reduction,ops_rel_first,occ_rel_first";

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn parse_with<T, E: ToString>(flag: &str, v: &str, f: impl Fn(&str) -> Result<T, E>) -> Result<T, CliError> {
    f(v).map_err(|e| usage(format!("--{flag}: {}", e.to_string())))
}

fn parse_list_of<T: std::str::FromStr<Err = String>>(flag: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_with(flag, s.trim(), T::from_str)).collect()
}

fn parse_seeds(v: &str) -> Result<Vec<u64>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_with("seeds", s, parse_count)).collect()
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Spec(_)
            | SweepError::Generator(GeneratorError::Config(_) | GeneratorError::Packetize { .. })
            | SweepError::Algorithm(AlgorithmError::Packetize(_) | AlgorithmError::Parameter(_)) => usage(e),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub fn validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let name = a.model.as_deref().ok_or_else(|| usage("no model given"))?;
    let path = resolve_model_path(name)?;
    let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    let (report, code) = match check_model(&text) {
        Ok(m) => (json!({ "valid": true, "model": m.name, "errors": [] }), EXIT_OK),
        Err(errors) => {
            let err = CliError::Model(errors);
            let CliError::Model(list) = &err else { unreachable!() };
            let items: Vec<_> = list.iter().map(|e| json!({ "kind": e.kind(), "message": e.to_string() })).collect();
            for e in list {
                eprintln!("{e}");
            }
            (json!({ "valid": false, "errors": items }), err.exit_code())
        }
    };
    debug_assert!(code == EXIT_OK || code == EXIT_VALIDATION || code == EXIT_CONSISTENCY);
    write_out(out, &format!("{report}\n"))?;
    Ok(code)
}

pub fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let model = load_model(&a.model)?;
    let axis: Axis = parse_with("axis", &a.axis, str::parse)?;
    let mut spec = SweepSpec::new(model, axis);
    spec.algorithms = parse_list_of("algo", &a.algo)?;
    let default_count = match axis {
        Axis::Length => default_length_thresholds().len(),
        Axis::Size => default_size_thresholds().len(),
    };
    if let Some(t) = &a.thresholds {
        spec.thresholds = parse_with("thresholds", t, parse_list)?;
    }
    spec.probabilities = match &a.probs {
        Some(p) => parse_with("probs", p, parse_list)?,
        None => default_probabilities(default_count),
    };
    spec.seeds = parse_seeds(&a.seeds)?;
    if let Some(f) = &a.flows {
        spec.flow_count = parse_with("flows", f, parse_count)?;
    }
    if let Some(c) = &a.coupling {
        spec.coupling = parse_with("coupling", c, str::parse)?;
    }
    if let Some(m) = &a.min_packet {
        let m = parse_with("min-packet", m, parse_count)?;
        spec.min_packet = u32::try_from(m).map_err(|_| usage("--min-packet is too large"))?;
    }
    if let Some(p) = &a.packetization {
        spec.packetization = parse_with("packetization", p, str::parse)?;
    }
    if let Some(d) = &a.duration {
        spec.duration_model = parse_with("duration", d, str::parse)?;
    }
    spec.analytic = !a.no_analytic;
    if let Some(input) = &a.input {
        let file = File::open(input).map_err(|e| io_error(input, e))?;
        let mut flows = read_flows_csv(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", input.display())))?;
        for f in &mut flows {
            f.packetization = spec.packetization;
        }
        spec.flows = Some(flows);
    }
    let formats: Vec<OutputFormat> = match &a.formats {
        Some(f) => parse_list_of("formats", f)?,
        None if a.out.is_some() => {
            vec![OutputFormat::Csv, OutputFormat::Markdown, OutputFormat::Plot, OutputFormat::Stats]
        }
        None => vec![OutputFormat::Csv],
    };
    if formats.is_empty() {
        return Err(usage("--formats is empty"));
    }

    let result = run_sweep(&spec)?;
    let clamped = result.clamped_fraction.iter().cloned().fold(0.0, f64::max);
    if clamped > 0.0 {
        eprintln!("note: up to {:.4}% of generated flows had their size clamped to the packet bounds", 100.0 * clamped);
    }
    match &a.out {
        Some(prefix) => {
            for f in formats {
                let path = PathBuf::from(format!("{}{}", prefix.display(), f.suffix()));
                write_file(&path, &emit_table(&result, f))?;
                write_out(out, &format!("{}\n", path.display()))?;
            }
        }
        None => {
            for (k, f) in formats.into_iter().enumerate() {
                if k > 0 {
                    write_out(out, "\n")?;
                }
                write_out(out, &emit_table(&result, f))?;
            }
        }
    }
    Ok(EXIT_OK)
}

/// `1, 2, ..., 99, 99.5, 99.9` percent.
fn default_coverage_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=99).map(f64::from).collect();
    grid.extend([99.5, 99.9]);
    grid
}

pub fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let model = load_model(&a.model)?;
    let axis: Axis = parse_with("axis", &a.axis, str::parse)?;
    let mut algorithms: Vec<AlgorithmKind> = parse_list_of("algo", &a.algo)?;
    algorithms.sort();
    algorithms.dedup();
    if algorithms.is_empty() {
        return Err(usage("--algo is empty"));
    }
    let targets = match &a.coverage {
        Some(c) => parse_with("coverage", c, parse_list)?,
        None => default_coverage_grid(),
    };
    if let Some(bad) = targets.iter().find(|&&c| !(c > 0.0 && c <= 100.0)) {
        return Err(usage(format!("--coverage: {bad} is outside (0, 100]")));
    }

    let solve = |kind: AlgorithmKind| -> Result<Vec<Option<Inversion>>, CliError> {
        targets
            .par_iter()
            .map(|&c| match invert_for_coverage(&model, kind, axis, c / 100.0) {
                Ok(inv) => Ok(Some(inv)),
                Err(AnalyticError::Unreachable { .. }) => Ok(None),
                Err(e) => Err(CliError::Runtime(format!("{kind} at {c}%: {e}"))),
            })
            .collect()
    };
    let first = solve(AlgorithmKind::First)?;
    let mut text = String::from(ANALYZE_HEADER);
    text.push('\n');
    for &kind in &algorithms {
        let rows = if kind == AlgorithmKind::First { first.clone() } else { solve(kind)? };
        let mut unreachable = 0;
        for ((&c, row), base) in targets.iter().zip(&rows).zip(&first) {
            let target = exact(c);
            match row {
                None => {
                    unreachable += 1;
                    text.push_str(&format!("{kind},{target},,,,,,\n"));
                }
                Some(inv) => {
                    let r = &inv.report;
                    let rel = |x: f64, f: Option<f64>| f.map(|f| exact(x / f)).unwrap_or_default();
                    text.push_str(&format!(
                        "{kind},{target},{},{},{},{},{},{}\n",
                        exact(inv.param),
                        exact(100.0 * r.coverage),
                        exact(r.ops_reduction),
                        exact(r.occ_reduction),
                        rel(r.ops_reduction, base.as_ref().map(|b| b.report.ops_reduction)),
                        rel(r.occ_reduction, base.as_ref().map(|b| b.report.occ_reduction)),
                    ));
                }
            }
        }
        if unreachable > 0 {
            eprintln!("note: {kind} cannot reach {unreachable} of the coverage targets");
        }
    }
    match &a.out {
        Some(path) => write_file(path, &text)?,
        None => write_out(out, &text)?,
    }
    Ok(EXIT_OK)
}

/// Fixed notation with trailing zeros removed, as in `0.271`.
fn trimmed(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub fn peff(a: &PeffArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let value = match (&a.p, &a.l_avg, &a.profile) {
        (Some(p), Some(l), None) => {
            let p = parse_with("p", p, parse_number)?;
            let l = parse_with("l-avg", l, parse_number)?;
            p_eff_avg(p, l).map_err(usage)?
        }
        (None, None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let profile: PathProfile =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            p_eff_paths(&profile).map_err(usage)?
        }
        _ => return Err(usage("give either --p with --l-avg, or --profile")),
    };
    write_out(out, &format!("{}\n", trimmed(value)))?;
    Ok(EXIT_OK)
}

pub fn generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let model = load_model(&a.model)?;
    let mut config =
        GeneratorConfig::new(parse_with("seed", &a.seed, parse_count)?, parse_with("flows", &a.flows, parse_count)?);
    if let Some(c) = &a.coupling {
        config.coupling = parse_with("coupling", c, str::parse)?;
    }
    if let Some(m) = &a.min_packet {
        let m = parse_with("min-packet", m, parse_count)?;
        config.min_packet = u32::try_from(m).map_err(|_| usage("--min-packet is too large"))?;
    }
    let population = generate_population(&model, config).map_err(usage)?;
    if population.clamped > 0 {
        eprintln!("note: {} flows had their size clamped to the packet bounds", population.clamped);
    }
    let write = |w: &mut dyn Write| write_flows_csv(w, &population.flows).map_err(|e| CliError::Runtime(e.to_string()));
    match &a.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_error(path, e))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush().map_err(|e| io_error(path, e))?;
        }
        None => write(out)?,
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trimmed_probabilities() {
        assert_eq!(trimmed(1.0 - 0.9f64.powi(3)), "0.271");
        assert_eq!(trimmed(0.0), "0");
        assert_eq!(trimmed(1.0), "1");
    }

    #[test]
    fn coverage_grid_spans_one_to_almost_all() {
        let g = default_coverage_grid();
        assert_eq!((g[0], *g.last().unwrap(), g.len()), (1.0, 99.9, 101));
    }
}
