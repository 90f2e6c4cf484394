//! Multi-seed parameter sweeps over all three algorithms, with analytic
//! values alongside the simulated ones, and their table renderings.

mod emit;
pub mod format;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{
    evaluate, Accumulator, AlgorithmError, AlgorithmKind, AlgorithmSpec, DurationModel, MetricsReport,
};
use crate::analytic::{analytic, AnalyticError, AnalyticReport};
use crate::generator::{
    generate_population, stream_rng, Coupling, FlowRecord, GeneratorConfig, GeneratorError, Packetization,
    DEFAULT_MIN_PACKET, SHARD_SIZE,
};
use crate::model::{Axis, TrafficModel};

pub use emit::{emit_table, STATS_HEADER, TABLE_HEADER};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Markdown,
    Plot,
    Stats,
}

impl OutputFormat {
    /// File name suffix appended to the output prefix.
    pub fn suffix(self) -> &'static str {
        match self {
            OutputFormat::Csv => ".csv",
            OutputFormat::Markdown => ".md",
            OutputFormat::Plot => ".plot.csv",
            OutputFormat::Stats => ".stats.csv",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            "plot" | "plotdata" => Ok(OutputFormat::Plot),
            "stats" => Ok(OutputFormat::Stats),
            o => Err(format!("unknown output format `{o}` (expected csv, markdown, plot or stats)")),
        }
    }
}

/// Thresholds `1, 2, 4, ..., 2^21` packets.
pub fn default_length_thresholds() -> Vec<f64> {
    (0..=21).map(|k| 2f64.powi(k)).collect()
}

/// Thresholds `64, 128, ..., 2^30` bytes.
pub fn default_size_thresholds() -> Vec<f64> {
    (6..=30).map(|k| 2f64.powi(k)).collect()
}

/// Probabilities `1, 1/2, 1/4, ...` with `count` entries.
pub fn default_probabilities(count: usize) -> Vec<f64> {
    (0..count as i32).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub model: TrafficModel,
    pub axis: Axis,
    pub algorithms: Vec<AlgorithmKind>,
    pub thresholds: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub seeds: Vec<u64>,
    pub flow_count: u64,
    pub coupling: Coupling,
    pub min_packet: u32,
    pub packetization: Packetization,
    pub duration_model: DurationModel,
    /// Flows to evaluate instead of generating them from the model.
    pub flows: Option<Vec<FlowRecord>>,
    pub analytic: bool,
}

impl SweepSpec {
    /// A sweep of every algorithm over the default parameter series.
    pub fn new(model: TrafficModel, axis: Axis) -> Self {
        let thresholds = match axis {
            Axis::Length => default_length_thresholds(),
            Axis::Size => default_size_thresholds(),
        };
        let probabilities = default_probabilities(thresholds.len());
        SweepSpec {
            model,
            axis,
            algorithms: AlgorithmKind::ALL.to_vec(),
            thresholds,
            probabilities,
            seeds: vec![1, 2, 3, 4, 5],
            flow_count: 1_000_000,
            coupling: Coupling::Comonotone,
            min_packet: DEFAULT_MIN_PACKET,
            packetization: Packetization::EvenSplit,
            duration_model: DurationModel::Equal,
            flows: None,
            analytic: true,
        }
    }

    fn algorithm_specs(&self) -> Vec<AlgorithmSpec> {
        let mut algorithms = self.algorithms.clone();
        algorithms.sort();
        algorithms.dedup();
        let s_max = self.model.max_packet_size;
        let mut specs = Vec::new();
        for kind in algorithms {
            let params = match kind {
                AlgorithmKind::Sampling => &self.probabilities,
                _ => &self.thresholds,
            };
            specs.extend(params.iter().map(|&p| AlgorithmSpec::with_param(kind, self.axis, p, s_max)));
        }
        specs
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let fail = |m: &str| Err(SweepError::Spec(m.to_string()));
        if self.algorithms.is_empty() {
            return fail("no algorithms selected");
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        let wants = |k| self.algorithms.contains(&k);
        if (wants(AlgorithmKind::First) || wants(AlgorithmKind::Threshold)) && self.thresholds.is_empty() {
            return fail("threshold list is empty");
        }
        if wants(AlgorithmKind::Sampling) && self.probabilities.is_empty() {
            return fail("probability list is empty");
        }
        match &self.flows {
            Some(f) if f.is_empty() => return fail("the ingested flow list is empty"),
            None if self.flow_count == 0 => return fail("flow count must be at least 1"),
            _ => {}
        }
        for spec in self.algorithm_specs() {
            spec.validate().map_err(|e| SweepError::Spec(e.to_string()))?;
        }
        Ok(())
    }
}

/// Mean or standard deviation of the three metrics. Coverage is a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Triple {
    pub coverage: f64,
    pub ops: f64,
    pub occ: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub algorithm: AlgorithmKind,
    pub param: f64,
    /// One report per seed, in seed order.
    pub runs: Vec<MetricsReport>,
    pub mean: Triple,
    pub std: Triple,
    pub analytic: Option<Result<AnalyticReport, AnalyticError>>,
}

impl CellResult {
    /// Standard error of the seed mean for each metric.
    pub fn standard_error(&self) -> Triple {
        let n = (self.runs.len() as f64).sqrt();
        Triple { coverage: self.std.coverage / n, ops: self.std.ops / n, occ: self.std.occ / n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub model: String,
    pub axis: Axis,
    pub thresholds: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub seeds: Vec<u64>,
    pub flows_per_run: u64,
    /// Share of generated flows whose size was clamped, per seed.
    pub clamped_fraction: Vec<f64>,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    /// The cell for the `index`-th threshold or probability of `algorithm`.
    pub fn cell(&self, algorithm: AlgorithmKind, index: usize) -> Option<&CellResult> {
        let start = self.cells.iter().position(|c| c.algorithm == algorithm)?;
        self.cells[start..].iter().take_while(|c| c.algorithm == algorithm).nth(index)
    }
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let first = values.clone().next().unwrap_or(0.0);
    if values.clone().all(|v| v.to_bits() == first.to_bits()) {
        return (first, 0.0);
    }
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(runs: &[MetricsReport]) -> (Triple, Triple) {
    let (cm, cs) = mean_and_std(runs.iter().map(|r| r.coverage));
    let (om, os) = mean_and_std(runs.iter().map(|r| r.ops_reduction));
    let (pm, ps) = mean_and_std(runs.iter().map(|r| r.occ_reduction));
    (Triple { coverage: cm, ops: om, occ: pm }, Triple { coverage: cs, ops: os, occ: ps })
}

/// Evaluates every cell over one population. Shards run in parallel and are
/// merged in shard order, so the result does not depend on the thread count.
pub fn evaluate_population(
    flows: &[FlowRecord],
    specs: &[AlgorithmSpec],
    seed: u64,
    duration: DurationModel,
) -> Result<Vec<MetricsReport>, SweepError> {
    let shards: Vec<Vec<Accumulator>> = flows
        .par_chunks(SHARD_SIZE as usize)
        .enumerate()
        .map(|(shard, chunk)| {
            specs
                .iter()
                .enumerate()
                .map(|(cell, spec)| {
                    let mut rng = stream_rng(seed, shard as u64, 1 + cell as u64);
                    let mut acc = Accumulator::default();
                    for f in chunk {
                        acc.add(&evaluate(f, spec, &mut rng)?);
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>, AlgorithmError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut totals = vec![Accumulator::default(); specs.len()];
    for shard in &shards {
        for (t, a) in totals.iter_mut().zip(shard) {
            t.merge(a);
        }
    }
    Ok(totals.iter().map(|a| a.report(duration)).collect())
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let specs = spec.algorithm_specs();
    let mut per_seed: Vec<Vec<MetricsReport>> = Vec::with_capacity(spec.seeds.len());
    let mut clamped_fraction = Vec::with_capacity(spec.seeds.len());
    let mut flows_per_run = 0;
    for &seed in &spec.seeds {
        let reports = match &spec.flows {
            Some(flows) => {
                let flows: Vec<FlowRecord> =
                    flows.iter().map(|f| FlowRecord { packetization: spec.packetization, ..*f }).collect();
                flows_per_run = flows.len() as u64;
                clamped_fraction.push(0.0);
                evaluate_population(&flows, &specs, seed, spec.duration_model)?
            }
            None => {
                let config = GeneratorConfig {
                    seed,
                    flow_count: spec.flow_count,
                    coupling: spec.coupling,
                    min_packet: spec.min_packet,
                    packetization: spec.packetization,
                };
                let population = generate_population(&spec.model, config)?;
                flows_per_run = population.flows.len() as u64;
                clamped_fraction.push(population.clamped_fraction());
                evaluate_population(&population.flows, &specs, seed, spec.duration_model)?
            }
        };
        per_seed.push(reports);
    }
    let analytic_values: Vec<Option<Result<AnalyticReport, AnalyticError>>> =
        specs.par_iter().map(|s| spec.analytic.then(|| analytic(&spec.model, s.kind, s.axis, s.param()))).collect();
    let cells = specs
        .iter()
        .zip(analytic_values)
        .enumerate()
        .map(|(i, (s, analytic))| {
            let runs: Vec<MetricsReport> = per_seed.iter().map(|r| r[i]).collect();
            let (mean, std) = summarize(&runs);
            CellResult { algorithm: s.kind, param: s.param(), runs, mean, std, analytic }
        })
        .collect();
    Ok(SweepResult {
        model: spec.model.name.clone(),
        axis: spec.axis,
        thresholds: spec.thresholds.clone(),
        probabilities: spec.probabilities.clone(),
        seeds: spec.seeds.clone(),
        flows_per_run,
        clamped_fraction,
        cells,
    })
}
