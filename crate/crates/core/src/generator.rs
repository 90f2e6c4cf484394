//! Seeded generation of synthetic flow populations from a [`TrafficModel`].
//!
//! The population is cut into shards of [`SHARD_SIZE`] flows. Every shard
//! draws from its own ChaCha stream keyed by `(seed, shard index)`, so the
//! same configuration yields the same flows whether shards are generated
//! serially or on any number of threads.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IndexSampler, TrafficModel};

pub const SHARD_SIZE: u64 = 1 << 16;
pub const DEFAULT_MIN_PACKET: u32 = 64;

/// Stream lane reserved for flow generation; sampling uses lanes above it.
pub const GENERATION_LANE: u64 = 0;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("cannot packetize flow of {length} packets and {size} bytes: {reason}")]
    Packetize { length: u64, size: u64, reason: String },
    #[error("flow CSV: {0}")]
    Csv(String),
}

/// How a flow's length and size draws are tied together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// One uniform variate drives both quantiles (perfect rank correlation).
    #[default]
    Comonotone,
    Independent,
}

impl FromStr for Coupling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "comonotone" => Ok(Coupling::Comonotone),
            "independent" => Ok(Coupling::Independent),
            o => Err(format!("unknown coupling `{o}` (expected comonotone or independent)")),
        }
    }
}

/// Layout of a flow's bytes over its packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Packetization {
    /// `floor(size / length)` bytes per packet; the `r` leftover bytes add one
    /// byte to each of the last `r` packets.
    #[default]
    EvenSplit,
    /// `floor(size / length)` bytes per packet with the whole remainder on
    /// the final packet.
    LastRemainder,
}

impl FromStr for Packetization {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "even-split" => Ok(Packetization::EvenSplit),
            "last-remainder" => Ok(Packetization::LastRemainder),
            o => Err(format!("unknown packetization `{o}` (expected even-split or last-remainder)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowRecord {
    pub length: u64,
    pub size: u64,
    pub packetization: Packetization,
}

impl FlowRecord {
    pub fn new(length: u64, size: u64) -> Self {
        FlowRecord { length, size, packetization: Packetization::EvenSplit }
    }

    /// Packet sizes as at most two runs of equal packets.
    pub fn layout(&self, max_packet_size: u32) -> Result<PacketRuns, GeneratorError> {
        let (l, s) = (self.length, self.size);
        let fail = |reason: String| GeneratorError::Packetize { length: l, size: s, reason };
        if l == 0 {
            return Err(fail("flow has no packets".into()));
        }
        let base = s / l;
        let rem = s % l;
        if base == 0 {
            return Err(fail("fewer bytes than packets".into()));
        }
        let runs = match self.packetization {
            Packetization::EvenSplit => PacketRuns { runs: [(base, l - rem), (base + 1, rem)] },
            Packetization::LastRemainder => PacketRuns { runs: [(base, l - 1), (base + rem, 1)] },
        };
        let largest = runs.largest();
        if largest > max_packet_size as u64 {
            return Err(fail(format!("packet of {largest} bytes exceeds the {max_packet_size}-byte maximum")));
        }
        Ok(runs)
    }
}

/// A flow's packets as `(packet size, count)` runs, in transmission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRuns {
    pub runs: [(u64, u64); 2],
}

impl PacketRuns {
    pub fn packets(&self) -> u64 {
        self.runs[0].1 + self.runs[1].1
    }

    pub fn bytes(&self) -> u64 {
        self.runs.iter().map(|(s, n)| s * n).sum()
    }

    pub fn largest(&self) -> u64 {
        self.runs.iter().filter(|(_, n)| *n > 0).map(|(s, _)| *s).max().unwrap_or(0)
    }

    /// Bytes carried by the first `i` packets.
    pub fn bytes_before(&self, i: u64) -> u64 {
        let [(s1, n1), (s2, _)] = self.runs;
        if i <= n1 {
            i * s1
        } else {
            n1 * s1 + (i - n1) * s2
        }
    }

    /// 1-based index of the first packet after which the cumulative byte
    /// count strictly exceeds `threshold`, if any.
    pub fn first_packet_exceeding(&self, threshold: f64) -> Option<u64> {
        let [(s1, n1), (s2, n2)] = self.runs;
        let t = threshold.max(0.0);
        let head = (n1 * s1) as f64;
        let idx = if t < head {
            (t / s1 as f64).floor() as u64 + 1
        } else {
            if n2 == 0 {
                return None;
            }
            n1 + ((t - head) / s2 as f64).floor() as u64 + 1
        };
        (idx <= self.packets()).then_some(idx)
    }

    pub fn to_vec(&self) -> Vec<u64> {
        let mut v = Vec::with_capacity(self.packets() as usize);
        for (s, n) in self.runs {
            v.extend(std::iter::repeat_n(s, n as usize));
        }
        v
    }
}

/// Per-packet byte sizes of a flow. Sums to `f.size` exactly.
pub fn packetize(f: &FlowRecord, max_packet_size: u32) -> Result<Vec<u64>, GeneratorError> {
    f.layout(max_packet_size).map(|r| r.to_vec())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub flow_count: u64,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default = "default_min_packet")]
    pub min_packet: u32,
    #[serde(default)]
    pub packetization: Packetization,
}

fn default_min_packet() -> u32 {
    DEFAULT_MIN_PACKET
}

impl GeneratorConfig {
    pub fn new(seed: u64, flow_count: u64) -> Self {
        GeneratorConfig {
            seed,
            flow_count,
            coupling: Coupling::Comonotone,
            min_packet: DEFAULT_MIN_PACKET,
            packetization: Packetization::EvenSplit,
        }
    }

    pub fn validate(&self, model: &TrafficModel) -> Result<(), GeneratorError> {
        if self.flow_count == 0 {
            return Err(GeneratorError::Config("flow_count must be at least 1".into()));
        }
        if self.min_packet == 0 || self.min_packet > model.max_packet_size {
            return Err(GeneratorError::Config(format!(
                "min_packet {} must lie in [1, max_packet_size = {}]",
                self.min_packet, model.max_packet_size
            )));
        }
        Ok(())
    }
}

/// ChaCha stream for `(seed, shard, lane)`.
pub fn stream_rng(seed: u64, shard: u64, lane: u64) -> ChaCha8Rng {
    debug_assert!(shard < 1 << 48 && lane < 1 << 16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((shard << 16) | lane);
    rng
}

/// Draws one flow using exact integer quantile search on both axes.
///
/// Produces the same flow as [`Generator::sample_flow`] for the same RNG
/// state; the generator only precomputes search brackets.
pub fn sample_flow<R: Rng + ?Sized>(
    model: &TrafficModel,
    coupling: Coupling,
    min_packet: u32,
    rng: &mut R,
) -> (FlowRecord, bool) {
    let u = rng.random::<f64>();
    let length = model.length.flows.quantile_index(u);
    let v = match coupling {
        Coupling::Comonotone => u,
        Coupling::Independent => rng.random::<f64>(),
    };
    let raw = model.size.flows.quantile_index(v);
    clamp_flow(length, raw, min_packet, model.max_packet_size)
}

fn clamp_flow(length: u64, raw_size: u64, min_packet: u32, max_packet: u32) -> (FlowRecord, bool) {
    let lo = length.saturating_mul(min_packet as u64);
    let hi = length.saturating_mul(max_packet as u64);
    let size = raw_size.clamp(lo, hi);
    (FlowRecord::new(length, size), size != raw_size)
}

#[derive(Debug, Clone)]
pub struct Shard {
    pub index: u64,
    pub flows: Vec<FlowRecord>,
    pub clamped: u64,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub flows: Vec<FlowRecord>,
    pub clamped: u64,
}

impl Population {
    /// Share of flows whose coupled size had to be clamped into
    /// `[length * min_packet, length * max_packet_size]`.
    pub fn clamped_fraction(&self) -> f64 {
        if self.flows.is_empty() {
            0.0
        } else {
            self.clamped as f64 / self.flows.len() as f64
        }
    }
}

pub struct Generator<'m> {
    model: &'m TrafficModel,
    config: GeneratorConfig,
    length_sampler: IndexSampler,
    size_sampler: IndexSampler,
}

impl<'m> Generator<'m> {
    pub fn new(model: &'m TrafficModel, config: GeneratorConfig) -> Result<Self, GeneratorError> {
        config.validate(model)?;
        Ok(Generator {
            length_sampler: IndexSampler::new(&model.length.flows),
            size_sampler: IndexSampler::new(&model.size.flows),
            model,
            config,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn shard_count(&self) -> u64 {
        self.config.flow_count.div_ceil(SHARD_SIZE)
    }

    pub fn sample_flow<R: Rng + ?Sized>(&self, rng: &mut R) -> (FlowRecord, bool) {
        let u = rng.random::<f64>();
        let length = self.length_sampler.sample_index(u);
        let v = match self.config.coupling {
            Coupling::Comonotone => u,
            Coupling::Independent => rng.random::<f64>(),
        };
        let raw = self.size_sampler.sample_index(v);
        let (mut flow, clamped) = clamp_flow(length, raw, self.config.min_packet, self.model.max_packet_size);
        flow.packetization = self.config.packetization;
        (flow, clamped)
    }

    pub fn shard(&self, index: u64) -> Shard {
        let start = index * SHARD_SIZE;
        let count = SHARD_SIZE.min(self.config.flow_count.saturating_sub(start));
        let mut rng = stream_rng(self.config.seed, index, GENERATION_LANE);
        let mut flows = Vec::with_capacity(count as usize);
        let mut clamped = 0;
        for _ in 0..count {
            let (f, c) = self.sample_flow(&mut rng);
            clamped += c as u64;
            flows.push(f);
        }
        Shard { index, flows, clamped }
    }

    /// Generates every shard (in parallel) and concatenates them in order.
    pub fn population(&self) -> Population {
        let shards: Vec<Shard> = (0..self.shard_count()).into_par_iter().map(|i| self.shard(i)).collect();
        let clamped = shards.iter().map(|s| s.clamped).sum();
        let flows = shards.into_iter().flat_map(|s| s.flows).collect();
        Population { flows, clamped }
    }
}

pub fn generate_population(model: &TrafficModel, config: GeneratorConfig) -> Result<Population, GeneratorError> {
    Ok(Generator::new(model, config)?.population())
}

impl fmt::Display for FlowRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.length, self.size)
    }
}

const CSV_HEADER: [&str; 2] = ["length_packets", "size_bytes"];

/// Writes `length_packets,size_bytes` rows under a header line.
pub fn write_flows_csv<W: Write>(out: W, flows: &[FlowRecord]) -> Result<(), GeneratorError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| GeneratorError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for f in flows {
        w.write_record([f.length.to_string(), f.size.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| GeneratorError::Csv(e.to_string()))
}

/// Reads flows written by [`write_flows_csv`] (or any tool using the same two
/// columns). A header row is optional.
pub fn read_flows_csv<R: Read>(input: R) -> Result<Vec<FlowRecord>, GeneratorError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut flows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| GeneratorError::Csv(e.to_string()))?;
        if i == 0 && rec.get(0) == Some(CSV_HEADER[0]) {
            continue;
        }
        if rec.len() != 2 {
            return Err(GeneratorError::Csv(format!("row {}: expected 2 columns, got {}", i + 1, rec.len())));
        }
        let parse = |s: &str| s.parse::<u64>().map_err(|e| GeneratorError::Csv(format!("row {}: `{s}`: {e}", i + 1)));
        let (length, size) = (parse(&rec[0])?, parse(&rec[1])?);
        if length == 0 || size < length {
            return Err(GeneratorError::Csv(format!(
                "row {}: need length >= 1 and at least one byte per packet",
                i + 1
            )));
        }
        flows.push(FlowRecord::new(length, size));
    }
    Ok(flows)
}
