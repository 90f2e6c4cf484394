//! Per-flow evaluation of the first, threshold and sampling algorithms, the
//! aggregation of their outcomes into table metrics, and the sampling
//! probability helpers.

mod metrics;
mod probability;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{FlowRecord, GeneratorError, PacketRuns};
use crate::model::Axis;

pub use metrics::{aggregate, Accumulator, DurationModel, MetricsReport};
pub use probability::{p_eff_avg, p_eff_paths, p_total, PathEntry, PathProfile};

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("invalid algorithm parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Packetize(#[from] GeneratorError),
    #[error("no flow entry was created among {flows} flows; reductions are unbounded")]
    Degenerate { flows: u64 },
    #[error("cannot aggregate an empty flow population")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    First,
    Threshold,
    Sampling,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 3] = [AlgorithmKind::First, AlgorithmKind::Threshold, AlgorithmKind::Sampling];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::First => "first",
            AlgorithmKind::Threshold => "threshold",
            AlgorithmKind::Sampling => "sampling",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "first" => Ok(AlgorithmKind::First),
            "threshold" => Ok(AlgorithmKind::Threshold),
            "sampling" => Ok(AlgorithmKind::Sampling),
            o => Err(format!("unknown algorithm `{o}` (expected first, threshold or sampling)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Uniform,
    /// Packet `i` is sampled with probability `p * s_i / s_max`.
    SizeScaled,
}

impl SamplingMode {
    /// Uniform sampling on the length axis, size-scaled on the size axis.
    pub fn for_axis(axis: Axis) -> Self {
        match axis {
            Axis::Length => SamplingMode::Uniform,
            Axis::Size => SamplingMode::SizeScaled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    pub axis: Axis,
    /// Packets or bytes, depending on `axis`. Unused by sampling.
    pub threshold: f64,
    /// Unused by first and threshold.
    pub probability: f64,
    pub sampling_mode: SamplingMode,
    /// `s_max`: the packet size at which size-scaled sampling uses `p` as is.
    pub max_packet_size: u32,
}

impl AlgorithmSpec {
    pub fn first(axis: Axis, threshold: f64, max_packet_size: u32) -> Self {
        AlgorithmSpec {
            kind: AlgorithmKind::First,
            axis,
            threshold,
            probability: 1.0,
            sampling_mode: SamplingMode::for_axis(axis),
            max_packet_size,
        }
    }

    pub fn threshold(axis: Axis, threshold: f64, max_packet_size: u32) -> Self {
        AlgorithmSpec { kind: AlgorithmKind::Threshold, ..Self::first(axis, threshold, max_packet_size) }
    }

    pub fn sampling(axis: Axis, probability: f64, max_packet_size: u32) -> Self {
        AlgorithmSpec { kind: AlgorithmKind::Sampling, probability, ..Self::first(axis, 0.0, max_packet_size) }
    }

    /// Builds the spec for `kind` with `param` as threshold or probability.
    pub fn with_param(kind: AlgorithmKind, axis: Axis, param: f64, max_packet_size: u32) -> Self {
        match kind {
            AlgorithmKind::First => Self::first(axis, param, max_packet_size),
            AlgorithmKind::Threshold => Self::threshold(axis, param, max_packet_size),
            AlgorithmKind::Sampling => Self::sampling(axis, param, max_packet_size),
        }
    }

    pub fn param(&self) -> f64 {
        match self.kind {
            AlgorithmKind::Sampling => self.probability,
            _ => self.threshold,
        }
    }

    pub fn validate(&self) -> Result<(), AlgorithmError> {
        match self.kind {
            AlgorithmKind::First | AlgorithmKind::Threshold => {
                if !(self.threshold >= 0.0) || self.threshold.is_infinite() {
                    return Err(AlgorithmError::Parameter(format!(
                        "threshold must be finite and non-negative, got {}",
                        self.threshold
                    )));
                }
            }
            AlgorithmKind::Sampling => {
                if !(self.probability > 0.0 && self.probability <= 1.0) {
                    return Err(AlgorithmError::Parameter(format!(
                        "sampling probability must lie in (0, 1], got {}",
                        self.probability
                    )));
                }
                if self.sampling_mode == SamplingMode::SizeScaled && self.axis != Axis::Size {
                    return Err(AlgorithmError::Parameter(
                        "size-scaled sampling is defined on the size axis only".into(),
                    ));
                }
            }
        }
        if self.max_packet_size == 0 {
            return Err(AlgorithmError::Parameter("max_packet_size must be positive".into()));
        }
        Ok(())
    }
}

/// Result of running one algorithm on one flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOutcome {
    pub entry_created: bool,
    pub covered_bytes: u64,
    /// Share of the flow's packets sent while its entry exists.
    pub occupancy_fraction: f64,
    pub flow_bytes: u64,
    pub flow_packets: u64,
    /// Packets from the creating packet to the end of the flow.
    pub remaining_packets: u64,
}

impl FlowOutcome {
    fn missed(f: &FlowRecord) -> Self {
        FlowOutcome {
            entry_created: false,
            covered_bytes: 0,
            occupancy_fraction: 0.0,
            flow_bytes: f.size,
            flow_packets: f.length,
            remaining_packets: 0,
        }
    }

    /// Entry installed on arrival of packet `i` (1-based).
    fn created_at(f: &FlowRecord, runs: &PacketRuns, i: u64) -> Self {
        let remaining = f.length - i + 1;
        FlowOutcome {
            entry_created: true,
            covered_bytes: f.size - runs.bytes_before(i - 1),
            occupancy_fraction: remaining as f64 / f.length as f64,
            flow_bytes: f.size,
            flow_packets: f.length,
            remaining_packets: remaining,
        }
    }
}

fn axis_value(f: &FlowRecord, axis: Axis) -> u64 {
    match axis {
        Axis::Length => f.length,
        Axis::Size => f.size,
    }
}

/// Entry at the first packet iff the flow's final length/size exceeds the
/// threshold.
pub fn eval_first(f: &FlowRecord, spec: &AlgorithmSpec) -> Result<FlowOutcome, AlgorithmError> {
    let runs = f.layout(spec.max_packet_size)?;
    if axis_value(f, spec.axis) as f64 > spec.threshold {
        Ok(FlowOutcome::created_at(f, &runs, 1))
    } else {
        Ok(FlowOutcome::missed(f))
    }
}

/// Entry at the first packet whose arrival pushes the per-flow packet or
/// byte counter above the threshold.
pub fn eval_threshold(f: &FlowRecord, spec: &AlgorithmSpec) -> Result<FlowOutcome, AlgorithmError> {
    let runs = f.layout(spec.max_packet_size)?;
    let trigger = match spec.axis {
        Axis::Length => {
            let i = spec.threshold.floor() as u64 + 1;
            (i <= f.length).then_some(i)
        }
        Axis::Size => runs.first_packet_exceeding(spec.threshold),
    };
    Ok(match trigger {
        Some(i) => FlowOutcome::created_at(f, &runs, i),
        None => FlowOutcome::missed(f),
    })
}

/// 1-based index of the first success in `n` Bernoulli(`p`) trials, drawn
/// as one geometric variate.
fn first_success<R: Rng + ?Sized>(p: f64, n: u64, rng: &mut R) -> Option<u64> {
    if n == 0 || p <= 0.0 {
        return None;
    }
    if p >= 1.0 {
        return Some(1);
    }
    // u in (0, 1]
    let u = 1.0 - rng.random::<f64>();
    let k = (u.ln() / (-p).ln_1p()).floor();
    (k < n as f64).then(|| k as u64 + 1)
}

/// Entry at the first sampled packet. Uniform mode samples every packet with
/// probability `p`; size-scaled mode with `p * s_i / s_max`.
pub fn eval_sampling<R: Rng + ?Sized>(
    f: &FlowRecord,
    spec: &AlgorithmSpec,
    rng: &mut R,
) -> Result<FlowOutcome, AlgorithmError> {
    let runs = f.layout(spec.max_packet_size)?;
    Ok(match sampled_packet(&runs, spec, rng) {
        Some(i) => FlowOutcome::created_at(f, &runs, i),
        None => FlowOutcome::missed(f),
    })
}

fn sampled_packet<R: Rng + ?Sized>(runs: &PacketRuns, spec: &AlgorithmSpec, rng: &mut R) -> Option<u64> {
    let p = spec.probability;
    match spec.sampling_mode {
        SamplingMode::Uniform => first_success(p, runs.packets(), rng),
        SamplingMode::SizeScaled => {
            let s_max = spec.max_packet_size as f64;
            let [(s1, n1), (s2, n2)] = runs.runs;
            first_success(p * s1 as f64 / s_max, n1, rng)
                .or_else(|| first_success(p * s2 as f64 / s_max, n2, rng).map(|k| n1 + k))
        }
    }
}

/// Dispatches on `spec.kind`. First and threshold ignore `rng`.
pub fn evaluate<R: Rng + ?Sized>(
    f: &FlowRecord,
    spec: &AlgorithmSpec,
    rng: &mut R,
) -> Result<FlowOutcome, AlgorithmError> {
    match spec.kind {
        AlgorithmKind::First => eval_first(f, spec),
        AlgorithmKind::Threshold => eval_threshold(f, spec),
        AlgorithmKind::Sampling => eval_sampling(f, spec, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const S_MAX: u32 = 1518;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn first_examples() {
        let long = FlowRecord::new(10, 1000);
        let o = eval_first(&long, &AlgorithmSpec::first(Axis::Length, 1.0, S_MAX)).unwrap();
        assert!(o.entry_created);
        assert_eq!(o.covered_bytes, 1000);
        assert_eq!(o.occupancy_fraction, 1.0);

        let short = FlowRecord::new(1, 100);
        let o = eval_first(&short, &AlgorithmSpec::first(Axis::Length, 1.0, S_MAX)).unwrap();
        assert!(!o.entry_created);
        assert_eq!(o.covered_bytes, 0);

        let o = eval_first(&short, &AlgorithmSpec::first(Axis::Length, 0.0, S_MAX)).unwrap();
        assert!(o.entry_created);
        assert_eq!(o.covered_bytes, 100);
    }

    #[test]
    fn threshold_examples() {
        let long = FlowRecord::new(10, 1000);
        let o = eval_threshold(&long, &AlgorithmSpec::threshold(Axis::Length, 1.0, S_MAX)).unwrap();
        assert!(o.entry_created);
        assert_eq!(o.covered_bytes, 900);
        assert!((o.occupancy_fraction - 0.9).abs() < 1e-15);
        assert_eq!(o.remaining_packets, 9);

        for t in [1.0, 5.0, 100.0] {
            let o =
                eval_threshold(&FlowRecord::new(1, 100), &AlgorithmSpec::threshold(Axis::Length, t, S_MAX)).unwrap();
            assert!(!o.entry_created);
        }

        let o = eval_threshold(&FlowRecord::new(4, 100), &AlgorithmSpec::threshold(Axis::Size, 50.0, S_MAX)).unwrap();
        assert!(o.entry_created);
        assert_eq!(o.covered_bytes, 50);
        assert_eq!(o.occupancy_fraction, 0.5);
    }

    #[test]
    fn fractional_length_threshold_uses_packet_count() {
        let f = FlowRecord::new(10, 1000);
        let o = eval_threshold(&f, &AlgorithmSpec::threshold(Axis::Length, 2.5, S_MAX)).unwrap();
        assert_eq!(o.remaining_packets, 8);
        assert!(
            eval_first(&FlowRecord::new(3, 300), &AlgorithmSpec::first(Axis::Length, 2.5, S_MAX))
                .unwrap()
                .entry_created
        );
    }

    #[test]
    fn sampling_with_probability_one_covers_everything() {
        let mut r = rng();
        for f in [FlowRecord::new(1, 64), FlowRecord::new(10, 1000), FlowRecord::new(7, 7 * 1518)] {
            for axis in [Axis::Length, Axis::Size] {
                let o = eval_sampling(&f, &AlgorithmSpec::sampling(axis, 1.0, S_MAX), &mut r).unwrap();
                if axis == Axis::Size && f.size / f.length < S_MAX as u64 {
                    continue;
                }
                assert!(o.entry_created);
                assert_eq!(o.covered_bytes, f.size);
                assert_eq!(o.occupancy_fraction, 1.0);
            }
        }
    }

    #[test]
    fn size_scaled_full_packet_is_always_sampled() {
        let runs = PacketRuns { runs: [(1518, 1), (759, 1)] };
        let spec = AlgorithmSpec::sampling(Axis::Size, 1.0, S_MAX);
        let mut r = rng();
        for _ in 0..100 {
            assert_eq!(sampled_packet(&runs, &spec, &mut r), Some(1));
        }
        // the half-size packet alone is sampled half the time
        let runs = PacketRuns { runs: [(759, 1), (0, 0)] };
        let hits = (0..100_000).filter(|_| sampled_packet(&runs, &spec, &mut r).is_some()).count();
        assert!((hits as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn oversized_packets_are_rejected() {
        let f = FlowRecord::new(1, 2000);
        assert!(matches!(
            eval_sampling(&f, &AlgorithmSpec::sampling(Axis::Size, 0.5, S_MAX), &mut rng()),
            Err(AlgorithmError::Packetize(_))
        ));
    }

    #[test]
    fn invalid_specs() {
        assert!(AlgorithmSpec::sampling(Axis::Length, 0.0, S_MAX).validate().is_err());
        assert!(AlgorithmSpec::sampling(Axis::Length, 1.5, S_MAX).validate().is_err());
        assert!(AlgorithmSpec::first(Axis::Length, -1.0, S_MAX).validate().is_err());
        assert!(AlgorithmSpec::first(Axis::Length, f64::NAN, S_MAX).validate().is_err());
        let mut s = AlgorithmSpec::sampling(Axis::Length, 0.5, S_MAX);
        s.sampling_mode = SamplingMode::SizeScaled;
        assert!(s.validate().is_err());
    }

    #[test]
    fn sampling_creation_frequency_matches_p_total() {
        let mut r = rng();
        let p = 0.05;
        let f = FlowRecord::new(20, 2000);
        let spec = AlgorithmSpec::sampling(Axis::Length, p, S_MAX);
        let trials = 200_000;
        let hits = (0..trials).filter(|_| eval_sampling(&f, &spec, &mut r).unwrap().entry_created).count();
        let want = p_total(p, 20);
        let se = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - want).abs() < 4.0 * se);
    }

    #[test]
    fn geometric_skip_matches_per_packet_trials() {
        // distribution of the creating packet against the geometric law
        let mut r = rng();
        let p = 0.2;
        let mut counts = [0u32; 6];
        let trials = 100_000;
        for _ in 0..trials {
            match first_success(p, 5, &mut r) {
                Some(k) => counts[k as usize - 1] += 1,
                None => counts[5] += 1,
            }
        }
        for (k, &n) in counts.iter().take(5).enumerate() {
            let want = p * (1.0 - p).powi(k as i32);
            let got = n as f64 / trials as f64;
            assert!((got - want).abs() < 4.0 * (want / trials as f64).sqrt(), "k={k}");
        }
    }

    proptest! {
        #[test]
        fn outcome_invariants(length in 1u64..400, per in 64u64..1518, t in 0.0f64..600_000.0, p in 0.001f64..1.0, seed in any::<u64>()) {
            let f = FlowRecord::new(length, length * per);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            for axis in [Axis::Length, Axis::Size] {
                for spec in [
                    AlgorithmSpec::first(axis, t, S_MAX),
                    AlgorithmSpec::threshold(axis, t, S_MAX),
                    AlgorithmSpec::sampling(axis, p, S_MAX),
                ] {
                    let o = evaluate(&f, &spec, &mut r).unwrap();
                    prop_assert!(o.covered_bytes <= o.flow_bytes);
                    prop_assert!(o.occupancy_fraction <= 1.0);
                    if !o.entry_created {
                        prop_assert_eq!(o.covered_bytes, 0);
                        prop_assert_eq!(o.occupancy_fraction, 0.0);
                    }
                }
                let first = eval_first(&f, &AlgorithmSpec::first(axis, t, S_MAX)).unwrap();
                let thr = eval_threshold(&f, &AlgorithmSpec::threshold(axis, t, S_MAX)).unwrap();
                prop_assert_eq!(first.entry_created, thr.entry_created);
                prop_assert!(thr.covered_bytes <= first.covered_bytes);
            }
        }
    }
}
