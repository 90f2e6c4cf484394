use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AlgorithmError, FlowOutcome};

/// How a flow's entry lifetime is weighed against the reactive baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationModel {
    /// Every flow lasts one time unit; an entry created at packet `i` of `l`
    /// lives `(l - i + 1) / l` of it.
    #[default]
    Equal,
    /// Flow duration grows with its packet count (fixed inter-arrival time).
    Proportional,
}

impl FromStr for DurationModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "equal" => Ok(DurationModel::Equal),
            "proportional" => Ok(DurationModel::Proportional),
            o => Err(format!("unknown duration model `{o}` (expected equal or proportional)")),
        }
    }
}

/// Aggregated metrics of one algorithm over a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Covered share of all bytes, in `[0, 1]`.
    pub coverage: f64,
    pub ops_reduction: f64,
    pub occ_reduction: f64,
    pub flows: u64,
    pub entries: u64,
}

impl MetricsReport {
    pub fn coverage_percent(&self) -> f64 {
        100.0 * self.coverage
    }

    pub fn is_degenerate(&self) -> bool {
        self.entries == 0
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "coverage {:.2}%, ops reduction {:.2}, occupancy reduction {:.2}",
            self.coverage_percent(),
            self.ops_reduction,
            self.occ_reduction
        )
    }
}

/// Running sums over flow outcomes. Merging is associative; merge partial
/// accumulators in a fixed order for bit-identical floating point results.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub flows: u64,
    pub entries: u64,
    pub bytes: u128,
    pub covered_bytes: u128,
    pub packets: u128,
    pub remaining_packets: u128,
    pub occupancy: f64,
}

impl Accumulator {
    pub fn add(&mut self, o: &FlowOutcome) {
        self.flows += 1;
        self.entries += o.entry_created as u64;
        self.bytes += o.flow_bytes as u128;
        self.covered_bytes += o.covered_bytes as u128;
        self.packets += o.flow_packets as u128;
        self.remaining_packets += o.remaining_packets as u128;
        self.occupancy += o.occupancy_fraction;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.flows += other.flows;
        self.entries += other.entries;
        self.bytes += other.bytes;
        self.covered_bytes += other.covered_bytes;
        self.packets += other.packets;
        self.remaining_packets += other.remaining_packets;
        self.occupancy += other.occupancy;
    }

    /// Metrics against the one-entry-per-flow baseline. Zero entries give
    /// infinite reductions and zero coverage.
    pub fn report(&self, duration: DurationModel) -> MetricsReport {
        let coverage = if self.bytes == 0 { 0.0 } else { self.covered_bytes as f64 / self.bytes as f64 };
        let (occ_num, occ_den) = match duration {
            DurationModel::Equal => (self.flows as f64, self.occupancy),
            DurationModel::Proportional => (self.packets as f64, self.remaining_packets as f64),
        };
        let ratio = |num: f64, den: f64| if den == 0.0 { f64::INFINITY } else { num / den };
        MetricsReport {
            coverage,
            ops_reduction: ratio(self.flows as f64, self.entries as f64),
            occ_reduction: ratio(occ_num, occ_den),
            flows: self.flows,
            entries: self.entries,
        }
    }
}

pub fn aggregate<'a, I>(outcomes: I, duration: DurationModel) -> Result<MetricsReport, AlgorithmError>
where
    I: IntoIterator<Item = &'a FlowOutcome>,
{
    let mut acc = Accumulator::default();
    for o in outcomes {
        acc.add(o);
    }
    if acc.flows == 0 {
        return Err(AlgorithmError::Empty);
    }
    if acc.entries == 0 {
        return Err(AlgorithmError::Degenerate { flows: acc.flows });
    }
    Ok(acc.report(duration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{eval_first, eval_sampling, eval_threshold, AlgorithmSpec};
    use crate::generator::FlowRecord;
    use crate::model::Axis;
    use rand::SeedableRng;

    fn toy_population() -> Vec<FlowRecord> {
        vec![FlowRecord::new(1, 100), FlowRecord::new(10, 1000)]
    }

    #[test]
    fn toy_first_and_threshold() {
        let pop = toy_population();
        let first: Vec<_> =
            pop.iter().map(|f| eval_first(f, &AlgorithmSpec::first(Axis::Length, 1.0, 1518)).unwrap()).collect();
        let r = aggregate(&first, DurationModel::Equal).unwrap();
        assert!((r.coverage - 1000.0 / 1100.0).abs() < 1e-15);
        assert_eq!(r.ops_reduction, 2.0);
        assert_eq!(r.occ_reduction, 2.0);

        let thr: Vec<_> = pop
            .iter()
            .map(|f| eval_threshold(f, &AlgorithmSpec::threshold(Axis::Length, 1.0, 1518)).unwrap())
            .collect();
        let r = aggregate(&thr, DurationModel::Equal).unwrap();
        assert!((r.coverage - 900.0 / 1100.0).abs() < 1e-15);
        assert_eq!(r.ops_reduction, 2.0);
        assert!((r.occ_reduction - 1.0 / (0.5 * 0.9)).abs() < 1e-12);
    }

    #[test]
    fn sampling_at_one_is_the_baseline() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pop = [FlowRecord::new(1, 64), FlowRecord::new(3, 1000), FlowRecord::new(100, 150_000)];
        for axis in [Axis::Length, Axis::Size] {
            let out: Vec<_> = pop
                .iter()
                .map(|f| eval_sampling(f, &AlgorithmSpec::sampling(axis, 1.0, 1518), &mut rng).unwrap())
                .collect();
            let r = aggregate(&out, DurationModel::Equal).unwrap();
            if axis == Axis::Length {
                assert_eq!((r.coverage, r.ops_reduction, r.occ_reduction), (1.0, 1.0, 1.0));
            }
        }
    }

    #[test]
    fn proportional_durations_weigh_by_packets() {
        let pop = toy_population();
        let thr: Vec<_> = pop
            .iter()
            .map(|f| eval_threshold(f, &AlgorithmSpec::threshold(Axis::Length, 1.0, 1518)).unwrap())
            .collect();
        let r = aggregate(&thr, DurationModel::Proportional).unwrap();
        assert!((r.occ_reduction - 11.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_empty() {
        let out = [eval_first(&FlowRecord::new(1, 100), &AlgorithmSpec::first(Axis::Length, 5.0, 1518)).unwrap()];
        assert!(matches!(aggregate(&out, DurationModel::Equal), Err(AlgorithmError::Degenerate { flows: 1 })));
        let mut acc = Accumulator::default();
        acc.add(&out[0]);
        let r = acc.report(DurationModel::Equal);
        assert_eq!(r.coverage, 0.0);
        assert!(r.ops_reduction.is_infinite() && r.occ_reduction.is_infinite());
        assert!(matches!(aggregate(&[], DurationModel::Equal), Err(AlgorithmError::Empty)));
    }

    #[test]
    fn merge_equals_sequential_adds() {
        let outs: Vec<_> = (1..50u64)
            .map(|l| {
                eval_threshold(&FlowRecord::new(l, l * 100), &AlgorithmSpec::threshold(Axis::Length, 7.0, 1518))
                    .unwrap()
            })
            .collect();
        let mut whole = Accumulator::default();
        outs.iter().for_each(|o| whole.add(o));
        let (a, b) = outs.split_at(20);
        let mut left = Accumulator::default();
        a.iter().for_each(|o| left.add(o));
        let mut right = Accumulator::default();
        b.iter().for_each(|o| right.add(o));
        left.merge(&right);
        assert_eq!(left.entries, whole.entries);
        assert_eq!(left.covered_bytes, whole.covered_bytes);
        assert!((left.occupancy - whole.occupancy).abs() < 1e-12);
    }
}
