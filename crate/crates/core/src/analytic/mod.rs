//! Direct numerical evaluation of the three algorithms over a model's
//! mixtures, without simulating flows.
//!
//! All expectations run over the model's declared weightings: the flows
//! weighting for operation and occupancy counts and the octets weighting for
//! coverage.

mod expectation;
mod invert;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::algorithms::{AlgorithmKind, MetricsReport};
use crate::model::{Axis, TrafficModel, Weighting};

use expectation::expect_above;
pub use invert::{at_coverage, invert_for_coverage, Inversion, P_MIN};

/// Reports whose ignored tail mass exceeds this are flagged.
pub const TRUNCATION_FLAG: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalyticError {
    #[error("{algorithm} at {param}: no flow reaches an entry; reductions are unbounded")]
    Degenerate { algorithm: AlgorithmKind, param: f64 },
    #[error("coverage {target} is unreachable (maximum {max})")]
    Unreachable { target: f64, max: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticReport {
    /// Covered share of all bytes, in `[0, 1]`.
    pub coverage: f64,
    pub ops_reduction: f64,
    pub occ_reduction: f64,
    /// Probability mass beyond the summation cap that the values ignore.
    pub truncation_bound: f64,
}

impl AnalyticReport {
    pub fn flagged(&self) -> bool {
        self.truncation_bound > TRUNCATION_FLAG
    }

    pub fn coverage_percent(&self) -> f64 {
        100.0 * self.coverage
    }

    pub fn relative_error(&self, sim: &MetricsReport) -> [f64; 3] {
        let rel = |a: f64, s: f64| if a == s { 0.0 } else { (a - s).abs() / a.abs() };
        [
            rel(self.coverage, sim.coverage),
            rel(self.ops_reduction, sim.ops_reduction),
            rel(self.occ_reduction, sim.occ_reduction),
        ]
    }
}

impl fmt::Display for AnalyticReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "coverage {:.4}%, ops reduction {:.4}, occupancy reduction {:.4}",
            self.coverage_percent(),
            self.ops_reduction,
            self.occ_reduction
        )?;
        if self.flagged() {
            write!(f, " (truncated tail mass {:.2e})", self.truncation_bound)?;
        }
        Ok(())
    }
}

fn check_threshold(t: f64) -> Result<(), AnalyticError> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(AnalyticError::Parameter(format!("threshold must be finite and non-negative, got {t}")))
    }
}

fn check_probability(p: f64) -> Result<(), AnalyticError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(AnalyticError::Parameter(format!("sampling probability must lie in (0, 1], got {p}")))
    }
}

/// Counter value below which the threshold algorithm has not fired. On the
/// length axis the counter moves in whole packets.
fn effective_threshold(axis: Axis, t: f64) -> f64 {
    match axis {
        Axis::Length => t.floor(),
        Axis::Size => t,
    }
}

pub fn analytic_first(model: &TrafficModel, axis: Axis, t: f64) -> Result<AnalyticReport, AnalyticError> {
    check_threshold(t)?;
    let am = model.axis(axis);
    let reached = am.flows.sf(t);
    if reached == 0.0 {
        return Err(AnalyticError::Degenerate { algorithm: AlgorithmKind::First, param: t });
    }
    Ok(AnalyticReport {
        coverage: am.octets.sf(t),
        ops_reduction: 1.0 / reached,
        occ_reduction: 1.0 / reached,
        truncation_bound: 0.0,
    })
}

pub fn analytic_threshold(model: &TrafficModel, axis: Axis, t: f64) -> Result<AnalyticReport, AnalyticError> {
    check_threshold(t)?;
    let am = model.axis(axis);
    let reached = am.flows.sf(t);
    if reached == 0.0 {
        return Err(AnalyticError::Degenerate { algorithm: AlgorithmKind::Threshold, param: t });
    }
    let te = effective_threshold(axis, t);
    if te == 0.0 {
        return analytic_first(model, axis, t);
    }
    let remaining = |x: f64| 1.0 - (te / x).min(1.0);
    let cov = expect_above(&am.octets, t, &remaining);
    let occ = expect_above(&am.flows, t, &remaining);
    Ok(AnalyticReport {
        coverage: cov.value,
        ops_reduction: 1.0 / reached,
        occ_reduction: 1.0 / occ.value,
        truncation_bound: cov.bound.max(occ.bound),
    })
}

/// Expected covered share of an `l`-packet flow when each packet is sampled
/// with probability `p`: `G(l) = 1 - q (1 - q^l) / (p l)` with `q = 1 - p`.
pub fn length_covered_fraction(p: f64, l: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    if p * l < 0.1 {
        // G(l) = (1/l) sum_m (-1)^(m+1) C(l+1, m+1) p^m
        let mut term = 0.5 * (l + 1.0) * l * p;
        let mut sum = 0.0f64;
        let mut m = 1.0;
        while term != 0.0 && term.abs() > 1e-18 * sum.abs() {
            sum += term;
            term *= -p * (l - m) / (m + 2.0);
            m += 1.0;
        }
        return sum / l;
    }
    let q = 1.0 - p;
    let hit = -(l * (-p).ln_1p()).exp_m1();
    1.0 - q * hit / (p * l)
}

/// Expected covered share of a flow of `y = lambda * s` expected samples
/// under the exponential-in-bytes approximation: `1 - (1 - e^-y) / y`.
pub fn size_covered_fraction(y: f64) -> f64 {
    if y < 1e-2 {
        y * (1.0 / 2.0 - y * (1.0 / 6.0 - y * (1.0 / 24.0 - y * (1.0 / 120.0 - y / 720.0))))
    } else {
        1.0 + (-y).exp_m1() / y
    }
}

fn exact_baseline() -> AnalyticReport {
    AnalyticReport { coverage: 1.0, ops_reduction: 1.0, occ_reduction: 1.0, truncation_bound: 0.0 }
}

pub fn analytic_sampling_length(model: &TrafficModel, p: f64) -> Result<AnalyticReport, AnalyticError> {
    check_probability(p)?;
    if p == 1.0 {
        return Ok(exact_baseline());
    }
    let am = &model.length;
    let g = |l: f64| length_covered_fraction(p, l);
    let created = |l: f64| -(l * (-p).ln_1p()).exp_m1();
    let cov = expect_above(&am.octets, 0.0, &g);
    let ops = expect_above(&am.flows, 0.0, &created);
    let occ = expect_above(&am.flows, 0.0, &g);
    Ok(AnalyticReport {
        coverage: cov.value,
        ops_reduction: 1.0 / ops.value,
        occ_reduction: 1.0 / occ.value,
        truncation_bound: cov.bound.max(ops.bound).max(occ.bound),
    })
}

/// Size-scaled sampling approximated as a Poisson process of rate
/// `p / s_max` per byte. Exact only as `p * s_i / s_max` goes to zero.
pub fn analytic_sampling_size(model: &TrafficModel, p: f64) -> Result<AnalyticReport, AnalyticError> {
    check_probability(p)?;
    let am = &model.size;
    let lambda = p / model.max_packet_size as f64;
    let h = |s: f64| size_covered_fraction(lambda * s);
    let created = |s: f64| -(-lambda * s).exp_m1();
    let cov = expect_above(&am.octets, 0.0, &h);
    let ops = expect_above(&am.flows, 0.0, &created);
    let occ = expect_above(&am.flows, 0.0, &h);
    Ok(AnalyticReport {
        coverage: cov.value,
        ops_reduction: 1.0 / ops.value,
        occ_reduction: 1.0 / occ.value,
        truncation_bound: cov.bound.max(ops.bound).max(occ.bound),
    })
}

/// Dispatches on `kind`; sampling is uniform on the length axis and
/// size-scaled on the size axis.
pub fn analytic(
    model: &TrafficModel,
    kind: AlgorithmKind,
    axis: Axis,
    param: f64,
) -> Result<AnalyticReport, AnalyticError> {
    match (kind, axis) {
        (AlgorithmKind::First, _) => analytic_first(model, axis, param),
        (AlgorithmKind::Threshold, _) => analytic_threshold(model, axis, param),
        (AlgorithmKind::Sampling, Axis::Length) => analytic_sampling_length(model, param),
        (AlgorithmKind::Sampling, Axis::Size) => analytic_sampling_size(model, param),
    }
}

/// Coverage alone, as a function of the algorithm parameter; zero where
/// no flow reaches an entry.
pub(crate) fn coverage_of(model: &TrafficModel, kind: AlgorithmKind, axis: Axis, param: f64) -> f64 {
    match kind {
        AlgorithmKind::First => model.axis(axis).mixture(Weighting::Octets).sf(param),
        _ => analytic(model, kind, axis, param).map(|r| r.coverage).unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    pub(crate) fn toy() -> TrafficModel {
        parse_model(include_str!("../../../../models/toy_twopoint.json")).unwrap()
    }

    fn heavytail() -> TrafficModel {
        parse_model(include_str!("../../../../models/example_heavytail.json")).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn toy_first_and_threshold() {
        let m = toy();
        let r = analytic_first(&m, Axis::Length, 1.0).unwrap();
        assert!(close(r.coverage, 10.0 / 11.0, 1e-12));
        assert!(close(r.ops_reduction, 2.0, 1e-12) && r.ops_reduction == r.occ_reduction);
        let r = analytic_threshold(&m, Axis::Length, 1.0).unwrap();
        assert!(close(r.coverage, 9.0 / 11.0, 1e-12));
        assert!(close(r.ops_reduction, 2.0, 1e-12));
        assert!(close(r.occ_reduction, 1.0 / 0.45, 1e-12));
        let r = analytic_first(&m, Axis::Size, 100.0).unwrap();
        assert!(close(r.coverage, 10.0 / 11.0, 1e-12));
    }

    #[test]
    fn zero_threshold_is_the_baseline() {
        for m in [toy(), heavytail()] {
            for axis in [Axis::Length, Axis::Size] {
                let f = analytic_first(&m, axis, 0.0).unwrap();
                let t = analytic_threshold(&m, axis, 0.0).unwrap();
                assert_eq!(f, t);
                assert_eq!((f.coverage, f.ops_reduction, f.occ_reduction), (1.0, 1.0, 1.0));
            }
        }
    }

    #[test]
    fn beyond_support_is_degenerate() {
        let m = toy();
        assert!(matches!(analytic_first(&m, Axis::Length, 10.0), Err(AnalyticError::Degenerate { .. })));
        assert!(matches!(analytic_threshold(&m, Axis::Size, 5000.0), Err(AnalyticError::Degenerate { .. })));
        assert!(analytic_first(&m, Axis::Length, -1.0).is_err());
        assert!(analytic_sampling_length(&m, 0.0).is_err());
        assert!(analytic_sampling_size(&m, 1.5).is_err());
    }

    #[test]
    fn toy_sampling() {
        let m = toy();
        let r = analytic_sampling_length(&m, 0.5).unwrap();
        let want = 1.0 / (0.5 * 0.5 + 0.5 * (1.0 - 0.5f64.powi(10)));
        assert!(close(r.ops_reduction, want, 1e-12));
        assert!(close(r.ops_reduction, 1.334_20, 1e-5));
        let r = analytic_sampling_length(&m, 1.0).unwrap();
        assert_eq!((r.coverage, r.ops_reduction, r.occ_reduction), (1.0, 1.0, 1.0));
    }

    fn brute_g(p: f64, l: u64) -> f64 {
        // Neumaier-compensated direct summation
        let q = 1.0 - p;
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 1..=l {
            let term = p * q.powi(k as i32 - 1) * (l - k + 1) as f64 / l as f64;
            let t = sum + term;
            comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
            sum = t;
        }
        sum + comp
    }

    #[test]
    fn covered_fraction_matches_direct_summation() {
        for &p in &[1e-4, 1e-2, 0.1, 0.5, 1.0] {
            for l in (1..=200).chain((201..=10_000).step_by(97)).chain([10_000]) {
                let got = length_covered_fraction(p, l as f64);
                let want = brute_g(p, l);
                assert!((got - want).abs() < 1e-12, "p={p} l={l}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn size_fraction_limits() {
        assert!((size_covered_fraction(1e6) - 1.0).abs() < 1e-5);
        // both branches agree at the switch point
        let below = size_covered_fraction(1e-2 * (1.0 - 1e-12));
        let above = 1.0 + (-1e-2f64).exp_m1() / 1e-2;
        assert!((below / above - 1.0).abs() < 1e-12);
        // first order in y
        assert!((size_covered_fraction(1e-8) / 5e-9 - 1.0).abs() < 1e-7);
    }

    #[test]
    fn first_reductions_are_equal_everywhere() {
        let m = heavytail();
        for k in 0..30 {
            let t = 2f64.powi(k);
            for axis in [Axis::Length, Axis::Size] {
                if let Ok(r) = analytic_first(&m, axis, t) {
                    assert_eq!(r.ops_reduction, r.occ_reduction);
                }
            }
        }
    }

    #[test]
    fn threshold_occupancy_exceeds_operations() {
        let m = heavytail();
        for k in 0..22 {
            let t = 2f64.powi(k);
            let r = analytic_threshold(&m, Axis::Length, t).unwrap();
            assert!(r.occ_reduction >= r.ops_reduction);
            let f = analytic_first(&m, Axis::Length, t).unwrap();
            assert!(r.coverage <= f.coverage);
        }
    }
}
