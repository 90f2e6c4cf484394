use serde::Serialize;

use super::{analytic, coverage_of, AnalyticError, AnalyticReport};
use crate::algorithms::AlgorithmKind;
use crate::model::{Axis, TrafficModel, SUPPORT_CAP};

/// Smallest sampling probability searched.
pub const P_MIN: f64 = 1e-12;

const REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inversion {
    /// Threshold (packets or bytes) or sampling probability.
    pub param: f64,
    pub report: AnalyticReport,
}

/// Finds the parameter at which `kind` covers `target` (a fraction) of all
/// bytes.
///
/// Thresholds: the largest threshold whose coverage is at least `target`,
/// moved down to the smallest threshold with the same coverage when the
/// coverage curve is flat there. Probabilities: the smallest probability
/// reaching `target`. Both within relative tolerance 1e-6; length-axis
/// thresholds are exact integers.
pub fn invert_for_coverage(
    model: &TrafficModel,
    kind: AlgorithmKind,
    axis: Axis,
    target: f64,
) -> Result<Inversion, AnalyticError> {
    if target.is_nan() || target <= 0.0 {
        return Err(AnalyticError::Parameter(format!("coverage target must be positive, got {target}")));
    }
    let cov = |x: f64| coverage_of(model, kind, axis, x);
    let param = match kind {
        AlgorithmKind::Sampling => {
            let max = cov(1.0);
            if target > max {
                return Err(AnalyticError::Unreachable { target, max });
            }
            smallest_probability(&cov, target)
        }
        _ => {
            let max = cov(0.0);
            if target > max {
                return Err(AnalyticError::Unreachable { target, max });
            }
            match axis {
                Axis::Length => largest_integer_threshold(&cov, target),
                Axis::Size => largest_threshold(&cov, target),
            }
        }
    };
    let report = analytic(model, kind, axis, param)?;
    Ok(Inversion { param, report })
}

/// Metrics at exactly `target` coverage. Threshold coverage jumps at
/// integer lengths and at atoms of the size distribution, so the two
/// thresholds bracketing the target are mixed at random across flows;
/// coverage, entries and summed occupancy are linear in the mixing weight.
pub fn at_coverage(
    model: &TrafficModel,
    kind: AlgorithmKind,
    axis: Axis,
    target: f64,
) -> Result<AnalyticReport, AnalyticError> {
    if kind == AlgorithmKind::Sampling {
        return invert_for_coverage(model, kind, axis, target).map(|i| i.report);
    }
    if target.is_nan() || target <= 0.0 {
        return Err(AnalyticError::Parameter(format!("coverage target must be positive, got {target}")));
    }
    let cov = |x: f64| coverage_of(model, kind, axis, x);
    let max = cov(0.0);
    if target > max {
        return Err(AnalyticError::Unreachable { target, max });
    }
    let cap = SUPPORT_CAP as f64;
    if cov(cap) >= target {
        return analytic(model, kind, axis, cap);
    }
    let (lo, hi) = match axis {
        Axis::Length => {
            let t = last_integer_reaching(&cov, target) as f64;
            (t, t + 1.0)
        }
        Axis::Size => bisect_threshold(0.0, cap, |t| cov(t) >= target),
    };
    let lo = analytic(model, kind, axis, lo)?;
    if lo.coverage == target {
        return Ok(lo);
    }
    let (hi_cov, hi_ops, hi_occ, hi_bound) = match analytic(model, kind, axis, hi) {
        Ok(r) => (r.coverage, 1.0 / r.ops_reduction, 1.0 / r.occ_reduction, r.truncation_bound),
        Err(AnalyticError::Degenerate { .. }) => (0.0, 0.0, 0.0, 0.0),
        Err(e) => return Err(e),
    };
    let a = (lo.coverage - target) / (lo.coverage - hi_cov);
    let mix = |x: f64, y: f64| 1.0 / ((1.0 - a) * x + a * y);
    Ok(AnalyticReport {
        coverage: target,
        ops_reduction: mix(1.0 / lo.ops_reduction, hi_ops),
        occ_reduction: mix(1.0 / lo.occ_reduction, hi_occ),
        truncation_bound: lo.truncation_bound.max(hi_bound),
    })
}

/// Largest integer threshold whose coverage is at least `target`.
fn last_integer_reaching<F: Fn(f64) -> f64>(cov: &F, target: f64) -> u64 {
    let cap = SUPPORT_CAP;
    if cov(cap as f64) >= target {
        return cap;
    }
    // cov(lo) >= target > cov(hi)
    let (mut lo, mut hi) = (0u64, cap);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cov(mid as f64) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn largest_integer_threshold<F: Fn(f64) -> f64>(cov: &F, target: f64) -> f64 {
    let cap = SUPPORT_CAP;
    let lo = last_integer_reaching(cov, target);
    if lo == cap {
        return cap as f64;
    }
    let level = cov(lo as f64);
    if lo == 0 || cov(0.0) <= level {
        return 0.0;
    }
    // cov(a) > level >= cov(b)
    let (mut a, mut b) = (0u64, lo);
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        if cov(mid as f64) > level {
            a = mid;
        } else {
            b = mid;
        }
    }
    b as f64
}

/// Bisection in `ln(1 + t)` until the bracket is within the tolerance.
fn bisect_threshold<P: Fn(f64) -> bool>(mut lo: f64, mut hi: f64, below: P) -> (f64, f64) {
    // below(lo) && !below(hi)
    while hi - lo > REL_TOL * hi && hi - lo > 1e-9 {
        let mid = ((lo.ln_1p() + hi.ln_1p()) * 0.5).exp_m1();
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

fn largest_threshold<F: Fn(f64) -> f64>(cov: &F, target: f64) -> f64 {
    let cap = SUPPORT_CAP as f64;
    if cov(cap) >= target {
        return cap;
    }
    let (found, _) = bisect_threshold(0.0, cap, |t| cov(t) >= target);
    let level = cov(found);
    if found == 0.0 || cov(0.0) <= level {
        return 0.0;
    }
    let (_, edge) = bisect_threshold(0.0, found, |t| cov(t) > level);
    edge
}

fn smallest_probability<F: Fn(f64) -> f64>(cov: &F, target: f64) -> f64 {
    if cov(P_MIN) >= target {
        return P_MIN;
    }
    // cov(lo) < target <= cov(hi)
    let (mut lo, mut hi) = (P_MIN, 1.0f64);
    while hi / lo - 1.0 > REL_TOL {
        let mid = (lo * hi).sqrt();
        if cov(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
