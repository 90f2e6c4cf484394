use super::component::{ComponentKind, Moment};
use super::Axis;

/// Hard upper limit for tail searches and summations (2^40 packets or bytes).
pub const SUPPORT_CAP: u64 = 1 << 40;

/// Tail probability below which a truncated support is considered complete.
pub const TAIL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub kind: ComponentKind,
    pub weight: f64,
}

/// A weighted mixture over one axis.
///
/// Probability mass below `domain_min` is lumped onto `domain_min`. On the
/// length axis values are integers: a continuous draw `x` becomes `ceil(x)`,
/// so `cdf(k) - cdf(k - 1)` is the mass of length `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub components: Vec<MixtureComponent>,
    pub domain_min: u64,
    pub axis: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub point: u64,
    pub tail: f64,
    pub cap_hit: bool,
}

impl Mixture {
    pub fn new(axis: Axis, domain_min: u64, components: Vec<MixtureComponent>) -> Self {
        Mixture { components, domain_min, axis }
    }

    pub fn is_integer_valued(&self) -> bool {
        self.axis == Axis::Length
    }

    /// Maps a query point onto the argument passed to the component CDFs.
    fn component_arg(&self, x: f64) -> f64 {
        if self.is_integer_valued() {
            x.floor()
        } else {
            x
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.domain_min as f64 {
            return 0.0;
        }
        let arg = self.component_arg(x);
        let v: f64 = self.components.iter().map(|c| c.weight * c.kind.cdf(arg)).sum();
        v.clamp(0.0, 1.0)
    }

    pub fn sf(&self, x: f64) -> f64 {
        if x < self.domain_min as f64 {
            return 1.0;
        }
        let arg = self.component_arg(x);
        let v: f64 = self.components.iter().map(|c| c.weight * c.kind.sf(arg)).sum();
        v.clamp(0.0, 1.0)
    }

    /// Probability of the integer value `k`.
    pub fn pmass(&self, k: u64) -> f64 {
        if k < self.domain_min {
            return 0.0;
        }
        let k = k as f64;
        if k == self.domain_min as f64 {
            return 1.0 - self.sf(k);
        }
        (self.sf(k - 1.0) - self.sf(k)).max(0.0)
    }

    pub fn mean(&self) -> Moment {
        let mut acc = 0.0;
        for c in &self.components {
            if c.weight == 0.0 {
                continue;
            }
            match c.kind.mean() {
                Moment::Finite(m) => acc += c.weight * m,
                Moment::Undefined => return Moment::Undefined,
            }
        }
        Moment::Finite(acc)
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Smallest integer `k >= domain_min` with `cdf(k) >= u`, by bisection.
    /// Saturates at [`SUPPORT_CAP`].
    pub fn quantile_index(&self, u: f64) -> u64 {
        let dm = self.domain_min;
        if u <= 0.0 || self.cdf(dm as f64) >= u {
            return dm;
        }
        let mut lo = dm;
        let mut hi = dm.max(1) * 2;
        while self.cdf(hi as f64) < u {
            if hi >= SUPPORT_CAP {
                return SUPPORT_CAP;
            }
            lo = hi;
            hi = (hi * 2).min(SUPPORT_CAP);
        }
        integer_bisect(self, lo, hi, u)
    }

    /// Inverse CDF. Integer-valued axes return the exact integer quantile;
    /// continuous axes bisect in log space to relative tolerance 1e-12.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.is_integer_valued() {
            return self.quantile_index(u) as f64;
        }
        let dm = self.domain_min as f64;
        if u <= 0.0 || self.cdf(dm) >= u {
            return dm;
        }
        let cap = SUPPORT_CAP as f64;
        let mut lo = dm;
        let mut hi = dm * 2.0;
        while self.cdf(hi) < u {
            if hi >= cap {
                return cap;
            }
            lo = hi;
            hi = (hi * 2.0).min(cap);
        }
        while hi / lo - 1.0 > 1e-12 {
            let mid = (lo * hi).sqrt();
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// First power-of-two multiple of `domain_min` whose tail probability is
    /// below `tail`, capped at [`SUPPORT_CAP`]. A cap hit is reported.
    pub fn truncation_point(&self, tail: f64) -> Truncation {
        let mut x = self.domain_min.max(1);
        loop {
            let t = self.sf(x as f64);
            if t < tail {
                return Truncation { point: x, tail: t, cap_hit: false };
            }
            if x >= SUPPORT_CAP {
                return Truncation { point: SUPPORT_CAP, tail: t, cap_hit: true };
            }
            x = (x * 2).min(SUPPORT_CAP);
        }
    }
}

fn integer_bisect(m: &Mixture, mut lo: u64, mut hi: u64, u: f64) -> u64 {
    // invariant: cdf(lo) < u <= cdf(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if m.cdf(mid as f64) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Precomputed CDF knots that narrow the bracket before bisection.
///
/// Returns exactly what [`Mixture::quantile_index`] returns, at a fraction of
/// the cost: every integer up to `domain_min + 1024` is a knot, then knots
/// grow geometrically by 2%.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    mixture: Mixture,
    knots: Vec<u64>,
    cdfs: Vec<f64>,
}

impl IndexSampler {
    pub fn new(mixture: &Mixture) -> Self {
        let mut knots = Vec::new();
        let mut cdfs = Vec::new();
        let mut k = mixture.domain_min;
        loop {
            let c = mixture.cdf(k as f64);
            knots.push(k);
            cdfs.push(c);
            if c >= 1.0 || k >= SUPPORT_CAP {
                break;
            }
            let next = if k < mixture.domain_min + 1024 { k + 1 } else { ((k as f64 * 1.02).ceil() as u64).max(k + 1) };
            k = next.min(SUPPORT_CAP);
        }
        IndexSampler { mixture: mixture.clone(), knots, cdfs }
    }

    pub fn sample_index(&self, u: f64) -> u64 {
        let j = self.cdfs.partition_point(|&c| c < u);
        if j == 0 {
            return self.knots[0];
        }
        if j == self.knots.len() {
            return SUPPORT_CAP;
        }
        integer_bisect(&self.mixture, self.knots[j - 1], self.knots[j], u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lognormal(axis: Axis, dm: u64, mu: f64, sigma: f64) -> Mixture {
        Mixture::new(axis, dm, vec![MixtureComponent { kind: ComponentKind::Lognormal { mu, sigma }, weight: 1.0 }])
    }

    fn toy_flows() -> Mixture {
        Mixture::new(
            Axis::Length,
            1,
            vec![
                MixtureComponent { kind: ComponentKind::Uniform { low: 1.0, high: 1.0 }, weight: 0.5 },
                MixtureComponent { kind: ComponentKind::Uniform { low: 10.0, high: 10.0 }, weight: 0.5 },
            ],
        )
    }

    #[test]
    fn toy_cdf_pmass_quantile_mean() {
        let m = toy_flows();
        assert_eq!(m.cdf(1.0), 0.5);
        assert_eq!(m.cdf(0.0), 0.0);
        assert_eq!(m.pmass(10), 0.5);
        assert_eq!(m.pmass(5), 0.0);
        assert_eq!(m.quantile(0.25), 1.0);
        assert_eq!(m.quantile(0.75), 10.0);
        assert_eq!(m.quantile(0.0), 1.0);
        assert_eq!(m.mean(), Moment::Finite(5.5));
    }

    #[test]
    fn point_mass_at_domain_min() {
        let m = Mixture::new(
            Axis::Length,
            1,
            vec![MixtureComponent { kind: ComponentKind::Uniform { low: 1.0, high: 1.0 }, weight: 1.0 }],
        );
        assert_eq!(m.pmass(1), 1.0);
        assert_eq!(m.mean(), Moment::Finite(1.0));
    }

    #[test]
    fn below_domain_is_zero_and_tail_reaches_one() {
        let m = lognormal(Axis::Size, 64, 8.0, 2.0);
        assert_eq!(m.cdf(63.9), 0.0);
        assert!(m.cdf(63.9 + 0.1) > 0.0);
        assert!((m.cdf(1e300) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pmass_sums_to_one_numerically() {
        // numerical summation oracle: add the mass of each integer explicitly
        let m = lognormal(Axis::Length, 1, 0.0, 1.0);
        let mut total = 0.0;
        for k in 1..=1_000_000u64 {
            total += m.pmass(k);
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn truncation_tail_is_below_tolerance() {
        let m = lognormal(Axis::Length, 1, 3.0, 2.0);
        let t = m.truncation_point(TAIL_TOLERANCE);
        assert!(!t.cap_hit);
        assert!(m.sf(t.point as f64) < TAIL_TOLERANCE);
        let heavy = Mixture::new(
            Axis::Length,
            1,
            vec![MixtureComponent {
                kind: ComponentKind::GeneralizedPareto { shape: 1.5, location: 0.0, scale: 1.0 },
                weight: 1.0,
            }],
        );
        assert!(heavy.truncation_point(TAIL_TOLERANCE).cap_hit);
    }

    #[test]
    fn continuous_quantile_hits_tolerance() {
        let m = lognormal(Axis::Size, 64, 7.0, 1.5);
        for &u in &[0.001, 0.3, 0.5, 0.9, 0.999_999] {
            let x = m.quantile(u);
            assert!(m.cdf(x) >= u);
            assert!(m.cdf(x * (1.0 - 2e-12)) < u + 1e-12);
        }
        // median of an untruncated lognormal
        assert!((m.quantile(0.5) / 7f64.exp() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn sampler_agrees_with_bisection() {
        let m = Mixture::new(
            Axis::Length,
            1,
            vec![
                MixtureComponent { kind: ComponentKind::Lognormal { mu: 0.0, sigma: 0.6 }, weight: 0.6 },
                MixtureComponent { kind: ComponentKind::Lognormal { mu: 5.0, sigma: 2.0 }, weight: 0.4 },
            ],
        );
        let s = IndexSampler::new(&m);
        for i in 0..2000 {
            let u = (i as f64 + 0.37) / 2000.0;
            assert_eq!(s.sample_index(u), m.quantile_index(u), "u={u}");
        }
        assert_eq!(s.sample_index(0.0), 1);
    }
}
