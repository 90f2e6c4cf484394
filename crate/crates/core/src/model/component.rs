//! Parametric component families used inside flow mixtures.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// First moment of a distribution, which may diverge for heavy tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Undefined,
}

impl Moment {
    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Undefined => None,
        }
    }
}

/// One distribution family with its parameters.
///
/// A uniform with `low == high` is a point mass; the two-point toy model is
/// written that way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKind {
    Uniform { low: f64, high: f64 },
    Lognormal { mu: f64, sigma: f64 },
    GeneralizedPareto { shape: f64, location: f64, scale: f64 },
}

impl ComponentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ComponentKind::Uniform { .. } => "uniform",
            ComponentKind::Lognormal { .. } => "lognormal",
            ComponentKind::GeneralizedPareto { .. } => "generalized-pareto",
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self, ComponentKind::Uniform { low, high } if low == high)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ComponentKind::Uniform { low, high } => {
                if x < low {
                    0.0
                } else if x >= high {
                    1.0
                } else {
                    (x - low) / (high - low)
                }
            }
            ComponentKind::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    0.5 * libm::erfc(-(x.ln() - mu) / sigma * FRAC_1_SQRT_2)
                }
            }
            ComponentKind::GeneralizedPareto { .. } => 1.0 - self.sf(x),
        }
    }

    /// Survival function `P(X > x)`, evaluated directly so that tail
    /// probabilities keep full relative precision.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            ComponentKind::Uniform { low, high } => {
                if x < low {
                    1.0
                } else if x >= high {
                    0.0
                } else {
                    (high - x) / (high - low)
                }
            }
            ComponentKind::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.5 * libm::erfc((x.ln() - mu) / sigma * FRAC_1_SQRT_2)
                }
            }
            ComponentKind::GeneralizedPareto { shape, location, scale } => {
                let z = (x - location) / scale;
                if z <= 0.0 {
                    return 1.0;
                }
                if shape == 0.0 {
                    (-z).exp()
                } else if shape < 0.0 && z >= -1.0 / shape {
                    0.0
                } else {
                    (-(shape * z).ln_1p() / shape).exp()
                }
            }
        }
    }

    pub fn mean(&self) -> Moment {
        match *self {
            ComponentKind::Uniform { low, high } => Moment::Finite(0.5 * (low + high)),
            ComponentKind::Lognormal { mu, sigma } => Moment::Finite((mu + 0.5 * sigma * sigma).exp()),
            ComponentKind::GeneralizedPareto { shape, location, scale } => {
                if shape < 1.0 {
                    Moment::Finite(location + scale / (1.0 - shape))
                } else {
                    Moment::Undefined
                }
            }
        }
    }

    /// Lower end of the support.
    pub fn support_min(&self) -> f64 {
        match *self {
            ComponentKind::Uniform { low, .. } => low,
            ComponentKind::Lognormal { .. } => 0.0,
            ComponentKind::GeneralizedPareto { location, .. } => location,
        }
    }

    /// Integrates `density(x) * g(x)` over `(a, b)` with `0 < a < b`.
    ///
    /// Each family is integrated in the coordinate in which its density is
    /// smooth: `ln x` for the lognormal, `-ln sf` for the generalized Pareto,
    /// and log-spaced panels for the uniform. Point masses contribute nothing.
    pub fn integrate<G: Fn(f64) -> f64>(&self, a: f64, b: f64, g: &G) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        match *self {
            ComponentKind::Uniform { low, high } => {
                if low == high {
                    return 0.0;
                }
                let lo = a.max(low);
                let hi = b.min(high);
                if !(hi > lo) {
                    return 0.0;
                }
                // log-spaced panels resolve integrands like 1 - T/x near T
                let lo_pos = lo.max(f64::MIN_POSITIVE);
                let span = (hi / lo_pos).ln();
                let panels = ((span * 16.0).ceil() as usize).clamp(1, 4096);
                let inv_width = 1.0 / (high - low);
                let mut total = 0.0;
                let mut left = lo;
                for j in 1..=panels {
                    let right = if j == panels { hi } else { lo_pos * (span * j as f64 / panels as f64).exp() };
                    total += gauss_legendre(left, right, g);
                    left = right;
                }
                total * inv_width
            }
            ComponentKind::Lognormal { mu, sigma } => {
                let t_lo = a.ln().max(mu - 12.0 * sigma);
                let t_hi = b.ln().min(mu + 12.0 * sigma);
                if !(t_hi > t_lo) {
                    return 0.0;
                }
                let width = sigma.min(1.0) / 8.0;
                let panels = ((t_hi - t_lo) / width).ceil().max(1.0) as usize;
                let h = (t_hi - t_lo) / panels as f64;
                let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
                let mut total = 0.0;
                for j in 0..panels {
                    let l = t_lo + h * j as f64;
                    total += gauss_legendre(l, l + h, |t| {
                        let z = (t - mu) / sigma;
                        norm * (-0.5 * z * z).exp() * g(t.exp())
                    });
                }
                total
            }
            ComponentKind::GeneralizedPareto { shape, location, scale } => {
                // v = -ln sf(x); the density in v is exp(-v)
                let to_v = |x: f64| -> f64 {
                    let z = ((x - location) / scale).max(0.0);
                    if shape == 0.0 {
                        z
                    } else if shape < 0.0 && z >= -1.0 / shape {
                        f64::INFINITY
                    } else {
                        (shape * z).ln_1p() / shape
                    }
                };
                let to_x = |v: f64| -> f64 {
                    if shape == 0.0 {
                        location + scale * v
                    } else {
                        location + scale * (shape * v).exp_m1() / shape
                    }
                };
                let v_lo = to_v(a);
                let v_hi = to_v(b).min(45.0);
                if !(v_hi > v_lo) {
                    return 0.0;
                }
                let width = 1.0 / (8.0 * shape.abs().max(1.0));
                let panels = ((v_hi - v_lo) / width).ceil().max(1.0) as usize;
                let h = (v_hi - v_lo) / panels as f64;
                let mut total = 0.0;
                for j in 0..panels {
                    let l = v_lo + h * j as f64;
                    total += gauss_legendre(l, l + h, |v| (-v).exp() * g(to_x(v)));
                }
                total
            }
        }
    }
}

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 4] =
    [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_2];
const GL_WEIGHTS: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

fn gauss_legendre<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_degree_15() {
        let got = gauss_legendre(0.0, 2.0, |x| x.powi(15));
        let want = 2f64.powi(16) / 16.0;
        assert!((got - want).abs() / want < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn lognormal_cdf_sf_complement() {
        let c = ComponentKind::Lognormal { mu: 1.0, sigma: 0.7 };
        for &x in &[0.1, 1.0, 3.0, 10.0, 100.0] {
            assert!((c.cdf(x) + c.sf(x) - 1.0).abs() < 1e-15);
        }
        assert!((c.cdf(1f64.exp()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn genpareto_sf_and_mean() {
        let c = ComponentKind::GeneralizedPareto { shape: 0.5, location: 1.0, scale: 2.0 };
        // sf = (1 + 0.5 * 2)^-2 at x = 5
        assert!((c.sf(5.0) - 0.25).abs() < 1e-15);
        assert_eq!(c.mean(), Moment::Finite(1.0 + 2.0 / 0.5));
        let heavy = ComponentKind::GeneralizedPareto { shape: 1.2, location: 1.0, scale: 1.0 };
        assert_eq!(heavy.mean(), Moment::Undefined);
        let bounded = ComponentKind::GeneralizedPareto { shape: -0.5, location: 0.0, scale: 1.0 };
        assert_eq!(bounded.sf(2.0), 0.0);
        assert_eq!(bounded.sf(3.0), 0.0);
    }

    #[test]
    fn exponential_special_case() {
        let c = ComponentKind::GeneralizedPareto { shape: 0.0, location: 0.0, scale: 3.0 };
        assert!((c.sf(3.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(c.mean(), Moment::Finite(3.0));
    }

    #[test]
    fn point_mass_steps() {
        let c = ComponentKind::Uniform { low: 10.0, high: 10.0 };
        assert!(c.is_point_mass());
        assert_eq!(c.cdf(9.999), 0.0);
        assert_eq!(c.cdf(10.0), 1.0);
        assert_eq!(c.sf(10.0), 0.0);
    }

    #[test]
    fn integrals_of_density_match_cdf() {
        let one = |_: f64| 1.0;
        let cases = [
            ComponentKind::Lognormal { mu: 2.0, sigma: 1.5 },
            ComponentKind::GeneralizedPareto { shape: 0.8, location: 1.0, scale: 5.0 },
            ComponentKind::GeneralizedPareto { shape: -0.3, location: 1.0, scale: 5.0 },
            ComponentKind::Uniform { low: 3.0, high: 70.0 },
        ];
        for c in cases {
            let got = c.integrate(4.0, 1e9, &one);
            let want = c.cdf(1e9) - c.cdf(4.0);
            assert!((got - want).abs() < 1e-12, "{c:?}: {got} vs {want}");
        }
    }

    #[test]
    fn lognormal_first_moment_by_quadrature() {
        let c = ComponentKind::Lognormal { mu: 1.0, sigma: 0.5 };
        let got = c.integrate(1e-6, 1e6, &|x| x);
        let want = c.mean().finite().unwrap();
        assert!((got - want).abs() / want < 1e-12);
    }
}
