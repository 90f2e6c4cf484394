use crate::model::{Mixture, SUPPORT_CAP};

/// Integer lengths summed term by term before switching to quadrature.
const EXACT_WINDOW: u64 = 4096;

/// A partial expectation together with the probability mass it ignored
/// beyond [`SUPPORT_CAP`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Expectation {
    pub value: f64,
    pub bound: f64,
}

/// `E[g(X); X > t]` under `m`, for `g` with values in `[0, 1]`.
///
/// Integer axes sum the probability mass of every value in a window above
/// `t` exactly, then integrate the component densities beyond it with `g`
/// taken at the centre of each unit cell. Continuous axes integrate the
/// densities directly; the mass lumped at `domain_min` and point masses are
/// added as atoms.
pub(crate) fn expect_above<G: Fn(f64) -> f64>(m: &Mixture, t: f64, g: &G) -> Expectation {
    let cap = SUPPORT_CAP as f64;
    let bound: f64 = m.components.iter().map(|c| c.weight * c.kind.sf(cap)).sum();
    let value = if m.is_integer_valued() { integer_axis(m, t, g) } else { continuous_axis(m, t, g) };
    Expectation { value, bound }
}

fn integer_axis<G: Fn(f64) -> f64>(m: &Mixture, t: f64, g: &G) -> f64 {
    let dm = m.domain_min;
    let k0 = if t < 0.0 { dm } else { dm.max(t.floor() as u64 + 1) };
    if k0 > SUPPORT_CAP {
        return 0.0;
    }
    let mut prev = if k0 == dm { 1.0 } else { m.sf((k0 - 1) as f64) };
    let mut total = 0.0;
    let last = (k0 + EXACT_WINDOW - 1).min(SUPPORT_CAP);
    for k in k0..=last {
        if prev == 0.0 {
            return total;
        }
        let s = m.sf(k as f64);
        total += (prev - s).max(0.0) * g(k as f64);
        prev = s;
    }
    if prev == 0.0 || last == SUPPORT_CAP {
        return total;
    }
    let from = last as f64;
    // g(ceil x) is approximated by g(x + 1/2), which is smooth across cells
    let cell = |x: f64| g(x + 0.5);
    for c in &m.components {
        if c.weight == 0.0 {
            continue;
        }
        if c.kind.is_point_mass() {
            let k = c.kind.support_min().ceil();
            if k > from {
                total += c.weight * g(k);
            }
        } else {
            total += c.weight * c.kind.integrate(from, SUPPORT_CAP as f64, &cell);
        }
    }
    total
}

fn continuous_axis<G: Fn(f64) -> f64>(m: &Mixture, t: f64, g: &G) -> f64 {
    let dm = m.domain_min as f64;
    let lower = dm.max(t);
    let mut total = 0.0;
    if dm > t {
        total += m.cdf(dm) * g(dm);
    }
    for c in &m.components {
        if c.weight == 0.0 {
            continue;
        }
        if c.kind.is_point_mass() {
            let x = c.kind.support_min();
            if x > lower {
                total += c.weight * g(x);
            }
        } else {
            total += c.weight * c.kind.integrate(lower, SUPPORT_CAP as f64, g);
        }
    }
    total
}
