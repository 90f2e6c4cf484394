use serde::Deserialize;

use super::AlgorithmError;

/// Probability that at least one of `n` packets is sampled, `1 - (1 - p)^n`.
pub fn p_total(p: f64, n: u64) -> f64 {
    if n == 0 || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    -(n as f64 * (-p).ln_1p()).exp_m1()
}

/// Effective sampling probability over a path of average length `l_avg`
/// where every switch samples with probability `p`.
pub fn p_eff_avg(p: f64, l_avg: f64) -> Result<f64, AlgorithmError> {
    check_probability(p)?;
    if !(l_avg >= 1.0) || l_avg.is_infinite() {
        return Err(AlgorithmError::Parameter(format!("average path length must be >= 1, got {l_avg}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    Ok(-(l_avg * (-p).ln_1p()).exp_m1())
}

fn check_probability(p: f64) -> Result<(), AlgorithmError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(AlgorithmError::Parameter(format!("probability must lie in [0, 1], got {p}")))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEntry {
    pub probability: f64,
    /// Sampling probability of each switch on the path.
    pub switches: Vec<f64>,
}

/// Candidate paths of a flow through the network.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathProfile {
    pub paths: Vec<PathEntry>,
}

impl PathProfile {
    pub fn validate(&self) -> Result<(), AlgorithmError> {
        if self.paths.is_empty() {
            return Err(AlgorithmError::Parameter("path profile has no paths".into()));
        }
        for (k, path) in self.paths.iter().enumerate() {
            check_probability(path.probability)
                .and_then(|_| path.switches.iter().try_for_each(|&p| check_probability(p)))
                .map_err(|e| AlgorithmError::Parameter(format!("path {k}: {e}")))?;
        }
        let total: f64 = self.paths.iter().map(|p| p.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AlgorithmError::Parameter(format!("path probabilities sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// `sum_k P_k * (1 - prod_i (1 - p_ik))` over the profile's paths.
pub fn p_eff_paths(profile: &PathProfile) -> Result<f64, AlgorithmError> {
    profile.validate()?;
    let mut total = 0.0;
    for path in &profile.paths {
        let log_miss: f64 = path.switches.iter().map(|&p| (-p).ln_1p()).sum();
        total += path.probability * -log_miss.exp_m1();
    }
    Ok(total.clamp(0.0, 1.0))
}
