//! Flow length/size mixture models: parsing, validation and evaluation.
//!
//! A [`TrafficModel`] carries two axes (length in packets, size in bytes).
//! Each axis declares three mixtures over the same variable, weighted by the
//! number of flows, packets and octets respectively.

mod component;
mod mixture;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use component::{ComponentKind, Moment};
pub use mixture::{IndexSampler, Mixture, MixtureComponent, Truncation, SUPPORT_CAP, TAIL_TOLERANCE};

pub const DEFAULT_MAX_PACKET_SIZE: u32 = 1518;
pub const DEFAULT_LENGTH_DOMAIN_MIN: u64 = 1;
pub const DEFAULT_SIZE_DOMAIN_MIN: u64 = 64;

const WEIGHT_TOLERANCE: f64 = 1e-9;
const DOMINANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Length,
    Size,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Length => "length",
            Axis::Size => "size",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Axis::Length => "packets",
            Axis::Size => "bytes",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "length" => Ok(Axis::Length),
            "size" => Ok(Axis::Size),
            other => Err(format!("unknown axis `{other}` (expected length or size)")),
        }
    }
}

/// Which quantity a mixture's probability mass counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Flows,
    Packets,
    Octets,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Flows => "flows",
            Weighting::Packets => "packets",
            Weighting::Octets => "octets",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisModel {
    pub axis: Axis,
    pub flows: Mixture,
    pub packets: Mixture,
    pub octets: Mixture,
}

impl AxisModel {
    pub fn mixture(&self, w: Weighting) -> &Mixture {
        match w {
            Weighting::Flows => &self.flows,
            Weighting::Packets => &self.packets,
            Weighting::Octets => &self.octets,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    pub name: String,
    pub length: AxisModel,
    pub size: AxisModel,
    pub avg_flow_length: Moment,
    pub avg_flow_size: Moment,
    pub avg_packet_size: Moment,
    pub max_packet_size: u32,
}

impl TrafficModel {
    pub fn axis(&self, axis: Axis) -> &AxisModel {
        match axis {
            Axis::Length => &self.length,
            Axis::Size => &self.size,
        }
    }

    /// Serializes back to the model file format.
    pub fn to_json(&self) -> String {
        let doc = ModelDoc::from_model(self);
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("SchemaError: {0}")]
    Schema(String),
    #[error("ParameterError at {location}: {message}")]
    Parameter { location: String, message: String },
    #[error("WeightError at {location}: weights sum to {sum} (expected 1)")]
    Weight { location: String, sum: f64 },
    #[error("DominanceError on {axis} axis: {upper} CDF {upper_cdf} < {lower} CDF {lower_cdf} at x = {x}")]
    Dominance { axis: Axis, upper: &'static str, lower: &'static str, x: f64, upper_cdf: f64, lower_cdf: f64 },
    #[error("ConsistencyError: {0}")]
    Consistency(String),
}

impl ModelError {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::Schema(_) => "SchemaError",
            ModelError::Parameter { .. } => "ParameterError",
            ModelError::Weight { .. } => "WeightError",
            ModelError::Dominance { .. } => "DominanceError",
            ModelError::Consistency(_) => "ConsistencyError",
        }
    }

    /// Structural problems are validation failures; a well-formed model whose
    /// distributions contradict each other is a consistency failure.
    pub fn is_consistency(&self) -> bool {
        matches!(self, ModelError::Dominance { .. } | ModelError::Consistency(_))
    }
}

/// Parses and validates a model document, stopping at the first problem.
pub fn parse_model(document: &str) -> Result<TrafficModel, ModelError> {
    check_model(document).map_err(|mut errs| errs.remove(0))
}

/// Parses and validates a model document, collecting every problem found.
pub fn check_model(document: &str) -> Result<TrafficModel, Vec<ModelError>> {
    let doc: ModelDoc = serde_json::from_str(document).map_err(|e| vec![ModelError::Schema(e.to_string())])?;
    let mut errors = Vec::new();
    let length = build_axis(Axis::Length, &doc.axes.length, &mut errors);
    let size = build_axis(Axis::Size, &doc.axes.size, &mut errors);
    let max_packet_size = match doc.max_packet_size {
        None => DEFAULT_MAX_PACKET_SIZE,
        Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => v as u32,
        Some(v) => {
            errors.push(ModelError::Parameter {
                location: "max_packet_size".into(),
                message: format!("must be a positive integer, got {v}"),
            });
            DEFAULT_MAX_PACKET_SIZE
        }
    };
    if !errors.is_empty() {
        return Err(errors);
    }
    let (length, size) = (length.unwrap(), size.unwrap());

    for am in [&length, &size] {
        check_dominance(am, &mut errors);
    }

    let avg_flow_length = match doc.avg_flow_length {
        Some(v) => Moment::Finite(v),
        None => length.flows.mean(),
    };
    let avg_flow_size = match doc.avg_flow_size {
        Some(v) => Moment::Finite(v),
        None => size.flows.mean(),
    };
    let avg_packet_size = match (doc.avg_packet_size, avg_flow_length, avg_flow_size) {
        (Some(v), _, _) => Moment::Finite(v),
        (None, Moment::Finite(l), Moment::Finite(s)) if l > 0.0 => Moment::Finite(s / l),
        _ => Moment::Undefined,
    };
    if let (Some(l), Some(s), Some(p)) = (doc.avg_flow_length, doc.avg_flow_size, doc.avg_packet_size) {
        let implied = s / l;
        if ((implied - p) / p).abs() > 0.01 {
            errors.push(ModelError::Consistency(format!(
                "avg_packet_size {p} differs from avg_flow_size / avg_flow_length = {implied} by more than 1%"
            )));
        }
    }
    if let Moment::Finite(p) = avg_packet_size {
        if p > max_packet_size as f64 {
            errors.push(ModelError::Consistency(format!(
                "max_packet_size {max_packet_size} is below the average packet size {p}"
            )));
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(TrafficModel { name: doc.name, length, size, avg_flow_length, avg_flow_size, avg_packet_size, max_packet_size })
}

fn build_axis(axis: Axis, doc: &AxisDoc, errors: &mut Vec<ModelError>) -> Option<AxisModel> {
    let before = errors.len();
    let flows = build_mixture(axis, Weighting::Flows, &doc.flows, errors);
    let packets = build_mixture(axis, Weighting::Packets, &doc.packets, errors);
    let octets = build_mixture(axis, Weighting::Octets, &doc.octets, errors);
    if errors.len() > before {
        return None;
    }
    Some(AxisModel { axis, flows: flows?, packets: packets?, octets: octets? })
}

fn build_mixture(axis: Axis, weighting: Weighting, doc: &MixtureDoc, errors: &mut Vec<ModelError>) -> Option<Mixture> {
    let location = format!("axes.{}.{}", axis.as_str(), weighting.as_str());
    let before = errors.len();
    let domain_min = doc.domain_min.unwrap_or(match axis {
        Axis::Length => DEFAULT_LENGTH_DOMAIN_MIN,
        Axis::Size => DEFAULT_SIZE_DOMAIN_MIN,
    });
    if domain_min == 0 {
        errors.push(ModelError::Parameter {
            location: format!("{location}.domain_min"),
            message: "must be a positive integer".into(),
        });
    }
    if doc.components.is_empty() {
        errors.push(ModelError::Schema(format!("{location}: components must not be empty")));
    }
    // lowest admissible support point once values are discretized
    let lower_bound = match axis {
        Axis::Length => domain_min.saturating_sub(1) as f64,
        Axis::Size => domain_min as f64,
    };
    let mut components = Vec::with_capacity(doc.components.len());
    for (i, c) in doc.components.iter().enumerate() {
        let at = format!("{location}.components[{i}]");
        match component_from_doc(c, lower_bound) {
            Ok(kind) => {
                if !(0.0..=1.0).contains(&c.weight) {
                    errors.push(ModelError::Parameter {
                        location: at,
                        message: format!("weight {} outside [0, 1]", c.weight),
                    });
                }
                components.push(MixtureComponent { kind, weight: c.weight });
            }
            Err(e) => errors.push(match e {
                ComponentIssue::Schema(m) => ModelError::Schema(format!("{at}: {m}")),
                ComponentIssue::Parameter(m) => ModelError::Parameter { location: at, message: m },
            }),
        }
    }
    if errors.len() > before {
        return None;
    }
    let sum: f64 = components.iter().map(|c| c.weight).sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        errors.push(ModelError::Weight { location, sum });
        return None;
    }
    Some(Mixture::new(axis, domain_min, components))
}

enum ComponentIssue {
    Schema(String),
    Parameter(String),
}

fn component_from_doc(c: &ComponentDoc, lower_bound: f64) -> Result<ComponentKind, ComponentIssue> {
    let expected: &[&str] = match c.kind.as_str() {
        "uniform" => &["low", "high"],
        "lognormal" => &["mu", "sigma"],
        "generalized-pareto" | "genpareto" => &["shape", "location", "scale"],
        other => return Err(ComponentIssue::Schema(format!("unknown component kind `{other}`"))),
    };
    for key in c.params.keys() {
        if !expected.contains(&key.as_str()) {
            return Err(ComponentIssue::Schema(format!("unexpected parameter `{key}` for {}", c.kind)));
        }
    }
    let mut vals = [0.0; 3];
    for (slot, key) in vals.iter_mut().zip(expected) {
        *slot = *c
            .params
            .get(*key)
            .ok_or_else(|| ComponentIssue::Schema(format!("missing parameter `{key}` for {}", c.kind)))?;
        if !slot.is_finite() {
            return Err(ComponentIssue::Parameter(format!("parameter `{key}` is not finite")));
        }
    }
    let kind = match c.kind.as_str() {
        "uniform" => {
            let (low, high) = (vals[0], vals[1]);
            if high < low {
                return Err(ComponentIssue::Parameter(format!("high {high} < low {low}")));
            }
            if low < lower_bound {
                return Err(ComponentIssue::Parameter(format!(
                    "low {low} lies below the domain lower bound {lower_bound}"
                )));
            }
            ComponentKind::Uniform { low, high }
        }
        "lognormal" => {
            let (mu, sigma) = (vals[0], vals[1]);
            if sigma <= 0.0 {
                return Err(ComponentIssue::Parameter(format!("sigma must be positive, got {sigma}")));
            }
            ComponentKind::Lognormal { mu, sigma }
        }
        _ => {
            let (shape, location, scale) = (vals[0], vals[1], vals[2]);
            if scale <= 0.0 {
                return Err(ComponentIssue::Parameter(format!("scale must be positive, got {scale}")));
            }
            if location < lower_bound {
                return Err(ComponentIssue::Parameter(format!(
                    "location {location} lies below the domain lower bound {lower_bound}"
                )));
            }
            ComponentKind::GeneralizedPareto { shape, location, scale }
        }
    };
    Ok(kind)
}

/// Points at which the flows >= packets >= octets ordering is checked.
pub fn validation_grid(am: &AxisModel) -> Vec<f64> {
    let dm = am.flows.domain_min.min(am.packets.domain_min).min(am.octets.domain_min);
    let end = [&am.flows, &am.packets, &am.octets]
        .iter()
        .map(|m| m.truncation_point(TAIL_TOLERANCE).point)
        .max()
        .unwrap_or(dm);
    let mut grid = Vec::new();
    match am.axis {
        Axis::Length => {
            let dense_end = (dm + 1024).min(end.max(dm));
            grid.extend((dm..=dense_end).map(|k| k as f64));
            let mut x = dense_end as f64;
            while x < end as f64 {
                x = (x * 1.05).ceil();
                grid.push(x);
            }
        }
        Axis::Size => {
            let mut x = dm as f64;
            while x <= end as f64 {
                grid.push(x);
                x *= 1.02;
            }
            grid.push(end as f64);
        }
    }
    grid
}

fn check_dominance(am: &AxisModel, errors: &mut Vec<ModelError>) {
    let pairs = [
        (&am.flows, Weighting::Flows, &am.packets, Weighting::Packets),
        (&am.packets, Weighting::Packets, &am.octets, Weighting::Octets),
    ];
    let grid = validation_grid(am);
    for (upper, uw, lower, lw) in pairs {
        for &x in &grid {
            let (cu, cl) = (upper.cdf(x), lower.cdf(x));
            if cu < cl - DOMINANCE_TOLERANCE {
                errors.push(ModelError::Dominance {
                    axis: am.axis,
                    upper: uw.as_str(),
                    lower: lw.as_str(),
                    x,
                    upper_cdf: cu,
                    lower_cdf: cl,
                });
                break;
            }
        }
    }
}

// ---- file format -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_packet_size: Option<f64>,
    axes: AxesDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    avg_flow_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    avg_flow_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    avg_packet_size: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxesDoc {
    length: AxisDoc,
    size: AxisDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisDoc {
    flows: MixtureDoc,
    packets: MixtureDoc,
    octets: MixtureDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureDoc {
    components: Vec<ComponentDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_min: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    kind: String,
    weight: f64,
    params: BTreeMap<String, f64>,
}

impl ModelDoc {
    fn from_model(m: &TrafficModel) -> Self {
        let mixture = |mx: &Mixture| MixtureDoc {
            domain_min: Some(mx.domain_min),
            components: mx
                .components
                .iter()
                .map(|c| {
                    let params: BTreeMap<String, f64> = match c.kind {
                        ComponentKind::Uniform { low, high } => {
                            [("low", low), ("high", high)].into_iter().map(|(k, v)| (k.to_string(), v)).collect()
                        }
                        ComponentKind::Lognormal { mu, sigma } => {
                            [("mu", mu), ("sigma", sigma)].into_iter().map(|(k, v)| (k.to_string(), v)).collect()
                        }
                        ComponentKind::GeneralizedPareto { shape, location, scale } => {
                            [("shape", shape), ("location", location), ("scale", scale)]
                                .into_iter()
                                .map(|(k, v)| (k.to_string(), v))
                                .collect()
                        }
                    };
                    ComponentDoc { kind: c.kind.name().to_string(), weight: c.weight, params }
                })
                .collect(),
        };
        let axis = |am: &AxisModel| AxisDoc {
            flows: mixture(&am.flows),
            packets: mixture(&am.packets),
            octets: mixture(&am.octets),
        };
        ModelDoc {
            name: m.name.clone(),
            max_packet_size: Some(m.max_packet_size as f64),
            axes: AxesDoc { length: axis(&m.length), size: axis(&m.size) },
            avg_flow_length: None,
            avg_flow_size: None,
            avg_packet_size: None,
        }
    }
}
