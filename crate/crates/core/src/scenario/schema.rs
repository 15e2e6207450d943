//! Scenario file format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::Mode;
use crate::space::Exponent;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub space: SpaceSpec,
    /// Named operators; `BTreeMap` keeps serialization order stable.
    pub operators: BTreeMap<String, OperatorSpec>,
    #[serde(default)]
    pub vectors: BTreeMap<String, VectorSpec>,
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Weights { weights: Vec<f64> },
    Uniform { uniform: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// A generator matrix given row by row.
    Generator { matrix: Vec<Vec<f64>> },
    /// A bilinear form, by its coefficient matrix or as a weighted graph Laplacian.
    Form {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeffs: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        graph: Option<GraphSpec>,
    },
    /// A nonnegative jump kernel `j(x, y)`.
    Jump { matrix: Vec<Vec<f64>> },
    /// `tau0 + tau_j` for a declared form and jump kernel.
    Perturbed { form: String, jump: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// `[a, b, conductance]` triples.
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Values(Vec<f64>),
    JumpProfile { jump_profile: String },
}

/// The comparison `T` versus `S` shared by the estimate checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSpec {
    /// Operator generating the reference semigroup `S`.
    pub s: String,
    /// Operator generating the compared semigroup `T`.
    pub t: String,
    pub f: String,
    /// Defaults to the constant one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gprime: Option<String>,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Defaults to 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Exponent>,
    /// Defaults to 2 in pairing mode and 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Exponent>,
}

fn default_mode() -> Mode {
    Mode::Pairing
}

fn default_quad_steps() -> usize {
    crate::estimates::DEFAULT_QUAD_STEPS
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: CheckKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckKind {
    Generator {
        #[serde(flatten)]
        estimate: EstimateSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    MinimalC {
        #[serde(flatten)]
        estimate: EstimateSpec,
    },
    Resolvent {
        #[serde(flatten)]
        estimate: EstimateSpec,
        /// Empty: default grid.
        #[serde(default)]
        lambdas: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    Semigroup {
        #[serde(flatten)]
        estimate: EstimateSpec,
        times: Vec<f64>,
        #[serde(default = "default_quad_steps")]
        quad_steps: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    Strong {
        #[serde(flatten)]
        estimate: EstimateSpec,
        times: Vec<f64>,
        #[serde(default)]
        lambdas: Vec<f64>,
        #[serde(default = "default_quad_steps")]
        quad_steps: usize,
    },
    Expansion {
        #[serde(flatten)]
        estimate: EstimateSpec,
        lambda: f64,
        order: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    EulerSemigroup {
        #[serde(flatten)]
        estimate: EstimateSpec,
        time: f64,
        steps: usize,
    },
    KernelEstimate {
        #[serde(flatten)]
        estimate: EstimateSpec,
        times: Vec<f64>,
        #[serde(default = "default_quad_steps")]
        quad_steps: usize,
    },
    JumpKernelTheorem {
        form: String,
        jump: String,
        times: Vec<f64>,
        #[serde(default = "default_quad_steps")]
        quad_steps: usize,
        #[serde(default = "default_one")]
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    JumpGeneratorBound {
        s: String,
        t: String,
        jump: String,
    },
    Positivity {
        operator: String,
    },
    GrowthBound {
        operator: String,
        q: Exponent,
    },
    Accretivity {
        form: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    OuhabazPositivity {
        form: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    OuhabazLinf {
        form: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    OuhabazL1 {
        form: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Generator { .. } => "generator",
            CheckKind::MinimalC { .. } => "minimal_c",
            CheckKind::Resolvent { .. } => "resolvent",
            CheckKind::Semigroup { .. } => "semigroup",
            CheckKind::Strong { .. } => "strong",
            CheckKind::Expansion { .. } => "expansion",
            CheckKind::EulerSemigroup { .. } => "euler_semigroup",
            CheckKind::KernelEstimate { .. } => "kernel_estimate",
            CheckKind::JumpKernelTheorem { .. } => "jump_kernel_theorem",
            CheckKind::JumpGeneratorBound { .. } => "jump_generator_bound",
            CheckKind::Positivity { .. } => "positivity",
            CheckKind::GrowthBound { .. } => "growth_bound",
            CheckKind::Accretivity { .. } => "accretivity",
            CheckKind::OuhabazPositivity { .. } => "ouhabaz_positivity",
            CheckKind::OuhabazLinf { .. } => "ouhabaz_linf",
            CheckKind::OuhabazL1 { .. } => "ouhabaz_l1",
        }
    }

    pub fn estimate(&self) -> Option<&EstimateSpec> {
        match self {
            CheckKind::Generator { estimate, .. }
            | CheckKind::MinimalC { estimate }
            | CheckKind::Resolvent { estimate, .. }
            | CheckKind::Semigroup { estimate, .. }
            | CheckKind::Strong { estimate, .. }
            | CheckKind::Expansion { estimate, .. }
            | CheckKind::EulerSemigroup { estimate, .. }
            | CheckKind::KernelEstimate { estimate, .. } => Some(estimate),
            _ => None,
        }
    }

    pub fn estimate_mut(&mut self) -> Option<&mut EstimateSpec> {
        match self {
            CheckKind::Generator { estimate, .. }
            | CheckKind::MinimalC { estimate }
            | CheckKind::Resolvent { estimate, .. }
            | CheckKind::Semigroup { estimate, .. }
            | CheckKind::Strong { estimate, .. }
            | CheckKind::Expansion { estimate, .. }
            | CheckKind::EulerSemigroup { estimate, .. }
            | CheckKind::KernelEstimate { estimate, .. } => Some(estimate),
            _ => None,
        }
    }

    /// Whether this check draws random test vectors.
    pub fn uses_sampling(&self) -> bool {
        match self {
            CheckKind::Accretivity { .. }
            | CheckKind::OuhabazPositivity { .. }
            | CheckKind::OuhabazLinf { .. }
            | CheckKind::OuhabazL1 { .. }
            | CheckKind::JumpKernelTheorem { .. } => true,
            CheckKind::Generator { estimate, .. }
            | CheckKind::Resolvent { estimate, .. }
            | CheckKind::Semigroup { estimate, .. }
            | CheckKind::Expansion { estimate, .. } => estimate.mode != Mode::Pairing && !resolved_q(estimate).is_one(),
            _ => false,
        }
    }

    /// Operator names referenced by this check.
    pub fn operator_refs(&self) -> Vec<(&'static str, &str)> {
        if let Some(e) = self.estimate() {
            return vec![("s", e.s.as_str()), ("t", e.t.as_str())];
        }
        match self {
            CheckKind::JumpKernelTheorem { form, jump, .. } => vec![("form", form.as_str()), ("jump", jump.as_str())],
            CheckKind::JumpGeneratorBound { s, t, jump } => {
                vec![("s", s.as_str()), ("t", t.as_str()), ("jump", jump.as_str())]
            }
            CheckKind::Positivity { operator } | CheckKind::GrowthBound { operator, .. } => {
                vec![("operator", operator.as_str())]
            }
            CheckKind::Accretivity { form, .. }
            | CheckKind::OuhabazPositivity { form, .. }
            | CheckKind::OuhabazLinf { form, .. }
            | CheckKind::OuhabazL1 { form, .. } => vec![("form", form.as_str())],
            _ => Vec::new(),
        }
    }
}

pub(crate) fn resolved_p(e: &EstimateSpec) -> Exponent {
    e.p.unwrap_or(Exponent::TWO)
}

pub(crate) fn resolved_q(e: &EstimateSpec) -> Exponent {
    e.q.unwrap_or(if e.mode == Mode::Pairing { Exponent::TWO } else { Exponent::ONE })
}

/// Parses a scenario, reporting the JSON path and position of the first error.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let mut de = serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let (line, column) = (inner.line(), inner.column());
        let text = inner.to_string();
        let text = text.strip_suffix(&format!(" at line {line} column {column}")).unwrap_or(&text).to_string();
        Error::Parse {
            path: origin.to_string(),
            line,
            column,
            message: if path == "." { text } else { format!("at `{path}`: {text}") },
        }
    })?;
    de.end().map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(&scenario, origin)?;
    Ok(scenario)
}

fn invalid(origin: &str, field: String, message: impl Into<String>) -> Error {
    Error::Validation { path: origin.to_string(), field, message: message.into() }
}

/// Structural checks that do not need any numerics.
pub fn validate(s: &Scenario, origin: &str) -> Result<()> {
    if s.schema_version != SCHEMA_VERSION {
        return Err(invalid(
            origin,
            "schema_version".into(),
            format!("unsupported version {}, expected {SCHEMA_VERSION}", s.schema_version),
        ));
    }
    let n = match &s.space {
        SpaceSpec::Weights { weights } => weights.len(),
        SpaceSpec::Uniform { uniform } => *uniform,
    };
    if n == 0 {
        return Err(invalid(origin, "space".into(), "the space must contain at least one atom"));
    }
    let square = |field: String, m: &Vec<Vec<f64>>| -> Result<()> {
        if m.len() != n || m.iter().any(|row| row.len() != n) {
            return Err(invalid(origin, field, format!("expected a {n}x{n} matrix")));
        }
        Ok(())
    };
    for (name, op) in &s.operators {
        let field = format!("operators.{name}");
        match op {
            OperatorSpec::Generator { matrix } | OperatorSpec::Jump { matrix } => square(format!("{field}.matrix"), matrix)?,
            OperatorSpec::Form { coeffs, graph } => match (coeffs, graph) {
                (Some(c), None) => square(format!("{field}.coeffs"), c)?,
                (None, Some(g)) => {
                    if let Some((k, _)) = g.edges.iter().enumerate().find(|(_, e)| e.0 >= n || e.1 >= n) {
                        return Err(invalid(origin, format!("{field}.graph.edges[{k}]"), "vertex out of range"));
                    }
                }
                _ => return Err(invalid(origin, field, "a form needs exactly one of `coeffs` and `graph`")),
            },
            OperatorSpec::Perturbed { form, jump } => {
                match s.operators.get(form) {
                    Some(OperatorSpec::Form { .. }) => {}
                    _ => return Err(invalid(origin, format!("{field}.form"), format!("`{form}` is not a declared form"))),
                }
                match s.operators.get(jump) {
                    Some(OperatorSpec::Jump { .. }) => {}
                    _ => return Err(invalid(origin, format!("{field}.jump"), format!("`{jump}` is not a declared jump kernel"))),
                }
            }
        }
    }
    for (name, v) in &s.vectors {
        let field = format!("vectors.{name}");
        match v {
            VectorSpec::Values(values) if values.len() != n => {
                return Err(invalid(origin, field, format!("expected {n} entries, found {}", values.len())));
            }
            VectorSpec::JumpProfile { jump_profile } => match s.operators.get(jump_profile) {
                Some(OperatorSpec::Jump { .. }) => {}
                _ => return Err(invalid(origin, field, format!("`{jump_profile}` is not a declared jump kernel"))),
            },
            _ => {}
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for (k, check) in s.checks.iter().enumerate() {
        let prefix = format!("checks[{k}]");
        if !seen.insert(check.id.as_str()) {
            return Err(invalid(origin, format!("{prefix}.id"), format!("duplicate check id `{}`", check.id)));
        }
        for (field, name) in check.kind.operator_refs() {
            if !s.operators.contains_key(name) {
                return Err(invalid(origin, format!("{prefix}.{field}"), format!("unknown operator `{name}`")));
            }
        }
        if let Some(e) = check.kind.estimate() {
            for (field, name) in [("f", Some(&e.f)), ("gprime", e.gprime.as_ref())] {
                if let Some(name) = name {
                    if !s.vectors.contains_key(name) {
                        return Err(invalid(origin, format!("{prefix}.{field}"), format!("unknown vector `{name}`")));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Every sampling check needs a seed, from the scenario or the command line.
pub fn check_seed(s: &Scenario, seed: Option<u64>, origin: &str) -> Result<()> {
    if seed.is_some() {
        return Ok(());
    }
    match s.checks.iter().position(|c| c.kind.uses_sampling()) {
        Some(k) => Err(invalid(
            origin,
            format!("checks[{k}]"),
            "this check samples random vectors; the scenario needs a `seed`",
        )),
        None => Ok(()),
    }
}
