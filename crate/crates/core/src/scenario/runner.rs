//! Executes scenario checks and assembles the run report.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use super::schema::{check_seed, validate, resolved_p, resolved_q, CheckKind, CheckSpec, EstimateSpec, OperatorSpec, Scenario, SpaceSpec, VectorSpec, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::estimates::{
    check_generator_condition, check_resolvent_condition, check_semigroup_condition, check_strong_condition,
    euler_semigroup_condition, minimal_c, resolvent_iteration_expansion, EstimateInstance, MinimalC, DEFAULT_SAMPLES,
};
use crate::forms::{
    accretivity_check, assemble_jump_form, associated_generator, jump_generator_bound, jump_profiles,
    ouhabaz_l1_contractive, ouhabaz_linf_contractive, ouhabaz_positivity, perturbed_form, BilinearForm,
    CriterionReport, JumpKernel, ScanConfig,
};
use crate::kernels::{check_jump_kernel_theorem, check_kernel_estimate};
use crate::operator::{growth_bound, positivity_check, Generator};
use crate::random::derive_seed;
use crate::space::{Exponent, LpElement, MeasureSpace};
use crate::verdict::{SiteMargin, Status, Verdict};

/// Number of failing sites listed per check in the report.
const LISTED_VIOLATIONS: usize = 10;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
    /// Inconclusive verdicts count as failures.
    pub strict: bool,
    /// Multiplies every declared jump kernel.
    pub jump_scale: Option<f64>,
    /// Replaces `c` in every estimate check.
    pub c_override: Option<f64>,
    /// Runs only the check with this id.
    pub only: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub id: String,
    pub kind: String,
    /// `holds`, `inconclusive`, `fails` or `error`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub checks: usize,
    pub holds: usize,
    pub inconclusive: usize,
    pub fails: usize,
    pub errors: usize,
}

/// Deterministic given the scenario and seed: no timings, no paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub strict: bool,
    pub checks: Vec<CheckReport>,
    pub summary: Summary,
    pub passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Report plus the full per-site data and timings of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub verdicts: Vec<(String, Option<Verdict>)>,
    pub timings: Vec<Duration>,
}

impl RunOutcome {
    /// Exit status: 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            1
        }
    }

    pub fn text_summary(&self) -> String {
        let mut out = String::new();
        for (c, d) in self.report.checks.iter().zip(&self.timings) {
            let detail = match (&c.error, &c.result) {
                (Some(e), _) => e.clone(),
                (None, Some(r)) => match (r.get("worst_margin"), r.get("worst_site")) {
                    (Some(m), Some(s)) => format!("worst margin {m} at {s}"),
                    _ => String::new(),
                },
                _ => String::new(),
            };
            out.push_str(&format!(
                "{:<13} {:<24} {:<20} {:>8.3}s  {}\n",
                c.status,
                c.id,
                c.kind,
                d.as_secs_f64(),
                detail
            ));
        }
        let s = &self.report.summary;
        out.push_str(&format!(
            "{} checks: {} hold, {} inconclusive, {} fail, {} errors\n",
            s.checks, s.holds, s.inconclusive, s.fails, s.errors
        ));
        out
    }
}

/// Per-site CSV: `u,v,lambda,t,sample,lhs,rhs,margin,band`.
pub fn verdict_csv(v: &Verdict) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("u,v,lambda,t,sample,lhs,rhs,margin,band\n");
    for d in &v.details {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            d.site.u,
            d.site.v,
            opt(d.site.lambda),
            opt(d.site.t),
            d.site.sample.map(|s| s.to_string()).unwrap_or_default(),
            d.lhs,
            d.rhs,
            d.margin,
            d.band
        ));
    }
    out
}

#[derive(Debug, Clone)]
enum Built {
    Generator(Generator),
    Form(BilinearForm),
    Jump(JumpKernel),
}

/// Numerical objects of a scenario.
pub struct Workspace {
    space: MeasureSpace,
    operators: BTreeMap<String, Built>,
    vectors: BTreeMap<String, VectorSpec>,
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, rows.first().map_or(0, Vec::len), |i, j| rows[i][j])
}

impl Workspace {
    pub fn build(s: &Scenario, jump_scale: Option<f64>) -> Result<Self> {
        let space = match &s.space {
            SpaceSpec::Weights { weights } => MeasureSpace::new(weights.clone())?,
            SpaceSpec::Uniform { uniform } => MeasureSpace::uniform(*uniform)?,
        };
        let mut operators = BTreeMap::new();
        for (name, op) in &s.operators {
            let built = match op {
                OperatorSpec::Generator { matrix: m } => Built::Generator(Generator::new(&space, matrix(m))?),
                OperatorSpec::Form { coeffs: Some(c), .. } => Built::Form(BilinearForm::new(&space, matrix(c))?),
                OperatorSpec::Form { graph: Some(g), .. } => Built::Form(BilinearForm::graph_laplacian(&space, &g.edges)?),
                OperatorSpec::Form { .. } => unreachable!("validated"),
                OperatorSpec::Jump { matrix: m } => {
                    let j = JumpKernel::new(&space, matrix(m))?;
                    Built::Jump(match jump_scale {
                        Some(k) => j.scaled(k)?,
                        None => j,
                    })
                }
                OperatorSpec::Perturbed { .. } => continue,
            };
            operators.insert(name.clone(), built);
        }
        for (name, op) in &s.operators {
            if let OperatorSpec::Perturbed { form, jump } = op {
                let (Some(Built::Form(tau0)), Some(Built::Jump(j))) = (operators.get(form), operators.get(jump)) else {
                    unreachable!("validated")
                };
                let form = perturbed_form(tau0, j)?;
                operators.insert(name.clone(), Built::Form(form));
            }
        }
        Ok(Self { space, operators, vectors: s.vectors.clone() })
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    fn op(&self, name: &str) -> Result<&Built> {
        self.operators.get(name).ok_or_else(|| Error::InvalidArgument(format!("unknown operator `{name}`")))
    }

    /// The generator of a declared operator (forms and jump kernels via `G = -D^{-1} K`).
    pub fn generator(&self, name: &str) -> Result<Generator> {
        Ok(match self.op(name)? {
            Built::Generator(g) => g.clone(),
            Built::Form(f) => associated_generator(f),
            Built::Jump(j) => associated_generator(&assemble_jump_form(j)),
        })
    }

    pub fn form(&self, name: &str) -> Result<BilinearForm> {
        match self.op(name)? {
            Built::Form(f) => Ok(f.clone()),
            Built::Jump(j) => Ok(assemble_jump_form(j)),
            Built::Generator(_) => Err(Error::InvalidArgument(format!("operator `{name}` is a generator, expected a form"))),
        }
    }

    pub fn jump(&self, name: &str) -> Result<JumpKernel> {
        match self.op(name)? {
            Built::Jump(j) => Ok(j.clone()),
            _ => Err(Error::InvalidArgument(format!("operator `{name}` is not a jump kernel"))),
        }
    }

    pub fn vector(&self, name: &str, exponent: Exponent) -> Result<LpElement> {
        match self.vectors.get(name) {
            Some(VectorSpec::Values(v)) => LpElement::from_slice(&self.space, v, exponent),
            Some(VectorSpec::JumpProfile { jump_profile }) => {
                let f = jump_profiles(&self.jump(jump_profile)?).f_j;
                LpElement::new(&self.space, f.into_values(), exponent)
            }
            None => Err(Error::InvalidArgument(format!("unknown vector `{name}`"))),
        }
    }

    pub fn instance(&self, e: &EstimateSpec, c_override: Option<f64>) -> Result<EstimateInstance> {
        let (p, q) = (resolved_p(e), resolved_q(e));
        let f = self.vector(&e.f, p)?;
        let gprime = match &e.gprime {
            Some(name) => self.vector(name, q.dual())?,
            None => LpElement::ones(&self.space, q.dual()),
        };
        EstimateInstance::new(
            self.generator(&e.s)?,
            self.generator(&e.t)?,
            f,
            gprime,
            c_override.unwrap_or(e.c),
            p,
            q,
            e.mode,
        )
    }
}

struct CheckOutcome {
    status: Status,
    result: Value,
    verdict: Option<Verdict>,
}

fn verdict_value(v: &Verdict) -> Value {
    let violations: Vec<&SiteMargin> = v.sites_with_status(Status::Fails).take(LISTED_VIOLATIONS).collect();
    json!({
        "status": v.status,
        "holds": v.holds,
        "exactness": v.exactness,
        "worst_margin": v.worst_margin,
        "worst_site": v.worst_site,
        "tolerance": v.tolerance,
        "sites": v.details.len(),
        "failing_sites": v.sites_with_status(Status::Fails).count(),
        "inconclusive_sites": v.sites_with_status(Status::Inconclusive).count(),
        "violations": violations,
    })
}

fn from_verdict(v: Verdict) -> CheckOutcome {
    CheckOutcome { status: v.status, result: verdict_value(&v), verdict: Some(v) }
}

fn criterion_outcome(r: CriterionReport) -> CheckOutcome {
    let status = Status::from_bool(r.holds);
    CheckOutcome { status, result: serde_json::to_value(&r).expect("serializes"), verdict: None }
}

fn scan(samples: Option<usize>, seed: u64) -> ScanConfig {
    ScanConfig::new(samples.unwrap_or(DEFAULT_SAMPLES), seed)
}

fn run_check(ws: &Workspace, check: &CheckSpec, seed: u64, opts: &RunOptions) -> Result<CheckOutcome> {
    let inst = |e: &EstimateSpec| ws.instance(e, opts.c_override);
    Ok(match &check.kind {
        CheckKind::Generator { estimate, samples } => {
            from_verdict(check_generator_condition(&inst(estimate)?, Some(scan(*samples, seed)))?)
        }
        CheckKind::MinimalC { estimate } => {
            let r = minimal_c(&inst(estimate)?)?;
            let status = Status::from_bool(matches!(r, MinimalC::Feasible { .. }));
            CheckOutcome { status, result: serde_json::to_value(&r).expect("serializes"), verdict: None }
        }
        CheckKind::Resolvent { estimate, lambdas, samples } => {
            from_verdict(check_resolvent_condition(&inst(estimate)?, lambdas, Some(scan(*samples, seed)))?)
        }
        CheckKind::Semigroup { estimate, times, quad_steps, samples } => from_verdict(check_semigroup_condition(
            &inst(estimate)?,
            times,
            *quad_steps,
            Some(scan(*samples, seed)),
        )?),
        CheckKind::Strong { estimate, times, lambdas, quad_steps } => {
            from_verdict(check_strong_condition(&inst(estimate)?, times, lambdas, *quad_steps)?)
        }
        CheckKind::Expansion { estimate, lambda, order, samples } => from_verdict(resolvent_iteration_expansion(
            &inst(estimate)?,
            *lambda,
            *order,
            Some(scan(*samples, seed)),
        )?),
        CheckKind::EulerSemigroup { estimate, time, steps } => {
            from_verdict(euler_semigroup_condition(&inst(estimate)?, *time, *steps)?)
        }
        CheckKind::KernelEstimate { estimate, times, quad_steps } => {
            let i = inst(estimate)?;
            let parts = times
                .iter()
                .map(|&t| check_kernel_estimate(&i.g_s, &i.g_t, &i.f, &i.gprime, i.c, t, *quad_steps))
                .collect::<Result<Vec<_>>>()?;
            if parts.is_empty() {
                return Err(Error::InvalidArgument("time grid is empty".into()));
            }
            from_verdict(Verdict::combine(parts))
        }
        CheckKind::JumpKernelTheorem { form, jump, times, quad_steps, c, samples } => {
            let c = opts.c_override.unwrap_or(*c);
            let r = check_jump_kernel_theorem(&ws.form(form)?, &ws.jump(jump)?, times, *quad_steps, c, scan(*samples, seed))?;
            let mut result = verdict_value(&r.verdict);
            result["c"] = json!(r.c);
            result["omega"] = json!(r.omega);
            result["per_time"] = serde_json::to_value(&r.per_time).expect("serializes");
            CheckOutcome { status: r.verdict.status, result, verdict: Some(r.verdict) }
        }
        CheckKind::JumpGeneratorBound { s, t, jump } => {
            from_verdict(jump_generator_bound(&ws.generator(s)?, &ws.generator(t)?, &ws.jump(jump)?)?)
        }
        CheckKind::Positivity { operator } => {
            let r = positivity_check(&ws.generator(operator)?);
            CheckOutcome {
                status: Status::from_bool(r.is_metzler),
                result: serde_json::to_value(&r).expect("serializes"),
                verdict: None,
            }
        }
        CheckKind::GrowthBound { operator, q } => {
            let r = growth_bound(&ws.generator(operator)?, *q)?;
            CheckOutcome { status: Status::Holds, result: serde_json::to_value(r).expect("serializes"), verdict: None }
        }
        CheckKind::Accretivity { form, samples } => {
            let r = accretivity_check(&ws.form(form)?, scan(*samples, seed));
            CheckOutcome {
                status: Status::from_bool(r.accretive),
                result: serde_json::to_value(&r).expect("serializes"),
                verdict: None,
            }
        }
        CheckKind::OuhabazPositivity { form, samples } => {
            criterion_outcome(ouhabaz_positivity(&ws.form(form)?, scan(*samples, seed)))
        }
        CheckKind::OuhabazLinf { form, samples } => {
            criterion_outcome(ouhabaz_linf_contractive(&ws.form(form)?, scan(*samples, seed)))
        }
        CheckKind::OuhabazL1 { form, samples } => {
            criterion_outcome(ouhabaz_l1_contractive(&ws.form(form)?, scan(*samples, seed)))
        }
    })
}

/// Runs the checks in declaration order. Check-level failures (including
/// violated preconditions) are recorded in the report; only scenario-level
/// problems are returned as errors.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    let origin = s.name.as_deref().unwrap_or("scenario");
    validate(s, origin)?;
    let seed = opts.seed.or(s.seed);
    check_seed(s, seed, origin)?;
    let ws = Workspace::build(s, opts.jump_scale)?;
    let mut checks = Vec::new();
    let mut verdicts = Vec::new();
    let mut timings = Vec::new();
    let mut summary = Summary::default();
    let selected: Vec<&CheckSpec> = s.checks.iter().filter(|c| opts.only.as_ref().is_none_or(|id| &c.id == id)).collect();
    if let Some(id) = &opts.only {
        if selected.is_empty() {
            return Err(Error::InvalidArgument(format!("no check with id `{id}`")));
        }
    }
    for check in selected {
        let check_seed = seed.map(|root| derive_seed(root, &check.id));
        let started = Instant::now();
        let outcome = run_check(&ws, check, check_seed.unwrap_or(0), opts);
        timings.push(started.elapsed());
        summary.checks += 1;
        let report = match outcome {
            Ok(o) => {
                match o.status {
                    Status::Holds => summary.holds += 1,
                    Status::Inconclusive => summary.inconclusive += 1,
                    Status::Fails => summary.fails += 1,
                }
                verdicts.push((check.id.clone(), o.verdict));
                CheckReport {
                    id: check.id.clone(),
                    kind: check.kind.name().into(),
                    status: o.status.as_str().into(),
                    seed: check_seed.filter(|_| check.kind.uses_sampling()),
                    result: Some(o.result),
                    error: None,
                }
            }
            Err(e) => {
                summary.errors += 1;
                verdicts.push((check.id.clone(), None));
                CheckReport {
                    id: check.id.clone(),
                    kind: check.kind.name().into(),
                    status: "error".into(),
                    seed: check_seed.filter(|_| check.kind.uses_sampling()),
                    result: None,
                    error: Some(e.to_string()),
                }
            }
        };
        checks.push(report);
    }
    let passed = summary.fails == 0 && summary.errors == 0 && (!opts.strict || summary.inconclusive == 0);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool: "possg".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: s.name.clone(),
        seed,
        strict: opts.strict,
        checks,
        summary,
        passed,
    };
    Ok(RunOutcome { report, verdicts, timings })
}
