use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::schema::{CheckKind, CheckSpec, EstimateSpec, OperatorSpec, Scenario, SpaceSpec, VectorSpec, SCHEMA_VERSION};
use crate::error::Result;
use crate::estimates::{minimal_c, EstimateInstance, Mode, DEFAULT_QUAD_STEPS};
use crate::random::RandomInstance;
use crate::space::Exponent;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn check(id: &str, kind: CheckKind) -> CheckSpec {
    CheckSpec { id: id.into(), kind }
}

fn estimate(c: f64) -> EstimateSpec {
    EstimateSpec {
        s: "S".into(),
        t: "T".into(),
        f: "f".into(),
        gprime: Some("g".into()),
        c,
        mode: Mode::Pairing,
        p: None,
        q: None,
    }
}

/// A runnable scenario around a random instance, with the checks that suit its profile.
pub fn scenario_from_instance(inst: &RandomInstance, name: &str, seed: u64) -> Result<Scenario> {
    let weights = inst.space().weights().to_vec();
    let mut operators = BTreeMap::new();
    let mut vectors = BTreeMap::new();
    let checks = match inst {
        RandomInstance::Laplacian { tau0 } => {
            operators.insert("tau0".into(), OperatorSpec::Form { coeffs: Some(rows(tau0.coeffs())), graph: None });
            let form = || "tau0".to_string();
            vec![
                check("accretive", CheckKind::Accretivity { form: form(), samples: None }),
                check("positive", CheckKind::OuhabazPositivity { form: form(), samples: None }),
                check("linf", CheckKind::OuhabazLinf { form: form(), samples: None }),
                check("l1", CheckKind::OuhabazL1 { form: form(), samples: None }),
                check("metzler", CheckKind::Positivity { operator: form() }),
            ]
        }
        RandomInstance::Metzler { g_s, g_t, f, gprime } => {
            operators.insert("S".into(), OperatorSpec::Generator { matrix: rows(g_s.matrix()) });
            operators.insert("T".into(), OperatorSpec::Generator { matrix: rows(g_t.matrix()) });
            vectors.insert("f".into(), VectorSpec::Values(f.values().iter().copied().collect()));
            vectors.insert("g".into(), VectorSpec::Values(gprime.values().iter().copied().collect()));
            let pairing = EstimateInstance::pairing(g_s.clone(), g_t.clone(), f.clone(), gprime.clone(), 0.0)?;
            let c = minimal_c(&pairing)?.value().unwrap_or(0.0);
            vec![
                check("minimal_c", CheckKind::MinimalC { estimate: estimate(0.0) }),
                check("generator", CheckKind::Generator { estimate: estimate(c), samples: None }),
                check("resolvent", CheckKind::Resolvent { estimate: estimate(c), lambdas: Vec::new(), samples: None }),
                check(
                    "semigroup",
                    CheckKind::Semigroup {
                        estimate: estimate(c),
                        times: vec![0.1, 0.5, 1.0, 2.0],
                        quad_steps: DEFAULT_QUAD_STEPS,
                        samples: None,
                    },
                ),
            ]
        }
        RandomInstance::Jump { tau0, j } => {
            operators.insert("tau0".into(), OperatorSpec::Form { coeffs: Some(rows(tau0.coeffs())), graph: None });
            operators.insert("J".into(), OperatorSpec::Jump { matrix: rows(j.matrix()) });
            operators.insert("T".into(), OperatorSpec::Perturbed { form: "tau0".into(), jump: "J".into() });
            vectors.insert("fj".into(), VectorSpec::JumpProfile { jump_profile: "J".into() });
            vec![
                check("positive", CheckKind::OuhabazPositivity { form: "tau0".into(), samples: None }),
                check(
                    "generator_bound",
                    CheckKind::JumpGeneratorBound { s: "tau0".into(), t: "T".into(), jump: "J".into() },
                ),
                check(
                    "strong",
                    CheckKind::Strong {
                        estimate: EstimateSpec {
                            s: "tau0".into(),
                            t: "T".into(),
                            f: "fj".into(),
                            gprime: None,
                            c: 1.0,
                            mode: Mode::Strong,
                            p: Some(Exponent::ONE),
                            q: Some(Exponent::ONE),
                        },
                        times: vec![0.1, 0.5, 1.0],
                        lambdas: Vec::new(),
                        quad_steps: DEFAULT_QUAD_STEPS,
                    },
                ),
                check(
                    "kernel_theorem",
                    CheckKind::JumpKernelTheorem {
                        form: "tau0".into(),
                        jump: "J".into(),
                        times: vec![0.1, 0.5, 1.0],
                        quad_steps: DEFAULT_QUAD_STEPS,
                        c: 1.0,
                        samples: None,
                    },
                ),
            ]
        }
    };
    Ok(Scenario {
        schema_version: SCHEMA_VERSION,
        name: Some(name.into()),
        seed: Some(seed),
        space: SpaceSpec::Weights { weights },
        operators,
        vectors,
        checks,
    })
}
