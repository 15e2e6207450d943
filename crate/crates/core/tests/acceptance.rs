//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use possg::convolution::{
    convergence_study, discrete_convolution_sum, family_limit_integral, linear_family, constant_family,
    resolvent_pairing_family, scaling_law_deviation, Side, SCALING_TOL,
};
use possg::estimates::{
    check_generator_condition, check_resolvent_condition, check_semigroup_condition, minimal_c, EstimateInstance,
    MinimalC, MARGIN_TOL,
};
use possg::forms::{
    associated_generator, ouhabaz_l1_contractive, ouhabaz_linf_contractive, ouhabaz_positivity, perturbed_form,
    BilinearForm, JumpKernel, ScanConfig,
};
use possg::kernels::{check_jump_kernel_theorem, extract_kernel};
use possg::operator::euler_error;
use possg::random::{generate_jump_instance, random_jump, random_metzler, random_metzler_pair, random_space, rng_for, GraphShape, RandomInstance};
use possg::scenario::{load_scenario, run_scenario, RunOptions};
use possg::{dual_pairing, lp_norm, positivity_check, weighted_adjoint, Exponent, Generator, LpElement, MeasureSpace, Status};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const EQUIVALENCE_BUDGET: Duration = Duration::from_secs(30);
const JUMP_BUDGET: Duration = Duration::from_secs(60);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metzler_pairs() -> Vec<(u64, EstimateInstance, MinimalC)> {
    (0..50u64)
        .map(|seed| {
            let n = [2, 5, 10][seed as usize % 3];
            let mut rng = rng_for(seed, "acceptance-metzler");
            let space = random_space(&mut rng, n);
            let RandomInstance::Metzler { g_s, g_t, f, gprime } = random_metzler_pair(&mut rng, &space) else {
                unreachable!()
            };
            let inst = EstimateInstance::pairing(g_s, g_t, f, gprime, 0.0).unwrap();
            let c = minimal_c(&inst).unwrap();
            (seed, inst, c)
        })
        .collect()
}

fn equivalence_round_trip() -> Outcome {
    let start = Instant::now();
    let mut worst_resolvent = f64::INFINITY;
    let mut worst_semigroup = f64::INFINITY;
    for (seed, inst, c) in metzler_pairs() {
        let MinimalC::Feasible { c, .. } = c else {
            return Err(format!("seed {seed}: C* infeasible with strictly positive f, g'"));
        };
        let inst = inst.with_c(c);
        ensure(check_generator_condition(&inst, None).unwrap().holds, || format!("seed {seed}: generator check at C*"))?;
        let r = check_resolvent_condition(&inst, &[], None).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(r.worst_margin >= -MARGIN_TOL, || format!("seed {seed}: resolvent margin {}", r.worst_margin))?;
        let s = check_semigroup_condition(&inst, &[0.1, 0.5, 1.0, 2.0], 256, None).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(s.status != Status::Fails, || format!("seed {seed}: semigroup margin {} at {}", s.worst_margin, s.worst_site))?;
        worst_resolvent = worst_resolvent.min(r.worst_margin);
        worst_semigroup = worst_semigroup.min(s.worst_margin);
    }
    let elapsed = start.elapsed();
    ensure(elapsed <= EQUIVALENCE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "50 pairs, worst resolvent margin {worst_resolvent:.3e}, worst semigroup margin {worst_semigroup:.3e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn necessity() -> Outcome {
    let mut hits = Vec::new();
    for (seed, inst, c) in metzler_pairs() {
        let MinimalC::Feasible { c, site: Some(site) } = c else {
            return Err(format!("seed {seed}: no extremal pair"));
        };
        let inst = inst.with_c(0.9 * c);
        ensure(!check_generator_condition(&inst, None).unwrap().holds, || format!("seed {seed}: generator check holds at 0.9 C*"))?;
        let found = (1..=20).find(|&k| {
            let t = 0.5f64.powi(k);
            let v = check_semigroup_condition(&inst, &[t], 256, None).unwrap();
            v.details
                .iter()
                .any(|d| d.site.u == site.u && d.site.v == site.v && d.status(v.tolerance) == Status::Fails)
        });
        match found {
            Some(k) => hits.push(k),
            None => return Err(format!("seed {seed}: no violation at {site} for t = 2^-k, k <= 20")),
        }
    }
    Ok(format!(
        "violation found at the extremal pair in 50/50 instances (largest t = 2^-{}, smallest t = 2^-{})",
        hits.iter().min().unwrap(),
        hits.iter().max().unwrap()
    ))
}

fn two_by_two() -> (MeasureSpace, Generator, Generator) {
    let s = MeasureSpace::uniform(2).unwrap();
    let g_s = Generator::from_row_slice(&s, &[-1.0, 1.0, 1.0, -1.0]).unwrap();
    let g_t = Generator::from_row_slice(&s, &[-1.0, 1.5, 1.5, -1.0]).unwrap();
    (s, g_s, g_t)
}

fn convolution_lemma() -> Outcome {
    let lin = linear_family();
    let one = constant_family(1.0);
    let mut worst_closed = 0.0f64;
    for t in [0.5, 1.0, 3.0] {
        let exact = family_limit_integral(&lin, &one, t, 8).unwrap().value;
        for n in [2, 5, 10, 100, 1000, 10_000] {
            let sum = discrete_convolution_sum(&lin, &one, t, n).unwrap();
            let err = ((sum - exact) - t / (2.0 * (n as f64 - 1.0))).abs();
            worst_closed = worst_closed.max(err);
        }
    }
    ensure(worst_closed <= 1e-12, || format!("linear family deviates from t/(2(n-1)) by {worst_closed:e}"))?;

    let (s, g_s, g_t) = two_by_two();
    let e0 = LpElement::basis(&s, 0, Exponent::TWO);
    let e1 = LpElement::basis(&s, 1, Exponent::TWO);
    let ones = LpElement::ones(&s, Exponent::TWO);
    let phi = resolvent_pairing_family(&g_t, &e0, &ones, Side::Forward).unwrap();
    let psi = resolvent_pairing_family(&g_s, &e1, &e0, Side::Adjoint).unwrap();
    let n_list: Vec<usize> = (4..=12).map(|k| 1usize << k).collect();
    let table = convergence_study(&phi, &psi, 1.0, &n_list, 1 << 12).unwrap();
    ensure(table.monotone, || format!("errors not monotone: {:?}", table.rows.iter().map(|r| r.abs_error).collect::<Vec<_>>()))?;
    ensure(table.final_error() <= 1e-3, || format!("final error {:e}", table.final_error()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<(f64, usize, usize)> = (0..1000)
        .map(|_| {
            let n = rng.random_range(1..=64);
            (rng.random_range(0.0..2.0), n, rng.random_range(1..=2 * n))
        })
        .collect();
    let dev = scaling_law_deviation(&phi, &points).unwrap().max(scaling_law_deviation(&psi, &points).unwrap());
    ensure(dev <= SCALING_TOL, || format!("scaling law deviation {dev:e}"))?;
    Ok(format!(
        "closed-form deviation {worst_closed:.1e}; resolvent families final error {:.2e} (mean order {:.3}); scaling law {dev:.1e} over 1000 points",
        table.final_error(),
        table.mean_rate.unwrap_or(f64::NAN)
    ))
}

fn euler_formula() -> Outcome {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for seed in 0..5u64 {
        let mut rng = rng_for(seed, "acceptance-euler");
        let space = random_space(&mut rng, 5);
        let g = random_metzler(&mut rng, &space);
        let mut prev = euler_error(&g, 1.0, 64).unwrap();
        let mut n = 128;
        while n <= 4096 {
            let err = euler_error(&g, 1.0, n).unwrap();
            let ratio = err / prev;
            ensure((0.35..=0.65).contains(&ratio), || format!("seed {seed}: ratio {ratio} at n = {n}"))?;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            prev = err;
            n *= 2;
        }
    }
    Ok(format!("5 generators, halving ratios in [{lo:.4}, {hi:.4}]"))
}

fn jump_instances() -> Vec<(u64, BilinearForm, JumpKernel)> {
    let shapes = [GraphShape::Path, GraphShape::Cycle, GraphShape::Random];
    (0..20u64)
        .map(|seed| {
            let shape = shapes[seed as usize % 3];
            let n = [5, 10, 20][(seed as usize / 3) % 3];
            let RandomInstance::Jump { tau0, j } = generate_jump_instance(seed, n, shape).unwrap() else {
                unreachable!()
            };
            (seed, tau0, j)
        })
        .collect()
}

fn jump_kernel_theorem() -> Outcome {
    let start = Instant::now();
    let times = [0.1, 0.5, 1.0];
    let scan = ScanConfig::new(200, 17);
    let mut min_margin = f64::INFINITY;
    let mut max_c = 0.0f64;
    for (seed, tau0, j) in jump_instances() {
        let coarse = check_jump_kernel_theorem(&tau0, &j, &times, 256, 1.0, scan).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(coarse.verdict.status == Status::Holds, || {
            format!("seed {seed}: {} margin {} at {}", coarse.verdict.status, coarse.verdict.worst_margin, coarse.verdict.worst_site)
        })?;
        let fine = check_jump_kernel_theorem(&tau0, &j, &times, 1 << 12, 1.0, scan).unwrap();
        ensure(fine.verdict.holds, || format!("seed {seed}: refined oracle fails"))?;
        for (a, b) in coarse.verdict.details.iter().zip(&fine.verdict.details) {
            let allowed = 2.0 * a.band + 1e-12 * (1.0 + a.rhs.abs());
            ensure((a.rhs - b.rhs).abs() <= allowed, || {
                format!("seed {seed}: 256 vs 4096 panels differ by {:e} > {allowed:e} at {}", (a.rhs - b.rhs).abs(), a.site)
            })?;
        }
        min_margin = min_margin.min(coarse.verdict.worst_margin);
        for tm in &coarse.per_time {
            max_c = max_c.max(tm.empirical_c.unwrap_or(f64::INFINITY));
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed <= JUMP_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "20 instances hold with C = 1, min margin {min_margin:.3e}, largest empirical C {max_c:.4}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

/// Forms with sign-mixed off-diagonal coefficients, about half of them positive.
fn random_form(seed: u64) -> BilinearForm {
    let mut rng = rng_for(seed, "acceptance-forms");
    let n = rng.random_range(2..=8);
    let space = random_space(&mut rng, n);
    let p_bad = if seed.is_multiple_of(2) { 0.0 } else { 0.15 };
    let mut k = DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            0.0
        } else if rng.random_bool(p_bad) {
            rng.random_range(0.0..0.5)
        } else {
            -rng.random_range(0.0..1.0)
        }
    });
    for x in 0..n {
        let off: f64 = k.row(x).sum();
        k[(x, x)] = -off + rng.random_range(-0.2..0.5);
    }
    BilinearForm::new(&space, k).unwrap()
}

fn criteria_consistency() -> Outcome {
    let scan = ScanConfig::new(300, 23);
    let mut positive = 0;
    let mut contractive = 0;
    for seed in 0..100u64 {
        let form = random_form(seed);
        let crit = ouhabaz_positivity(&form, scan);
        let metzler = positivity_check(&associated_generator(&form)).is_metzler;
        ensure(crit.holds == metzler, || format!("seed {seed}: criterion {} vs Metzler {metzler}", crit.holds))?;
        ensure(!crit.disagreement, || format!("seed {seed}: matrix and scan verdicts disagree"))?;
        positive += usize::from(metzler);

        let mut rng = rng_for(seed, "acceptance-jump");
        let j = random_jump(&mut rng, form.space());
        let perturbed = perturbed_form(&form, &j).unwrap();
        for (name, before, after) in [
            ("L_inf", ouhabaz_linf_contractive(&form, scan).holds, ouhabaz_linf_contractive(&perturbed, scan).holds),
            ("L_1", ouhabaz_l1_contractive(&form, scan).holds, ouhabaz_l1_contractive(&perturbed, scan).holds),
        ] {
            ensure(!before || after, || format!("seed {seed}: {name} contractivity lost by adding a jump form"))?;
            contractive += usize::from(before);
        }
    }
    Ok(format!("100 forms ({positive} positive): exact agreement; {contractive} contractive cases preserved"))
}

fn exact_identities() -> Outcome {
    let mut worst_adjoint = 0.0f64;
    let mut worst_ck = 0.0f64;
    let mut worst_stoch = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = rng_for(seed, "acceptance-identities");
        let n = rng.random_range(2..=10);
        let space = random_space(&mut rng, n);
        let g = random_metzler(&mut rng, &space);
        let u = LpElement::new(&space, DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)), Exponent::TWO).unwrap();
        let v = LpElement::new(&space, DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)), Exponent::TWO).unwrap();
        let gu = LpElement::new(&space, g.matrix() * u.values(), Exponent::TWO).unwrap();
        let gv = LpElement::new(&space, weighted_adjoint(&g).matrix() * v.values(), Exponent::TWO).unwrap();
        let (a, b) = (dual_pairing(&gu, &v).unwrap(), dual_pairing(&u, &gv).unwrap());
        worst_adjoint = worst_adjoint.max((a - b).abs() / a.abs().max(1.0));

        let (s, t) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let ks = extract_kernel(&g, s).unwrap();
        let kt = extract_kernel(&g, t).unwrap();
        let kst = extract_kernel(&g, s + t).unwrap();
        let m = space.weights();
        for x in 0..n {
            for y in 0..n {
                let composed: f64 = (0..n).map(|w| kt.entry(x, w) * ks.entry(w, y) * m[w]).sum();
                worst_ck = worst_ck.max((composed - kst.entry(x, y)).abs() / kst.entry(x, y).abs().max(1e-300));
            }
        }
    }
    ensure(worst_adjoint <= 1e-12, || format!("adjoint identity off by {worst_adjoint:e}"))?;
    ensure(worst_ck <= 1e-9, || format!("Chapman-Kolmogorov off by {worst_ck:e}"))?;

    for (seed, tau0, j) in jump_instances() {
        let g_t = associated_generator(&perturbed_form(&tau0, &j).unwrap());
        for t in [0.1, 1.0] {
            let k = extract_kernel(&g_t, t).unwrap();
            let m = DVector::from_column_slice(tau0.space().weights());
            let mass = k.values() * m;
            let dev = mass.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
            ensure(dev <= 1e-9, || format!("seed {seed}: row mass off by {dev:e}"))?;
            worst_stoch = worst_stoch.max(dev);
        }
    }

    let mut worst_holder = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        let space = random_space(&mut rng, n);
        let p = match rng.random_range(0..4) {
            0 => Exponent::ONE,
            1 => Exponent::Infinity,
            _ => Exponent::new(rng.random_range(1.01..6.0)).unwrap(),
        };
        let f = LpElement::new(&space, DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)), p).unwrap();
        let g = LpElement::new(&space, DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)), p.dual()).unwrap();
        let lhs = dual_pairing(&f, &g).unwrap().abs();
        let rhs = lp_norm(&f, p) * lp_norm(&g, p.dual());
        worst_holder = worst_holder.max(lhs - rhs * (1.0 + 1e-12));
        ensure(lhs <= rhs * (1.0 + 1e-12), || format!("Hoelder violated: {lhs} > {rhs}"))?;
    }
    Ok(format!(
        "adjoint {worst_adjoint:.1e}, Chapman-Kolmogorov {worst_ck:.1e}, stochasticity {worst_stoch:.1e}, Hoelder slack {:.1e}",
        -worst_holder
    ))
}

fn bundled_scenarios() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
}

fn determinism() -> Outcome {
    let paths = bundled_scenarios();
    ensure(!paths.is_empty(), || "no bundled scenarios".into())?;
    let tmp = tempfile::tempdir().unwrap();
    for path in &paths {
        let s = load_scenario(path).map_err(|e| e.to_string())?;
        let a = run_scenario(&s, &RunOptions::default()).unwrap().report.to_json();
        let b = run_scenario(&s, &RunOptions::default()).unwrap().report.to_json();
        ensure(a == b, || format!("{}: library reports differ", path.display()))?;

        let mut files = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{}-{run}", path.file_stem().unwrap().to_string_lossy()));
            Command::new(env!("CARGO_BIN_EXE_possg"))
                .args(["verify", "--scenario"])
                .arg(path)
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap();
            files.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
        }
        ensure(files[0] == files[1], || format!("{}: CLI reports differ", path.display()))?;
        ensure(files[0] == a.as_bytes(), || format!("{}: CLI and library reports differ", path.display()))?;
    }
    Ok(format!("{} bundled scenarios, byte-identical reports across runs", paths.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("equivalence round-trip", equivalence_round_trip),
        ("necessity", necessity),
        ("convolution lemma", convolution_lemma),
        ("Euler formula", euler_formula),
        ("jump kernel theorem", jump_kernel_theorem),
        ("criteria consistency", criteria_consistency),
        ("exact identities", exact_identities),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
