//! Executable forms of the equivalent generator / resolvent / semigroup
//! conditions comparing two positive semigroups `S = exp(t G_S)` and
//! `T = exp(t G_T)`.
//!
//! In pairing mode every condition is bilinear in the test pair `(u, v')`,
//! so checking all basis pairs `(e_i, e_j)` is exact. The norm mode with
//! `q = 1` is exact for the same reason (`||u||_1 = <u, 1>` on the positive
//! cone); for `q > 1` the norm is only sublinear and the check falls back to
//! seeded random sampling.
//!
//! Sites are visited with `u` as the outer and `v'` as the inner index.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{ScanConfig, CRITERION_TOL};
use crate::operator::{
    growth_bound, orbit, positivity_check, row_orbit, weighted_adjoint, EulerStep, Generator, Resolvent,
    RESOLVENT_MARGIN,
};
use crate::quadrature::SimpsonRule;
use crate::space::{weighted_lp_norm, Exponent, LpElement, MeasureSpace};
use crate::verdict::{Exactness, Site, SiteMargin, Verdict};

/// Absolute tolerance on resolvent margins (after multiplying by `lambda^2`)
/// and on semigroup margins (on top of the quadrature band).
pub const MARGIN_TOL: f64 = 1e-9;

/// Default number of random test vectors for sampled checks.
pub const DEFAULT_SAMPLES: usize = 1000;

/// Default Simpson panel count.
pub const DEFAULT_QUAD_STEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Perturbation term `C <u, g'> <f, v'>`.
    Pairing,
    /// Perturbation term `C ||u||_q <f, v'>` with the growth bound of `T` on `L_q`.
    Norm,
    /// Entrywise vector inequalities (`q = 1`).
    Strong,
}

/// The data of one comparison `T` versus `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateInstance {
    pub g_s: Generator,
    pub g_t: Generator,
    pub f: LpElement,
    pub gprime: LpElement,
    pub c: f64,
    pub p: Exponent,
    pub q: Exponent,
    pub mode: Mode,
}

impl EstimateInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g_s: Generator,
        g_t: Generator,
        f: LpElement,
        gprime: LpElement,
        c: f64,
        p: Exponent,
        q: Exponent,
        mode: Mode,
    ) -> Result<Self> {
        let space = g_s.space();
        space.check_same(g_t.space())?;
        space.check_same(f.space())?;
        space.check_same(gprime.space())?;
        for v in [&f, &gprime] {
            if let Some((index, &value)) = v.values().iter().enumerate().find(|(_, x)| **x < 0.0) {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        for g in [&g_s, &g_t] {
            if let Some((row, col, value)) = positivity_check(g).violating_entry {
                return Err(Error::NotMetzler { row, col, value });
            }
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidArgument(format!("constant C must be finite and >= 0, got {c}")));
        }
        Ok(Self { g_s, g_t, f, gprime, c, p, q, mode })
    }

    pub fn pairing(g_s: Generator, g_t: Generator, f: LpElement, gprime: LpElement, c: f64) -> Result<Self> {
        let (p, q) = (f.exponent(), gprime.exponent().dual());
        Self::new(g_s, g_t, f, gprime, c, p, q, Mode::Pairing)
    }

    /// Norm-mode instance; `g'` is unused and set to the constant one.
    pub fn norm(g_s: Generator, g_t: Generator, f: LpElement, p: Exponent, q: Exponent, c: f64) -> Result<Self> {
        let gprime = LpElement::ones(g_s.space(), q.dual());
        Self::new(g_s, g_t, f, gprime, c, p, q, Mode::Norm)
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn space(&self) -> &MeasureSpace {
        self.g_s.space()
    }

    pub fn dim(&self) -> usize {
        self.g_s.dim()
    }

    fn scale(&self) -> f64 {
        self.g_s.scale().max(self.g_t.scale())
    }

    fn uses_norm(&self) -> bool {
        self.mode != Mode::Pairing
    }

    fn omega_t(&self) -> Result<f64> {
        Ok(growth_bound(&self.g_t, self.q)?.omega)
    }

    /// Largest of the growth bounds of `S` on `L_p` and `T` on `L_q`.
    pub fn omega_bar(&self) -> Result<f64> {
        Ok(growth_bound(&self.g_s, self.p)?.omega.max(self.omega_t()?))
    }

    fn weights(&self) -> &[f64] {
        self.space().weights()
    }

    /// `g' * m` and `f * m`, the row vectors implementing the pairings against `g'` and `f`.
    fn weighted_gprime(&self) -> DVector<f64> {
        self.gprime.values().component_mul(&self.space().weight_vector())
    }

    fn weighted_f(&self) -> DVector<f64> {
        self.f.values().component_mul(&self.space().weight_vector())
    }

    fn norm_of(&self, u: &DVector<f64>) -> f64 {
        weighted_lp_norm(self.weights(), u.as_slice(), self.q)
    }
}

/// Default grid `{b, 2b, 4b, 8b}` with `b = max(omega_bar + 2, 1)`.
pub fn default_lambda_grid(inst: &EstimateInstance) -> Result<Vec<f64>> {
    let base = (inst.omega_bar()? + 2.0).max(1.0);
    Ok(vec![base, 2.0 * base, 4.0 * base, 8.0 * base])
}

/// Test vectors `u`: all basis vectors, plus random draws when the condition
/// is not bilinear in `u`.
struct TestVectors {
    vectors: Vec<(Option<usize>, usize, DVector<f64>)>,
    exactness: Exactness,
}

impl TestVectors {
    fn for_instance(inst: &EstimateInstance, sampling: Option<ScanConfig>) -> Result<Self> {
        let n = inst.dim();
        let mut vectors: Vec<_> = (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                (None, i, e)
            })
            .collect();
        if !inst.uses_norm() || inst.q.is_one() {
            return Ok(Self { vectors, exactness: Exactness::Exact });
        }
        let scan = sampling.ok_or_else(|| {
            Error::Unsupported(format!(
                "norm mode with q = {} is not bilinear in u; supply a sample count and seed",
                inst.q
            ))
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
        for s in 0..scan.samples {
            let u = DVector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z.abs()
            });
            vectors.push((Some(s), 0, u));
        }
        Ok(Self { vectors, exactness: Exactness::Sampled })
    }

    fn site(sample: Option<usize>, i: usize, j: usize) -> Site {
        match sample {
            Some(s) => Site::pair(0, j).sampled(s),
            None => Site::pair(i, j),
        }
    }
}

/// Generator condition: `<G_T u, v'> <= <u, G_S^sigma v'> + C <u, g'> <f, v'>`
/// (pairing), resp. `+ C ||u||_q <f, v'>` (norm / strong).
///
/// On basis pairs this is `(G_T - G_S)_{ji} <= C g'_i m_i f_j` (pairing) and
/// `(G_T - G_S)_{ji} <= C ||e_i||_q f_j` (norm). Margins are `rhs - lhs` in
/// this entrywise form.
pub fn check_generator_condition(inst: &EstimateInstance, sampling: Option<ScanConfig>) -> Result<Verdict> {
    let tests = TestVectors::for_instance(inst, sampling)?;
    let delta = inst.g_t.matrix() - inst.g_s.matrix();
    let gm = inst.weighted_gprime();
    let f = inst.f.values();
    let n = inst.dim();
    let mut details = Vec::with_capacity(tests.vectors.len() * n);
    for (sample, i, u) in &tests.vectors {
        let du = &delta * u;
        let factor = if inst.uses_norm() { inst.norm_of(u) } else { gm.dot(u) };
        for j in 0..n {
            let lhs = du[j];
            let rhs = inst.c * factor * f[j];
            details.push(SiteMargin::new(TestVectors::site(*sample, *i, j), lhs, rhs));
        }
    }
    Ok(Verdict::from_details(details, CRITERION_TOL * inst.scale(), tests.exactness))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MinimalC {
    /// Smallest `C` making the generator condition hold; `site` attains it
    /// (absent when `G_T <= G_S` entrywise, i.e. `C = 0`).
    Feasible { c: f64, site: Option<Site> },
    /// A positive entry of `G_T - G_S` meets a zero denominator.
    Infeasible { site: Site, excess: f64 },
}

impl MinimalC {
    pub fn value(&self) -> Option<f64> {
        match self {
            MinimalC::Feasible { c, .. } => Some(*c),
            MinimalC::Infeasible { .. } => None,
        }
    }
}

/// `C* = max_(i,j) (G_T - G_S)_{ji}^+ / (g'_i m_i f_j)` (pairing) or
/// `/ (m_i f_j)` (norm, `q = 1`); `0/0 = 0`.
pub fn minimal_c(inst: &EstimateInstance) -> Result<MinimalC> {
    if inst.uses_norm() && !inst.q.is_one() {
        return Err(Error::Unsupported(format!("minimal C in norm mode needs q = 1, got q = {}", inst.q)));
    }
    let delta = inst.g_t.matrix() - inst.g_s.matrix();
    let m = inst.weights();
    let g = inst.gprime.values();
    let f = inst.f.values();
    let n = inst.dim();
    let mut best = 0.0;
    let mut best_site = None;
    for i in 0..n {
        let col_factor = if inst.uses_norm() { m[i] } else { g[i] * m[i] };
        for j in 0..n {
            let excess = delta[(j, i)].max(0.0);
            if excess == 0.0 {
                continue;
            }
            let denom = col_factor * f[j];
            if denom == 0.0 {
                return Ok(MinimalC::Infeasible { site: Site::pair(i, j), excess });
            }
            let ratio = excess / denom;
            if ratio > best {
                best = ratio;
                best_site = Some(Site::pair(i, j));
            }
        }
    }
    Ok(MinimalC::Feasible { c: best, site: best_site })
}

fn check_lambda(inst: &EstimateInstance, lambda: f64) -> Result<()> {
    let omega_bar = inst.omega_bar()?;
    if !(lambda.is_finite() && lambda > omega_bar + RESOLVENT_MARGIN) {
        return Err(Error::NotInResolventSet {
            lambda,
            reason: format!("lambda must exceed the growth bound {omega_bar} by more than {RESOLVENT_MARGIN}"),
        });
    }
    Ok(())
}

/// Repeated solves of `(lambda - G) X = X_prev` starting from `X_0 = I`:
/// returns `[(lambda - G)^{-1}, ..., (lambda - G)^{-count}]`.
fn resolvent_powers(r: &Resolvent, dim: usize, count: usize) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(count);
    let mut x = DMatrix::identity(dim, dim);
    for _ in 0..count {
        x = DMatrix::from_columns(&x.column_iter().map(|c| r.solve(&c.into_owned())).collect::<Vec<_>>());
        out.push(x.clone());
    }
    out
}

/// Sites of the `n`-fold resolvent inequality
/// `<R_T^n u, v'> <= <R_S^n u, v'> + C sum_l <R_T^{n+1-l} u, g'> <f, (R_S^sigma)^l v'>`
/// (norm mode: `<R_T^k u, g'>` becomes `(lambda - omega)^{-k} ||u||_q`).
/// Margins are multiplied by `lambda^2`.
fn expansion_details(
    inst: &EstimateInstance,
    lambda: f64,
    n: usize,
    tests: &TestVectors,
) -> Result<Vec<SiteMargin>> {
    check_lambda(inst, lambda)?;
    let dim = inst.dim();
    let m = inst.weights();
    let r_t = Resolvent::new(&inst.g_t, lambda)?;
    let r_s = Resolvent::new(&inst.g_s, lambda)?;
    let r_s_adj = Resolvent::new(&weighted_adjoint(&inst.g_s), lambda)?;
    let t_pows = resolvent_powers(&r_t, dim, n);
    let s_pow_n = resolvent_powers(&r_s, dim, n).pop().expect("n >= 1");
    let adj_pows = resolvent_powers(&r_s_adj, dim, n);

    let fm = inst.weighted_f();
    let gm = inst.weighted_gprime();
    // b[l-1][j] = <f, (R_S^sigma)^l e_j>
    let b: Vec<DVector<f64>> = adj_pows.iter().map(|p| p.tr_mul(&fm)).collect();
    // a[k-1] = (g' m)^T R_T^k, so that <R_T^k u, g'> = a[k-1] . u
    let a: Vec<DVector<f64>> = t_pows.iter().map(|p| p.tr_mul(&gm)).collect();
    let omega = if inst.uses_norm() { inst.omega_t()? } else { 0.0 };

    let mut details = Vec::with_capacity(tests.vectors.len() * dim);
    for (sample, i, u) in &tests.vectors {
        let lhs_vec = &t_pows[n - 1] * u;
        let s_vec = &s_pow_n * u;
        let unorm = inst.norm_of(u);
        let coeffs: Vec<f64> = (1..=n)
            .map(|l| {
                let k = n + 1 - l;
                if inst.uses_norm() {
                    (lambda - omega).powi(-(k as i32)) * unorm
                } else {
                    a[k - 1].dot(u)
                }
            })
            .collect();
        for j in 0..dim {
            let lhs = lhs_vec[j] * m[j];
            let sum: f64 = coeffs.iter().zip(&b).map(|(c, bl)| c * bl[j]).sum();
            let rhs = s_vec[j] * m[j] + inst.c * sum;
            let site = TestVectors::site(*sample, *i, j).at_lambda(lambda);
            details.push(SiteMargin::scaled(site, lhs, rhs, lambda * lambda));
        }
    }
    Ok(details)
}

/// Resolvent condition at every `lambda` of the grid (empty: default grid).
pub fn check_resolvent_condition(
    inst: &EstimateInstance,
    lambdas: &[f64],
    sampling: Option<ScanConfig>,
) -> Result<Verdict> {
    let tests = TestVectors::for_instance(inst, sampling)?;
    let grid = if lambdas.is_empty() { default_lambda_grid(inst)? } else { lambdas.to_vec() };
    let mut details = Vec::new();
    for &lambda in &grid {
        details.extend(expansion_details(inst, lambda, 1, &tests)?);
    }
    Ok(Verdict::from_details(details, MARGIN_TOL, tests.exactness))
}

/// Both sides of the `n`-fold inequality obtained by iterating the resolvent
/// condition; `n = 1` is the resolvent condition itself.
pub fn resolvent_iteration_expansion(
    inst: &EstimateInstance,
    lambda: f64,
    n: usize,
    sampling: Option<ScanConfig>,
) -> Result<Verdict> {
    if n == 0 {
        return Err(Error::InvalidArgument("expansion order must be at least 1".into()));
    }
    let tests = TestVectors::for_instance(inst, sampling)?;
    let details = expansion_details(inst, lambda, n, &tests)?;
    Ok(Verdict::from_details(details, MARGIN_TOL, tests.exactness))
}

fn check_quad_steps(quad_steps: usize) -> Result<()> {
    if quad_steps < 2 || !quad_steps.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("quadrature panels must be even and >= 2, got {quad_steps}")));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if let Some(&t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::InvalidTime(t));
    }
    Ok(())
}

/// Semigroup (variation-of-constants) condition
/// `<T(t)u, v'> <= <S(t)u, v'> + C int_0^t <T(t-s)u, g'> <f, S(s)'v'> ds`
/// (norm mode: `<T(t-s)u, g'>` becomes `e^{omega (t-s)} ||u||_q`).
///
/// The integral is composite Simpson over `quad_steps` panels; `S(s)'` is the
/// semigroup of `G_S^sigma`. Each site carries the band `C * |S_N - S_{N/2}| / 15`.
pub fn check_semigroup_condition(
    inst: &EstimateInstance,
    times: &[f64],
    quad_steps: usize,
    sampling: Option<ScanConfig>,
) -> Result<Verdict> {
    check_times(times)?;
    check_quad_steps(quad_steps)?;
    let tests = TestVectors::for_instance(inst, sampling)?;
    let dim = inst.dim();
    let m = inst.weights();
    let adjoint = weighted_adjoint(&inst.g_s);
    let omega = if inst.uses_norm() { inst.omega_t()? } else { 0.0 };
    let fm = inst.weighted_f();
    let gm = inst.weighted_gprime();

    let mut details = Vec::new();
    for &t in times {
        if t == 0.0 {
            for (sample, i, u) in &tests.vectors {
                for j in 0..dim {
                    let pair = u[j] * m[j];
                    details.push(SiteMargin::new(TestVectors::site(*sample, *i, j).at_time(t), pair, pair));
                }
            }
            continue;
        }
        let e_t = inst.g_t.semigroup_matrix(t)?;
        let e_s = inst.g_s.semigroup_matrix(t)?;
        let rule = SimpsonRule::new(0.0, t, quad_steps)?;
        let h = rule.step();
        // b[k][j] = <f, S(kh)' e_j>
        let b = row_orbit(&adjoint, &fm, h, quad_steps)?;
        // a[k] . u = <T(kh) u, g'>
        let a = if inst.uses_norm() { Vec::new() } else { row_orbit(&inst.g_t, &gm, h, quad_steps)? };

        for (sample, i, u) in &tests.vectors {
            let unorm = inst.norm_of(u);
            let mut fine = DVector::<f64>::zeros(dim);
            let mut coarse = DVector::<f64>::zeros(dim);
            for (k, bk) in b.iter().enumerate() {
                let tau_index = quad_steps - k;
                let weight_t = if inst.uses_norm() {
                    (omega * tau_index as f64 * h).exp() * unorm
                } else {
                    a[tau_index].dot(u)
                };
                fine.axpy(rule.weight(k) * weight_t, bk, 1.0);
                coarse.axpy(rule.coarse_weight(k) * weight_t, bk, 1.0);
            }
            let lhs_vec = &e_t * u;
            let s_vec = &e_s * u;
            for j in 0..dim {
                let lhs = lhs_vec[j] * m[j];
                let rhs = s_vec[j] * m[j] + inst.c * fine[j];
                let band = inst.c * (fine[j] - coarse[j]).abs() / 15.0;
                let site = TestVectors::site(*sample, *i, j).at_time(t);
                details.push(SiteMargin::new(site, lhs, rhs).with_band(band));
            }
        }
    }
    Ok(Verdict::from_details(details, MARGIN_TOL, tests.exactness))
}

/// Strong (entrywise) version with `q = 1`:
/// `T(t) e_i <= S(t) e_i + C m_i int_0^t e^{omega (t-s)} S(s) f ds` for every
/// coordinate, and its resolvent form
/// `(lambda - G_T)^{-1} e_i <= (lambda - G_S)^{-1} e_i + C m_i / (lambda - omega) (lambda - G_S)^{-1} f`
/// on the `lambda` grid (empty: default grid). Resolvent margins are multiplied by `lambda^2`.
pub fn check_strong_condition(
    inst: &EstimateInstance,
    times: &[f64],
    lambdas: &[f64],
    quad_steps: usize,
) -> Result<Verdict> {
    if !inst.q.is_one() {
        return Err(Error::Unsupported(format!("strong condition needs q = 1, got q = {}", inst.q)));
    }
    check_times(times)?;
    check_quad_steps(quad_steps)?;
    let inst = inst.with_mode(Mode::Strong);
    let dim = inst.dim();
    let m = inst.weights();
    let omega = inst.omega_t()?;
    let f = inst.f.values();
    let mut details = Vec::new();

    for &t in times {
        details.extend(strong_semigroup_details(&inst, t, quad_steps, omega)?);
    }

    let grid = if lambdas.is_empty() { default_lambda_grid(&inst)? } else { lambdas.to_vec() };
    for &lambda in &grid {
        check_lambda(&inst, lambda)?;
        let r_t = Resolvent::new(&inst.g_t, lambda)?.matrix();
        let r_s = Resolvent::new(&inst.g_s, lambda)?;
        let r_s_f = r_s.solve(f);
        let r_s = r_s.matrix();
        for i in 0..dim {
            for x in 0..dim {
                let lhs = r_t[(x, i)];
                let rhs = r_s[(x, i)] + inst.c * m[i] / (lambda - omega) * r_s_f[x];
                let site = Site::pair(i, x).at_lambda(lambda);
                details.push(SiteMargin::scaled(site, lhs, rhs, lambda * lambda));
            }
        }
    }
    Ok(Verdict::from_details(details, MARGIN_TOL, Exactness::Exact))
}

/// Ingredients of the strong condition at one time: both semigroup matrices,
/// `int_0^t e^{omega (t-s)} S(s) f ds` and its Richardson error estimate.
pub(crate) struct StrongTerms {
    pub e_t: DMatrix<f64>,
    pub e_s: DMatrix<f64>,
    pub integral: DVector<f64>,
    pub error: DVector<f64>,
}

pub(crate) fn strong_terms(inst: &EstimateInstance, t: f64, quad_steps: usize, omega: f64) -> Result<StrongTerms> {
    let dim = inst.dim();
    if t == 0.0 {
        let id = DMatrix::identity(dim, dim);
        return Ok(StrongTerms { e_t: id.clone(), e_s: id, integral: DVector::zeros(dim), error: DVector::zeros(dim) });
    }
    let rule = SimpsonRule::new(0.0, t, quad_steps)?;
    let h = rule.step();
    // y[k] = S(kh) f
    let y = orbit(&inst.g_s, inst.f.values(), h, quad_steps)?;
    let mut fine = DVector::<f64>::zeros(dim);
    let mut coarse = DVector::<f64>::zeros(dim);
    for (k, yk) in y.iter().enumerate() {
        let growth = (omega * (quad_steps - k) as f64 * h).exp();
        fine.axpy(rule.weight(k) * growth, yk, 1.0);
        coarse.axpy(rule.coarse_weight(k) * growth, yk, 1.0);
    }
    let error = (&fine - &coarse).abs() / 15.0;
    Ok(StrongTerms {
        e_t: inst.g_t.semigroup_matrix(t)?,
        e_s: inst.g_s.semigroup_matrix(t)?,
        integral: fine,
        error,
    })
}

/// Sites `(i, x)` of `T(t) e_i <= S(t) e_i + C m_i int_0^t e^{omega (t-s)} S(s) f ds`
/// at a single time, with the quadrature band attached.
fn strong_semigroup_details(
    inst: &EstimateInstance,
    t: f64,
    quad_steps: usize,
    omega: f64,
) -> Result<Vec<SiteMargin>> {
    let dim = inst.dim();
    let m = inst.weights();
    let terms = strong_terms(inst, t, quad_steps, omega)?;
    let mut details = Vec::with_capacity(dim * dim);
    for (i, &mi) in m.iter().enumerate() {
        for x in 0..dim {
            let lhs = terms.e_t[(x, i)];
            let rhs = terms.e_s[(x, i)] + inst.c * mi * terms.integral[x];
            let band = inst.c * mi * terms.error[x];
            details.push(SiteMargin::new(Site::pair(i, x).at_time(t), lhs, rhs).with_band(band));
        }
    }
    Ok(details)
}

/// The semigroup condition with every semigroup replaced by its `n`-step
/// Euler approximant and the time integral by the matching Riemann sum:
/// `<E_T^n u, v'> <= <E_S^n u, v'> + C (t/n) sum_l <E_T^{n+1-l} u, g'> <f, (E_S^sigma)^l v'>`
/// with `E = (I - tG/n)^{-1}`. Exact in pairing mode and norm mode with `q = 1`.
pub fn euler_semigroup_condition(inst: &EstimateInstance, t: f64, n: usize) -> Result<Verdict> {
    if inst.uses_norm() && !inst.q.is_one() {
        return Err(Error::Unsupported("Euler-path margins are implemented for q = 1 only".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidTime(t));
    }
    let dim = inst.dim();
    let m = inst.weights();
    let space = inst.space();
    let transpose = |g: &Generator| Generator::new(space, g.matrix().transpose()).expect("same shape");
    let step_t = EulerStep::new(&inst.g_t, t, n)?;
    let step_s = EulerStep::new(&inst.g_s, t, n)?;
    let step_t_tr = EulerStep::new(&transpose(&inst.g_t), t, n)?;
    let step_adj_tr = EulerStep::new(&transpose(&weighted_adjoint(&inst.g_s)), t, n)?;
    let omega = if inst.uses_norm() { inst.omega_t()? } else { 0.0 };

    let ident = DMatrix::<f64>::identity(dim, dim);
    let power_cols = |step: &EulerStep| {
        DMatrix::from_columns(&ident.column_iter().map(|c| step.apply_power(&c.into_owned(), n)).collect::<Vec<_>>())
    };
    let lhs_mat = power_cols(&step_t);
    let s_mat = power_cols(&step_s);

    // a[k] = (g' m)^T E_T^k and b[l] = (f m)^T (E_S^sigma)^l, for k, l = 0..=n
    let mut a = vec![inst.weighted_gprime()];
    let mut b = vec![inst.weighted_f()];
    for k in 0..n {
        a.push(step_t_tr.apply(&a[k]));
        b.push(step_adj_tr.apply(&b[k]));
    }
    let damp = 1.0 - t * omega / n as f64;

    let mut details = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        let unorm = m[i];
        for j in 0..dim {
            let sum: f64 = (1..=n)
                .map(|l| {
                    let k = n + 1 - l;
                    let first = if inst.uses_norm() { damp.powi(-(k as i32)) * unorm } else { a[k][i] };
                    first * b[l][j]
                })
                .sum();
            let lhs = lhs_mat[(j, i)] * m[j];
            let rhs = s_mat[(j, i)] * m[j] + inst.c * t / n as f64 * sum;
            details.push(SiteMargin::new(Site::pair(i, j).at_time(t), lhs, rhs));
        }
    }
    Ok(Verdict::from_details(details, MARGIN_TOL, Exactness::Exact))
}
