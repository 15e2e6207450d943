//! Heat kernels `k(t, x, y)` with `(T(t) u)(x) = sum_y k(t, x, y) u(y) m(y)` and
//! the entrywise kernel estimates built on them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::{check_semigroup_condition, strong_terms, EstimateInstance, Mode, MARGIN_TOL};
use crate::forms::{
    associated_generator, jump_profiles, ouhabaz_l1_contractive, ouhabaz_linf_contractive, ouhabaz_positivity,
    perturbed_form, BilinearForm, JumpKernel, ScanConfig,
};
use crate::operator::{growth_bound, Generator};
use crate::space::{Exponent, LpElement, MeasureSpace};
use crate::verdict::{Exactness, Site, SiteMargin, Status, Verdict};

/// Entries below `-NEGATIVITY_TOL * scale` count as genuinely negative.
pub const NEGATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernel {
    t: f64,
    values: DMatrix<f64>,
    space: MeasureSpace,
}

impl HeatKernel {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    /// `x -> sum_y k(t, x, y) u(y) m(y)`.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.values * u.component_mul(&self.space.weight_vector())
    }

    /// First entry below `-NEGATIVITY_TOL * max|k|`, as `(x, y, value)`.
    pub fn negative_entry(&self) -> Option<(usize, usize, f64)> {
        let floor = -NEGATIVITY_TOL * self.values.amax().max(1.0);
        let n = self.values.nrows();
        (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).map(|(x, y)| (x, y, self.values[(x, y)])).find(|e| e.2 < floor)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// `k(t, x, y) = [exp(tG)]_{xy} / m_y`.
pub fn extract_kernel(g: &Generator, t: f64) -> Result<HeatKernel> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidTime(t));
    }
    let e = g.semigroup_matrix(t)?;
    let m = g.space().weights();
    let values = DMatrix::from_fn(e.nrows(), e.ncols(), |x, y| e[(x, y)] / m[y]);
    Ok(HeatKernel { t, values, space: g.space().clone() })
}

fn rescale(d: &SiteMargin, factor: f64) -> SiteMargin {
    SiteMargin {
        site: d.site,
        lhs: d.lhs / factor,
        rhs: d.rhs / factor,
        margin: d.margin / factor,
        band: d.band / factor,
    }
}

/// `k^T(t,x,y) <= k^S(t,x,y) + C int_0^t (int k^T(t-s,w,y) g'(w) dm(w)) (int k^S(s,x,z) f(z) dm(z)) ds`
/// for every entry. Entry `(x, y)` is reported at the site `u = y`, `v = x`.
#[allow(clippy::too_many_arguments)]
pub fn check_kernel_estimate(
    g_s: &Generator,
    g_t: &Generator,
    f: &LpElement,
    gprime: &LpElement,
    c: f64,
    t: f64,
    quad_steps: usize,
) -> Result<Verdict> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidTime(t));
    }
    let inst = EstimateInstance::pairing(g_s.clone(), g_t.clone(), f.clone(), gprime.clone(), c)?;
    let pairing = check_semigroup_condition(&inst, &[t], quad_steps, None)?;
    let m = g_s.space().weights();
    let details = pairing.details.iter().map(|d| rescale(d, m[d.site.u] * m[d.site.v])).collect();
    Ok(Verdict::from_details(details, MARGIN_TOL, Exactness::Exact))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeMargin {
    pub t: f64,
    pub status: Status,
    pub min_margin: f64,
    /// Smallest constant for which the bound holds at this time (quadrature
    /// values taken at face value); absent when some excess meets a zero term.
    pub empirical_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpKernelReport {
    pub c: f64,
    pub omega: f64,
    pub verdict: Verdict,
    pub per_time: Vec<TimeMargin>,
}

/// Which hypotheses of the jump kernel bound `tau0` satisfies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpHypotheses {
    pub positivity: bool,
    pub linf_contractive: bool,
    pub l1_contractive: bool,
}

pub fn jump_hypotheses(tau0: &BilinearForm, scan: ScanConfig) -> JumpHypotheses {
    JumpHypotheses {
        positivity: ouhabaz_positivity(tau0, scan).holds,
        linf_contractive: ouhabaz_linf_contractive(tau0, scan).holds,
        l1_contractive: ouhabaz_l1_contractive(tau0, scan).holds,
    }
}

/// With `S` generated by `tau0` and `T` by `tau0 + tau_j`:
/// `k^T(t,x,y) <= k^S(t,x,y) + C int_0^t e^{omega (t-s)} (S(s) f_j)(x) ds`
/// entrywise, `f_j = rowsup + colsup` and `omega` the `L_1` growth bound of `T`.
pub fn check_jump_kernel_theorem(
    tau0: &BilinearForm,
    j: &JumpKernel,
    times: &[f64],
    quad_steps: usize,
    c: f64,
    scan: ScanConfig,
) -> Result<JumpKernelReport> {
    let hyp = jump_hypotheses(tau0, scan);
    if !hyp.positivity {
        return Err(Error::Precondition("tau0 fails the positivity criterion".into()));
    }
    if !(hyp.linf_contractive || hyp.l1_contractive) {
        return Err(Error::Precondition("tau0 fails both the L_inf and the L_1 contractivity criteria".into()));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if let Some(&t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidTime(t));
    }
    let g_s = associated_generator(tau0);
    let g_t = associated_generator(&perturbed_form(tau0, j)?);
    let omega = growth_bound(&g_t, Exponent::ONE)?.omega;
    let f = jump_profiles(j).f_j;
    let inst = EstimateInstance::new(
        g_s,
        g_t,
        f,
        LpElement::ones(tau0.space(), Exponent::Infinity),
        c,
        Exponent::ONE,
        Exponent::ONE,
        Mode::Strong,
    )?;
    let m = tau0.space().weights();
    let dim = inst.dim();

    let mut details = Vec::new();
    let mut per_time = Vec::with_capacity(times.len());
    for &t in times {
        let terms = strong_terms(&inst, t, quad_steps, omega)?;
        let mut empirical = Some(0.0f64);
        let mut at_t = Vec::with_capacity(dim * dim);
        for (y, &my) in m.iter().enumerate() {
            for x in 0..dim {
                let k_t = terms.e_t[(x, y)] / my;
                let k_s = terms.e_s[(x, y)] / my;
                let term = terms.integral[x];
                let excess = k_t - k_s;
                if excess > 0.0 {
                    empirical = empirical.and_then(|cur| (term > 0.0).then(|| cur.max(excess / term)));
                }
                let site = Site::pair(y, x).at_time(t);
                at_t.push(SiteMargin::new(site, k_t, k_s + c * term).with_band(c * terms.error[x]));
            }
        }
        let v = Verdict::from_details(at_t.clone(), MARGIN_TOL, Exactness::Exact);
        per_time.push(TimeMargin { t, status: v.status, min_margin: v.worst_margin, empirical_c: empirical });
        details.extend(at_t);
    }
    let verdict = Verdict::from_details(details, MARGIN_TOL, Exactness::Exact);
    Ok(JumpKernelReport { c, omega, verdict, per_time })
}
