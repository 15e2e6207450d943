//! Bilinear forms on a finite measure space, non-local jump perturbations,
//! their associated generators, and form-level criteria for positivity and
//! L_1 / L_inf contractivity of the induced semigroup.
//!
//! A form is stored by its coefficient matrix `K`, with `tau(u, v) = v^T K u`.
//! The operator `A` associated with `tau` solves `diag(m) A = K`; the
//! semigroup `exp(-tA)` has generator `G = -A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::{check_generator_condition, EstimateInstance};
use crate::operator::{check_square, Generator};
use crate::space::{weighted_lp_norm, Exponent, LpElement, MeasureSpace};
use crate::verdict::Verdict;

/// Relative tolerance of the exact "<= 0" criteria.
pub const CRITERION_TOL: f64 = 1e-12;
/// Relative tolerance of randomized functional scans and the eigenvalue floor.
pub const SCAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearForm {
    coeffs: DMatrix<f64>,
    space: MeasureSpace,
}

impl BilinearForm {
    pub fn new(space: &MeasureSpace, coeffs: DMatrix<f64>) -> Result<Self> {
        check_square(space, &coeffs)?;
        Ok(Self { coeffs, space: space.clone() })
    }

    pub fn from_row_slice(space: &MeasureSpace, entries: &[f64]) -> Result<Self> {
        let n = space.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        Self::new(space, DMatrix::from_row_slice(n, n, entries))
    }

    pub fn zero(space: &MeasureSpace) -> Self {
        Self { coeffs: DMatrix::zeros(space.len(), space.len()), space: space.clone() }
    }

    /// Weighted graph Laplacian form `sum_edges w (u_a - u_b)(v_a - v_b)`.
    pub fn graph_laplacian(space: &MeasureSpace, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = space.len();
        let mut k = DMatrix::zeros(n, n);
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) out of range for {n} atoms")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) has conductance {w}")));
            }
            if a == b {
                continue;
            }
            k[(a, a)] += w;
            k[(b, b)] += w;
            k[(a, b)] -= w;
            k[(b, a)] -= w;
        }
        Ok(Self { coeffs: k, space: space.clone() })
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    /// `tau(u, v) = sum_ij v_i K_ij u_j`.
    pub fn eval(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.coeffs * u))
    }

    pub fn plus(&self, other: &BilinearForm) -> Result<BilinearForm> {
        self.space.check_same(&other.space)?;
        Ok(Self { coeffs: &self.coeffs + &other.coeffs, space: self.space.clone() })
    }

    fn scale(&self) -> f64 {
        self.coeffs.amax()
    }
}

/// A nonnegative jump kernel `j(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpKernel {
    j: DMatrix<f64>,
    space: MeasureSpace,
}

impl JumpKernel {
    pub fn new(space: &MeasureSpace, j: DMatrix<f64>) -> Result<Self> {
        check_square(space, &j)?;
        for col in 0..j.ncols() {
            for row in 0..j.nrows() {
                let value = j[(row, col)];
                if value < 0.0 {
                    return Err(Error::InvalidKernel { row, col, value });
                }
            }
        }
        Ok(Self { j, space: space.clone() })
    }

    pub fn from_row_slice(space: &MeasureSpace, entries: &[f64]) -> Result<Self> {
        let n = space.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        Self::new(space, DMatrix::from_row_slice(n, n, entries))
    }

    pub fn zero(space: &MeasureSpace) -> Self {
        Self { j: DMatrix::zeros(space.len(), space.len()), space: space.clone() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.space, &self.j * factor)
    }
}

/// Coefficients of `tau_j(u, v) = sum_xy (u_x - u_y)(v_x - v_y) j(x, y) m_x m_y`.
///
/// With `W_xy = j(x, y) m_x m_y` this is `diag(W 1 + W^T 1) - W - W^T`.
pub fn assemble_jump_form(j: &JumpKernel) -> BilinearForm {
    let m = j.space.weights();
    let n = m.len();
    let w = DMatrix::from_fn(n, n, |x, y| j.j[(x, y)] * m[x] * m[y]);
    let mut k = -(&w + w.transpose());
    for x in 0..n {
        k[(x, x)] += w.row(x).sum() + w.column(x).sum();
    }
    BilinearForm { coeffs: k, space: j.space.clone() }
}

/// `tau_0 + tau_j`.
pub fn perturbed_form(tau0: &BilinearForm, j: &JumpKernel) -> Result<BilinearForm> {
    tau0.plus(&assemble_jump_form(j))
}

/// `G = -diag(m)^{-1} K`.
pub fn associated_generator(form: &BilinearForm) -> Generator {
    let m = form.space.weights();
    let n = m.len();
    let g = DMatrix::from_fn(n, n, |i, j| -form.coeffs[(i, j)] / m[i]);
    Generator::new(&form.space, g).expect("coefficients already validated")
}

/// Sample count and seed for randomized functional scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScanConfig {
    pub samples: usize,
    pub seed: u64,
}

impl ScanConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed }
    }
}

/// Outcome of a form criterion: the exact matrix-level verdict, the randomized
/// functional scan, and a witness vector when the criterion fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub holds: bool,
    pub matrix_verdict: bool,
    /// No violation found by the randomized scan.
    pub scan_verdict: bool,
    /// The matrix criterion passed but the scan found a violation.
    pub disagreement: bool,
    pub witness: Option<Vec<f64>>,
    /// Value of the tested functional at the witness.
    pub witness_value: Option<f64>,
    pub reason: Option<String>,
}

impl CriterionReport {
    fn pass() -> Self {
        Self {
            holds: true,
            matrix_verdict: true,
            scan_verdict: true,
            disagreement: false,
            witness: None,
            witness_value: None,
            reason: None,
        }
    }

    fn fail_matrix(witness: DVector<f64>, value: f64, reason: String) -> Self {
        Self {
            holds: false,
            matrix_verdict: false,
            scan_verdict: true,
            disagreement: false,
            witness: Some(witness.as_slice().to_vec()),
            witness_value: Some(value),
            reason: Some(reason),
        }
    }

    /// Records a scan violation; it overrides a passing matrix verdict.
    fn record_scan_violation(&mut self, witness: DVector<f64>, value: f64) {
        self.scan_verdict = false;
        self.holds = false;
        if self.matrix_verdict {
            self.disagreement = true;
            self.witness = Some(witness.as_slice().to_vec());
            self.witness_value = Some(value);
            self.reason = Some("randomized scan found a violation the matrix criterion missed".into());
        }
    }
}

fn positive_part(u: &DVector<f64>) -> DVector<f64> {
    u.map(|x| x.max(0.0))
}

fn negative_part(u: &DVector<f64>) -> DVector<f64> {
    u.map(|x| (-x).max(0.0))
}

fn min_one(u: &DVector<f64>) -> DVector<f64> {
    u.map(|x| x.min(1.0))
}

fn excess_over_one(u: &DVector<f64>) -> DVector<f64> {
    u.map(|x| (x - 1.0).max(0.0))
}

/// Scan vectors: structured probes `c e_j + (1 + eps) e_i` alternating with
/// uniform draws in `[-1, 2]^n`.
fn scan_vectors(n: usize, scan: ScanConfig) -> impl Iterator<Item = DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
    (0..scan.samples).map(move |k| {
        if k % 2 == 0 && n >= 2 {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let mut u = DVector::zeros(n);
            u[j] = rng.random_range(0.0..1.0);
            u[i] = 1.0 + rng.random_range(1e-3..1.0);
            u
        } else {
            DVector::from_fn(n, |_, _| rng.random_range(-1.0..2.0))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccretivityReport {
    pub accretive: bool,
    /// Smallest eigenvalue of the symmetric part `(K + K^T) / 2`.
    pub min_eigenvalue: f64,
    pub witness: Option<Vec<f64>>,
    pub witness_value: Option<f64>,
    pub scan_verdict: bool,
}

/// `tau(u, u) >= 0` for all `u`, decided on the spectrum of the symmetric part.
pub fn accretivity_check(form: &BilinearForm, scan: ScanConfig) -> AccretivityReport {
    let sym = (&form.coeffs + form.coeffs.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (idx, &min_eigenvalue) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("space is nonempty");
    let floor = -SCAN_TOL * form.scale();
    let mut report =
        AccretivityReport { accretive: true, min_eigenvalue, witness: None, witness_value: None, scan_verdict: true };
    if min_eigenvalue < floor {
        let mut w = eig.eigenvectors.column(idx).into_owned();
        if w.iter().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { *x } else { acc }) < 0.0 {
            w = -w;
        }
        report.accretive = false;
        report.witness_value = Some(form.eval(&w, &w));
        report.witness = Some(w.as_slice().to_vec());
    }
    for u in scan_vectors(form.space.len(), scan) {
        let value = form.eval(&u, &u);
        if value < floor * u.norm_squared() {
            report.scan_verdict = false;
            if report.accretive {
                report.accretive = false;
                report.witness = Some(u.as_slice().to_vec());
                report.witness_value = Some(value);
            }
            break;
        }
    }
    report
}

/// Form criterion for positivity: `tau(u^+, u^-) <= 0`.
///
/// Exact part: `tau(e_i, e_j) = K_ji <= 0` for `i != j`; disjointly supported
/// nonnegative pairs are nonnegative combinations of basis pairs.
pub fn ouhabaz_positivity(form: &BilinearForm, scan: ScanConfig) -> CriterionReport {
    let n = form.space.len();
    let tol = CRITERION_TOL * form.scale();
    let mut report = CriterionReport::pass();
    'outer: for row in 0..n {
        for col in 0..n {
            if row != col && form.coeffs[(row, col)] > tol {
                // tau(e_col, e_row) > 0 is witnessed by u = e_col - e_row.
                let mut u = DVector::zeros(n);
                u[col] = 1.0;
                u[row] = -1.0;
                let value = form.eval(&positive_part(&u), &negative_part(&u));
                report = CriterionReport::fail_matrix(
                    u,
                    value,
                    format!("tau(e_{col}, e_{row}) = {} > 0", form.coeffs[(row, col)]),
                );
                break 'outer;
            }
        }
    }
    let scan_tol = SCAN_TOL * form.scale();
    for u in scan_vectors(n, scan) {
        let (plus, minus) = (positive_part(&u), negative_part(&u));
        let value = form.eval(&plus, &minus);
        if value > scan_tol * plus.norm() * minus.norm() {
            report.record_scan_violation(u, value);
            break;
        }
    }
    report
}

/// Form criterion for positivity plus L_inf-contractivity: `tau(u ^ 1, (u - 1)^+) >= 0`.
///
/// Exact part: `G` Metzler with every row sum `<= 0`.
pub fn ouhabaz_linf_contractive(form: &BilinearForm, scan: ScanConfig) -> CriterionReport {
    contractivity(form, scan, Contractivity::LInf)
}

/// Form criterion for positivity plus L_1-contractivity: `tau((u - 1)^+, u ^ 1) >= 0`.
///
/// Exact part: `G` Metzler with every weighted column sum `sum_i G_ij m_i <= 0`.
pub fn ouhabaz_l1_contractive(form: &BilinearForm, scan: ScanConfig) -> CriterionReport {
    contractivity(form, scan, Contractivity::L1)
}

#[derive(Clone, Copy)]
enum Contractivity {
    LInf,
    L1,
}

impl Contractivity {
    fn functional(self, form: &BilinearForm, u: &DVector<f64>) -> f64 {
        let (capped, excess) = (min_one(u), excess_over_one(u));
        match self {
            Contractivity::LInf => form.eval(&capped, &excess),
            Contractivity::L1 => form.eval(&excess, &capped),
        }
    }
}

fn contractivity(form: &BilinearForm, scan: ScanConfig, kind: Contractivity) -> CriterionReport {
    let n = form.space.len();
    let positivity = ouhabaz_positivity(form, ScanConfig::new(0, scan.seed));
    let mut report = if !positivity.holds {
        CriterionReport { reason: Some(format!("positivity fails: {}", positivity.reason.unwrap_or_default())), ..positivity }
    } else {
        let tol = CRITERION_TOL * form.scale();
        let g = associated_generator(form);
        let m = form.space.weights();
        // In terms of K = -diag(m) G: row sums of G <= 0 iff sum_j K_ij >= 0,
        // weighted column sums of G <= 0 iff sum_i K_ij >= 0.
        let offending = (0..n).find_map(|k| {
            let (sum, rescaled) = match kind {
                Contractivity::LInf => (form.coeffs.row(k).sum(), g.matrix().row(k).sum()),
                Contractivity::L1 => {
                    (form.coeffs.column(k).sum(), (0..n).map(|i| g.matrix()[(i, k)] * m[i]).sum::<f64>())
                }
            };
            (sum < -tol).then_some((k, rescaled))
        });
        match offending {
            None => CriterionReport::pass(),
            Some((k, sum)) => {
                let mut u = DVector::from_element(n, 1.0);
                u[k] = 2.0;
                let value = kind.functional(form, &u);
                let what = match kind {
                    Contractivity::LInf => "row sum",
                    Contractivity::L1 => "weighted column sum",
                };
                CriterionReport::fail_matrix(u, value, format!("generator {what} {k} is {sum} > 0"))
            }
        }
    };
    let scan_tol = SCAN_TOL * form.scale();
    for u in scan_vectors(n, scan) {
        let value = kind.functional(form, &u);
        let size = min_one(&u).norm() * excess_over_one(&u).norm();
        if value < -scan_tol * size {
            report.record_scan_violation(u, value);
            break;
        }
    }
    report
}

/// Row/column suprema and integrals of a jump kernel, and `f_j = rowsup + colsup`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpProfiles {
    pub rowsup: LpElement,
    pub colsup: LpElement,
    pub rowint: LpElement,
    pub colint: LpElement,
    pub f_j: LpElement,
}

impl JumpProfiles {
    /// `||rowint||_inf`, the first bounded-integral constant.
    pub fn rowint_sup(&self) -> f64 {
        self.rowint.values().amax()
    }

    /// `||colint||_inf`.
    pub fn colint_sup(&self) -> f64 {
        self.colint.values().amax()
    }

    pub fn f_norm(&self, p: Exponent) -> f64 {
        weighted_lp_norm(self.f_j.space().weights(), self.f_j.values().as_slice(), p)
    }
}

pub fn jump_profiles(j: &JumpKernel) -> JumpProfiles {
    let m = j.space.weights();
    let n = m.len();
    let s = &j.space;
    let rowsup = DVector::from_fn(n, |x, _| j.j.row(x).max());
    let colsup = DVector::from_fn(n, |y, _| j.j.column(y).max());
    let rowint = DVector::from_fn(n, |x, _| (0..n).map(|y| j.j[(x, y)] * m[y]).sum());
    let colint = DVector::from_fn(n, |y, _| (0..n).map(|x| j.j[(x, y)] * m[x]).sum());
    let f_j = &rowsup + &colsup;
    let wrap = |v: DVector<f64>, p| LpElement::nonneg(s, v, p).expect("profiles of a nonnegative kernel");
    JumpProfiles {
        rowsup: wrap(rowsup, Exponent::ONE),
        colsup: wrap(colsup, Exponent::ONE),
        rowint: wrap(rowint, Exponent::Infinity),
        colint: wrap(colint, Exponent::Infinity),
        f_j: wrap(f_j, Exponent::ONE),
    }
}

/// Checks `(G_T - G_S)_{ji} <= m_i f_j(j)` for every basis pair, i.e. the
/// `q = 1` norm-mode generator condition with `f = f_j` and constant 1.
pub fn jump_generator_bound(g_s: &Generator, g_t: &Generator, j: &JumpKernel) -> Result<Verdict> {
    g_s.space().check_same(g_t.space())?;
    g_s.space().check_same(j.space())?;
    let profiles = jump_profiles(j);
    let inst = EstimateInstance::norm(g_s.clone(), g_t.clone(), profiles.f_j, Exponent::ONE, Exponent::ONE, 1.0)?;
    check_generator_condition(&inst, None)
}
