//! Generators, semigroup and resolvent actions, the Euler exponential
//! formula, weighted adjoints and growth-bound diagnostics.
//!
//! Convention: a [`Generator`] `G` generates `T(t) = exp(tG)`.

use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::space::{Exponent, LpElement, MeasureSpace};

/// Threshold above a growth bound at which `lambda` counts as "sufficiently large".
pub const RESOLVENT_MARGIN: f64 = 1.0;

/// A square real matrix on a measure space.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    matrix: DMatrix<f64>,
    space: MeasureSpace,
}

impl Generator {
    pub fn new(space: &MeasureSpace, matrix: DMatrix<f64>) -> Result<Self> {
        check_square(space, &matrix)?;
        Ok(Self { matrix, space: space.clone() })
    }

    pub fn from_row_slice(space: &MeasureSpace, entries: &[f64]) -> Result<Self> {
        let n = space.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        Self::new(space, DMatrix::from_row_slice(n, n, entries))
    }

    pub fn zero(space: &MeasureSpace) -> Self {
        let n = space.len();
        Self { matrix: DMatrix::zeros(n, n), space: space.clone() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest absolute entry, floored at 1 for use as a tolerance scale.
    pub fn scale(&self) -> f64 {
        self.matrix.amax().max(1.0)
    }

    /// `exp(tG)` as a dense matrix.
    pub fn semigroup_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(DMatrix::identity(self.dim(), self.dim()));
        }
        Ok(expm(&(&self.matrix * t)))
    }

    fn check_element(&self, u: &LpElement) -> Result<()> {
        self.space.check_same(u.space())
    }
}

pub(crate) fn check_square(space: &MeasureSpace, matrix: &DMatrix<f64>) -> Result<()> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
    }
    space.check_len(matrix.nrows())?;
    for col in 0..matrix.ncols() {
        for row in 0..matrix.nrows() {
            if !matrix[(row, col)].is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    Ok(())
}

/// `exp(tG) u`; returns `u` unchanged at `t = 0`.
pub fn semigroup_apply(g: &Generator, t: f64, u: &LpElement) -> Result<LpElement> {
    g.check_element(u)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(u.clone());
    }
    Ok(u.with_values(g.semigroup_matrix(t)? * u.values()))
}

/// A factorization of `lambda - G`, reused for repeated solves.
pub struct Resolvent {
    lambda: f64,
    lu: LU<f64, Dyn, Dyn>,
}

impl Resolvent {
    pub fn new(g: &Generator, lambda: f64) -> Result<Self> {
        let n = g.dim();
        let shifted = DMatrix::<f64>::identity(n, n) * lambda - g.matrix();
        let lu = factor(shifted).ok_or_else(|| Error::NotInResolventSet {
            lambda,
            reason: "lambda - G is numerically singular".into(),
        })?;
        Ok(Self { lambda, lu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(lambda - G)^{-1} v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(v).expect("factorization checked for singularity")
    }

    /// `(lambda - G)^{-power} v` by repeated solves.
    pub fn solve_power(&self, v: &DVector<f64>, power: usize) -> DVector<f64> {
        let mut x = v.clone();
        for _ in 0..power {
            x = self.solve(&x);
        }
        x
    }

    /// `(lambda - G)^{-1}` as a dense matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.lu.l().nrows();
        self.lu.solve(&DMatrix::identity(n, n)).expect("factorization checked for singularity")
    }
}

/// LU factorization, rejecting numerically singular matrices.
fn factor(m: DMatrix<f64>) -> Option<LU<f64, Dyn, Dyn>> {
    let scale = m.amax();
    let lu = m.lu();
    let u = lu.u();
    let pivot_floor = 1e-14 * scale.max(f64::MIN_POSITIVE);
    if (0..u.nrows()).any(|i| u[(i, i)].is_nan() || u[(i, i)].abs() <= pivot_floor) {
        return None;
    }
    Some(lu)
}

/// Orbit `exp(k h G) v` for `k = 0..=steps`, stepped with a single `exp(hG)`.
pub(crate) fn orbit(g: &Generator, v: &DVector<f64>, h: f64, steps: usize) -> Result<Vec<DVector<f64>>> {
    let step = g.semigroup_matrix(h)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(v.clone());
    for k in 0..steps {
        let next = &step * &out[k];
        out.push(next);
    }
    Ok(out)
}

/// Row orbit `w^T exp(k h G)` for `k = 0..=steps`, returned as column vectors.
pub(crate) fn row_orbit(g: &Generator, w: &DVector<f64>, h: f64, steps: usize) -> Result<Vec<DVector<f64>>> {
    let step = g.semigroup_matrix(h)?.transpose();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(w.clone());
    for k in 0..steps {
        let next = &step * &out[k];
        out.push(next);
    }
    Ok(out)
}

/// `(lambda - G)^{-power} u`.
pub fn resolvent_apply(g: &Generator, lambda: f64, u: &LpElement, power: usize) -> Result<LpElement> {
    g.check_element(u)?;
    if power == 0 {
        return Err(Error::InvalidArgument("resolvent power must be at least 1".into()));
    }
    let r = Resolvent::new(g, lambda)?;
    Ok(u.with_values(r.solve_power(u.values(), power)))
}

/// One implicit Euler step operator `(I - tG/n)^{-1}`, factorized.
pub struct EulerStep {
    lu: LU<f64, Dyn, Dyn>,
}

impl EulerStep {
    pub fn new(g: &Generator, t: f64, n: usize) -> Result<Self> {
        check_time(t)?;
        if n == 0 {
            return Err(Error::InvalidArgument("Euler step count must be at least 1".into()));
        }
        let dim = g.dim();
        let step = DMatrix::<f64>::identity(dim, dim) - g.matrix() * (t / n as f64);
        let lu = factor(step).ok_or(Error::EulerStepSingular { t, n })?;
        Ok(Self { lu })
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(v).expect("factorization checked for singularity")
    }

    pub fn apply_power(&self, v: &DVector<f64>, power: usize) -> DVector<f64> {
        let mut x = v.clone();
        for _ in 0..power {
            x = self.apply(&x);
        }
        x
    }
}

/// `(I - tG/n)^{-n} u`, the `n`-th Euler approximant of `exp(tG) u`.
pub fn euler_formula(g: &Generator, t: f64, n: usize, u: &LpElement) -> Result<LpElement> {
    g.check_element(u)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(u.clone());
    }
    let step = EulerStep::new(g, t, n)?;
    Ok(u.with_values(step.apply_power(u.values(), n)))
}

/// Spectral norm `||(I - tG/n)^{-n} - exp(tG)||_2` of the Euler error matrix.
pub fn euler_error(g: &Generator, t: f64, n: usize) -> Result<f64> {
    check_time(t)?;
    let exact = g.semigroup_matrix(t)?;
    let step = EulerStep::new(g, t, n)?;
    let dim = g.dim();
    let cols: Vec<DVector<f64>> =
        (0..dim).map(|k| step.apply_power(&DVector::from_fn(dim, |i, _| if i == k { 1.0 } else { 0.0 }), n)).collect();
    let diff = DMatrix::from_columns(&cols) - exact;
    Ok(diff.svd(false, false).singular_values.max())
}

/// `G^sigma = D^{-1} G^T D`, the adjoint of `G` with respect to the weighted pairing.
pub fn weighted_adjoint(g: &Generator) -> Generator {
    let m = g.space.weights();
    let n = g.dim();
    let matrix = DMatrix::from_fn(n, n, |i, j| g.matrix[(j, i)] * m[j] / m[i]);
    Generator { matrix, space: g.space.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub is_metzler: bool,
    /// First negative off-diagonal entry in row-major order, as `(row, col, value)`.
    pub violating_entry: Option<(usize, usize, f64)>,
}

/// `exp(tG) >= 0` for all `t >= 0` iff every off-diagonal entry of `G` is nonnegative.
pub fn positivity_check(g: &Generator) -> PositivityReport {
    let n = g.dim();
    for row in 0..n {
        for col in 0..n {
            let value = g.matrix[(row, col)];
            if row != col && value < 0.0 {
                return PositivityReport { is_metzler: false, violating_entry: Some((row, col, value)) };
            }
        }
    }
    PositivityReport { is_metzler: true, violating_entry: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBound {
    pub m: f64,
    pub omega: f64,
}

/// `omega_1`: largest weighted column sum `max_j (sum_i G_ij m_i) / m_j`.
pub fn weighted_column_bound(g: &Generator) -> f64 {
    let m = g.space.weights();
    (0..g.dim())
        .map(|j| (0..g.dim()).map(|i| g.matrix[(i, j)] * m[i]).sum::<f64>() / m[j])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `omega_inf`: largest row sum.
pub fn row_sum_bound(g: &Generator) -> f64 {
    g.matrix.row_iter().map(|r| r.sum()).fold(f64::NEG_INFINITY, f64::max)
}

/// Certified `(M, omega)` with `||exp(tG) u||_q <= M e^{omega t} ||u||_q` for Metzler `G`.
///
/// `q = 1` and `q = inf` use the exact one-sided bounds for the weighted L_1 and
/// L_inf norms (`M = 1`); intermediate `q` take the larger of the two by
/// Riesz-Thorin interpolation.
pub fn growth_bound(g: &Generator, q: Exponent) -> Result<GrowthBound> {
    if let Some((row, col, value)) = positivity_check(g).violating_entry {
        return Err(Error::NotMetzler { row, col, value });
    }
    let omega = match q {
        Exponent::Infinity => row_sum_bound(g),
        q if q.is_one() => weighted_column_bound(g),
        _ => weighted_column_bound(g).max(row_sum_bound(g)),
    };
    Ok(GrowthBound { m: 1.0, omega })
}
