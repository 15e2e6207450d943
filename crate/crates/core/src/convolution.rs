//! Discrete convolutions of scaled function families and their limit integral.
//!
//! A family `phi_n(t, l)` obeys the scaling law `phi_n(t, l) = phi_l(t l / n, l)`
//! and `phi_n(., n) -> phi` uniformly on compacts. Then
//! `(1/(n-1)) sum_{l=1}^{n-1} phi_{n-1}(t, n-l) psi_{n-1}(t, l)` tends to
//! `int_0^1 phi(t(1-s)) psi(ts) ds`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{positivity_check, weighted_adjoint, EulerStep, Generator};
use crate::quadrature::{simpson, QuadResult, SimpsonRule};
use crate::space::{weighted_dot, LpElement};

/// Tolerance of the scaling law, relative to `max(1, |value|)`.
pub const SCALING_TOL: f64 = 1e-12;

pub trait ScaledFamily {
    /// `phi_n(t, l)`.
    fn eval(&self, t: f64, n: usize, l: usize) -> Result<f64>;

    /// The uniform limit `phi(t)` of `phi_n(t, n)`.
    fn limit(&self, t: f64) -> Result<f64>;

    /// `[phi_n(t, 0), ..., phi_n(t, l_max)]`.
    fn eval_sequence(&self, t: f64, n: usize, l_max: usize) -> Result<Vec<f64>> {
        (0..=l_max).map(|l| self.eval(t, n, l)).collect()
    }
}

/// A family given by two closures.
pub struct FnFamily<E, L> {
    eval: E,
    limit: L,
}

impl<E, L> FnFamily<E, L>
where
    E: Fn(f64, usize, usize) -> f64,
    L: Fn(f64) -> f64,
{
    pub fn new(eval: E, limit: L) -> Self {
        Self { eval, limit }
    }
}

impl<E, L> ScaledFamily for FnFamily<E, L>
where
    E: Fn(f64, usize, usize) -> f64,
    L: Fn(f64) -> f64,
{
    fn eval(&self, t: f64, n: usize, l: usize) -> Result<f64> {
        Ok((self.eval)(t, n, l))
    }

    fn limit(&self, t: f64) -> Result<f64> {
        Ok((self.limit)(t))
    }
}

/// `phi_n(t, l) = c`.
pub fn constant_family(c: f64) -> impl ScaledFamily {
    FnFamily::new(move |_, _, _| c, move |_| c)
}

/// `phi_n(t, l) = t l / n`, with limit `phi(t) = t`.
pub fn linear_family() -> impl ScaledFamily {
    FnFamily::new(|t, n, l| t * l as f64 / n as f64, |t| t)
}

/// `(1/(n-1)) sum_{l=1}^{n-1} phi_{n-1}(t, n-l) psi_{n-1}(t, l)`.
pub fn discrete_convolution_sum(phi: &dyn ScaledFamily, psi: &dyn ScaledFamily, t: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("convolution sum needs n >= 2, got {n}")));
    }
    let a = phi.eval_sequence(t, n - 1, n - 1)?;
    let b = psi.eval_sequence(t, n - 1, n - 1)?;
    let sum: f64 = (1..n).map(|l| a[n - l] * b[l]).sum();
    Ok(sum / (n - 1) as f64)
}

/// `int_0^1 phi(t(1-s)) psi(ts) ds` by composite Simpson.
pub fn limit_integral<F, G>(phi: F, psi: G, t: f64, panels: usize) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    simpson(|s| phi(t * (1.0 - s)) * psi(t * s), 0.0, 1.0, panels)
}

/// [`limit_integral`] of the limits of two families.
pub fn family_limit_integral(
    phi: &dyn ScaledFamily,
    psi: &dyn ScaledFamily,
    t: f64,
    panels: usize,
) -> Result<QuadResult> {
    let rule = SimpsonRule::new(0.0, 1.0, panels)?;
    let samples = (0..=panels)
        .map(|k| {
            let s = k as f64 * rule.step();
            Ok(phi.limit(t * (1.0 - s))? * psi.limit(t * s)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rule.integrate_samples(&samples))
}

/// `int_0^t phi(t-s) psi(s) ds`, which equals `t` times [`limit_integral`].
pub fn time_integral(phi: &dyn ScaledFamily, psi: &dyn ScaledFamily, t: f64, panels: usize) -> Result<QuadResult> {
    let rule = SimpsonRule::new(0.0, t, panels)?;
    let samples = (0..=panels)
        .map(|k| {
            let s = k as f64 * rule.step();
            Ok(phi.limit(t - s)? * psi.limit(s)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rule.integrate_samples(&samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub sum: f64,
    pub integral: f64,
    pub abs_error: f64,
    /// Observed order `log(e_prev / e) / log(n / n_prev)` (absent on the first row).
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub t: f64,
    pub integral_error_estimate: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Errors are nonincreasing down the table.
    pub monotone: bool,
    /// Mean of the observed orders.
    pub mean_rate: Option<f64>,
}

impl ConvergenceTable {
    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.abs_error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sum,integral,abs_error,rate\n");
        for r in &self.rows {
            let rate = r.rate.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", r.n, r.sum, r.integral, r.abs_error, rate));
        }
        out
    }
}

/// Errors of the discrete sums against the limit integral (`panels` Simpson panels).
pub fn convergence_study(
    phi: &dyn ScaledFamily,
    psi: &dyn ScaledFamily,
    t: f64,
    n_list: &[usize],
    panels: usize,
) -> Result<ConvergenceTable> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n list must be strictly ascending".into()));
    }
    let integral = family_limit_integral(phi, psi, t, panels)?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let sum = discrete_convolution_sum(phi, psi, t, n)?;
        let abs_error = (sum - integral.value).abs();
        let rate = rows.last().and_then(|prev| {
            (prev.abs_error > 0.0 && abs_error > 0.0)
                .then(|| (prev.abs_error / abs_error).ln() / (n as f64 / prev.n as f64).ln())
        });
        rows.push(ConvergenceRow { n, sum, integral: integral.value, abs_error, rate });
    }
    let monotone = rows.windows(2).all(|w| w[1].abs_error <= w[0].abs_error);
    let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate).collect();
    let mean_rate = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
    Ok(ConvergenceTable { t, integral_error_estimate: integral.error_estimate, rows, monotone, mean_rate })
}

/// Largest deviation `|phi_n(t, l) - phi_l(t l / n, l)| / max(1, |phi_n(t, l)|)`
/// over the given `(t, n, l)` points (`l >= 1`).
pub fn scaling_law_deviation(family: &dyn ScaledFamily, points: &[(f64, usize, usize)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(t, n, l) in points {
        if let Some(dev) = point_deviation(family, t, n, l)? {
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

fn point_deviation(family: &dyn ScaledFamily, t: f64, n: usize, l: usize) -> Result<Option<f64>> {
    if l == 0 || n == 0 {
        return Ok(None);
    }
    let direct = family.eval(t, n, l)?;
    let rescaled = family.eval(t * l as f64 / n as f64, l, l)?;
    Ok(Some((direct - rescaled).abs() / direct.abs().max(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Forward,
    Adjoint,
}

/// `phi_n(t, l) = <(I - tG/n)^{-l} vector, test>` (with `G^sigma` on the adjoint side).
pub struct ResolventPairingFamily {
    generator: Generator,
    vector: DVector<f64>,
    test: DVector<f64>,
}

/// Grid on which the scaling law is confirmed when a family is built.
const BUILD_GRID_T: [f64; 3] = [0.1, 1.0, 3.0];
const BUILD_GRID_N: [usize; 4] = [1, 2, 5, 16];

pub fn resolvent_pairing_family(
    g: &Generator,
    vector: &LpElement,
    test: &LpElement,
    side: Side,
) -> Result<ResolventPairingFamily> {
    g.space().check_same(vector.space())?;
    g.space().check_same(test.space())?;
    if let Some((row, col, value)) = positivity_check(g).violating_entry {
        return Err(Error::NotMetzler { row, col, value });
    }
    for v in [vector, test] {
        if let Some((index, &value)) = v.values().iter().enumerate().find(|(_, x)| **x < 0.0) {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let generator = match side {
        Side::Forward => g.clone(),
        Side::Adjoint => weighted_adjoint(g),
    };
    let family = ResolventPairingFamily { generator, vector: vector.values().clone(), test: test.values().clone() };
    for &t in &BUILD_GRID_T {
        for &n in &BUILD_GRID_N {
            for l in 1..=2 * n {
                if let Some(deviation) = point_deviation(&family, t, n, l)? {
                    if deviation > SCALING_TOL {
                        return Err(Error::ScalingLaw { t, n, l, deviation });
                    }
                }
            }
        }
    }
    Ok(family)
}

impl ResolventPairingFamily {
    fn pair(&self, v: &DVector<f64>) -> f64 {
        weighted_dot(self.generator.space().weights(), v.as_slice(), self.test.as_slice())
    }
}

impl ScaledFamily for ResolventPairingFamily {
    fn eval(&self, t: f64, n: usize, l: usize) -> Result<f64> {
        if l == 0 {
            return Ok(self.pair(&self.vector));
        }
        let step = EulerStep::new(&self.generator, t, n)?;
        Ok(self.pair(&step.apply_power(&self.vector, l)))
    }

    fn limit(&self, t: f64) -> Result<f64> {
        let e = self.generator.semigroup_matrix(t)?;
        Ok(self.pair(&(e * &self.vector)))
    }

    fn eval_sequence(&self, t: f64, n: usize, l_max: usize) -> Result<Vec<f64>> {
        let step = EulerStep::new(&self.generator, t, n)?;
        let mut x = self.vector.clone();
        let mut out = Vec::with_capacity(l_max + 1);
        out.push(self.pair(&x));
        for _ in 0..l_max {
            x = step.apply(&x);
            out.push(self.pair(&x));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Exponent, MeasureSpace};

    #[test]
    fn discrete_sum_examples() {
        let one = constant_family(1.0);
        assert_eq!(discrete_convolution_sum(&one, &one, 0.7, 5).unwrap(), 1.0);
        let lin = linear_family();
        assert!((discrete_convolution_sum(&lin, &one, 1.0, 5).unwrap() - 0.625).abs() < 1e-15);
        let big = discrete_convolution_sum(&lin, &one, 1.0, 10_000).unwrap();
        assert!((big - 1e4 / (2.0 * 9999.0)).abs() < 1e-12, "{big}");
        assert!((big - 0.50005).abs() < 1e-6);
        assert!(discrete_convolution_sum(&one, &one, 1.0, 1).is_err());
    }

    #[test]
    fn limit_integral_examples() {
        assert!((limit_integral(|_| 1.0, |_| 1.0, 3.0, 8).unwrap().value - 1.0).abs() < 1e-15);
        assert!((limit_integral(|s| s, |_| 1.0, 1.0, 8).unwrap().value - 0.5).abs() < 1e-15);
        assert!((limit_integral(|s| s, |s| s, 2.0, 8).unwrap().value - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn time_integral_is_t_times_unit_integral() {
        let lin = linear_family();
        let t = 2.5;
        let unit = family_limit_integral(&lin, &lin, t, 64).unwrap().value;
        let full = time_integral(&lin, &lin, t, 64).unwrap().value;
        assert!((full - t * unit).abs() < 1e-12);
    }

    #[test]
    fn linear_study_matches_closed_form() {
        let table = convergence_study(&linear_family(), &constant_family(1.0), 1.0, &[5, 10, 20, 40], 64).unwrap();
        for r in &table.rows {
            assert!((r.abs_error - 1.0 / (2.0 * (r.n as f64 - 1.0))).abs() < 1e-12);
        }
        assert!(table.monotone);
        let constant = convergence_study(&constant_family(1.0), &constant_family(1.0), 1.0, &[2, 3, 4], 8).unwrap();
        assert!(constant.rows.iter().all(|r| r.abs_error == 0.0));
        assert!(table.to_csv().starts_with("n,sum,integral,abs_error,rate\n5,"));
    }

    #[test]
    fn resolvent_family_examples() {
        let s = MeasureSpace::uniform(1).unwrap();
        let g = Generator::from_row_slice(&s, &[-1.0]).unwrap();
        let one = LpElement::ones(&s, Exponent::TWO);
        let fam = resolvent_pairing_family(&g, &one, &one, Side::Forward).unwrap();
        assert!((fam.eval(1.0, 2, 2).unwrap() - 4.0 / 9.0).abs() < 1e-15);

        let zero = Generator::zero(&s);
        let fam = resolvent_pairing_family(&zero, &one, &one, Side::Adjoint).unwrap();
        assert_eq!(fam.eval(2.0, 3, 7).unwrap(), 1.0);

        let s2 = MeasureSpace::uniform(2).unwrap();
        let g = Generator::from_row_slice(&s2, &[-1.0, 1.0, 1.0, -1.0]).unwrap();
        let e1 = LpElement::basis(&s2, 0, Exponent::TWO);
        let ones = LpElement::ones(&s2, Exponent::TWO);
        for side in [Side::Forward, Side::Adjoint] {
            let fam = resolvent_pairing_family(&g, &e1, &ones, side).unwrap();
            assert!((fam.limit(1.0).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sequence_agrees_with_pointwise_eval() {
        let s = MeasureSpace::new(vec![1.0, 2.0]).unwrap();
        let g = Generator::from_row_slice(&s, &[-1.0, 0.5, 2.0, -3.0]).unwrap();
        let v = LpElement::from_slice(&s, &[1.0, 0.5], Exponent::TWO).unwrap();
        let fam = resolvent_pairing_family(&g, &v, &v, Side::Adjoint).unwrap();
        let seq = fam.eval_sequence(0.8, 6, 9).unwrap();
        for (l, x) in seq.iter().enumerate() {
            assert!((x - fam.eval(0.8, 6, l).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_metzler_generator() {
        let s = MeasureSpace::uniform(2).unwrap();
        let g = Generator::from_row_slice(&s, &[-1.0, -1.0, 1.0, -1.0]).unwrap();
        let one = LpElement::ones(&s, Exponent::TWO);
        assert!(matches!(
            resolvent_pairing_family(&g, &one, &one, Side::Forward),
            Err(Error::NotMetzler { .. })
        ));
    }
}
