//! C ABI over `possg`.
//!
//! Objects are opaque handles created by `possg_*_new` and released with the
//! matching `possg_*_free`. Every function returns a [`PossgStatus`]; on a
//! nonzero status `possg_last_error_message` describes the failure. Vectors
//! are `double` arrays whose length is the space size, matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use possg::forms::{associated_generator, BilinearForm};
use possg::kernels::extract_kernel;
use possg::scenario::{parse_scenario, run_scenario, RunOptions};
use possg::{
    dual_pairing, euler_formula, growth_bound, lp_norm, positivity_check, resolvent_apply, semigroup_apply,
    weighted_adjoint, Error, Exponent, Generator, LpElement, MeasureSpace,
};

/// Result code of every `possg_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PossgStatus {
    Ok = 0,
    NullPointer = 1,
    /// Array sizes or spaces do not match.
    Dimension = 2,
    InvalidArgument = 3,
    NotMetzler = 4,
    /// A resolvent or Euler step could not be factorized.
    Singular = 5,
    /// Scenario JSON failed to parse or validate.
    Parse = 6,
    Failure = 7,
    /// A Rust panic was caught at the boundary; this is a bug.
    Panic = 8,
}

/// A finite measure space.
pub struct PossgSpace(MeasureSpace);

/// A square generator matrix on a measure space.
pub struct PossgGenerator(Generator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PossgStatus {
    match e {
        Error::EmptySpace | Error::DimensionMismatch { .. } | Error::SpaceMismatch => PossgStatus::Dimension,
        Error::NotMetzler { .. } => PossgStatus::NotMetzler,
        Error::NotInResolventSet { .. } | Error::EulerStepSingular { .. } => PossgStatus::Singular,
        Error::Parse { .. } | Error::Validation { .. } => PossgStatus::Parse,
        Error::ScalingLaw { .. } | Error::Io { .. } => PossgStatus::Failure,
        _ => PossgStatus::InvalidArgument,
    }
}

struct Fail(PossgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PossgStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PossgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PossgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            PossgStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

fn exponent(p: f64) -> Result<Exponent, Fail> {
    Ok(Exponent::new(p)?)
}

unsafe fn element(g: &Generator, u: *const f64, what: &str) -> Result<LpElement, Fail> {
    let values = input(u, g.dim(), what)?;
    Ok(LpElement::from_slice(g.space(), values, Exponent::TWO)?)
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `possg_*` call on the same thread.
#[no_mangle]
pub extern "C" fn possg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `weights` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn possg_space_new(weights: *const f64, len: usize, out: *mut *mut PossgSpace) -> PossgStatus {
    guard(|| {
        let w = input(weights, len, "weights")?;
        let space = MeasureSpace::new(w.to_vec())?;
        write(out, boxed(PossgSpace(space)), "out")
    })
}

/// # Safety
/// `space` must come from `possg_space_new` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn possg_space_free(space: *mut PossgSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of atoms, or 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn possg_space_len(space: *const PossgSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.len())
}

/// `sum_i f_i g_i m_i`.
///
/// # Safety
/// `f` and `g` must point to `possg_space_len(space)` doubles.
#[no_mangle]
pub unsafe extern "C" fn possg_dual_pairing(
    space: *const PossgSpace,
    f: *const f64,
    g: *const f64,
    out: *mut f64,
) -> PossgStatus {
    guard(|| {
        let s = &handle(space, "space")?.0;
        let n = s.len();
        let f = LpElement::from_slice(s, input(f, n, "f")?, Exponent::TWO)?;
        let g = LpElement::from_slice(s, input(g, n, "g")?, Exponent::TWO)?;
        write(out, dual_pairing(&f, &g)?, "out")
    })
}

/// Weighted `l^p` norm; `p = INFINITY` gives the max norm.
///
/// # Safety
/// `u` must point to `possg_space_len(space)` doubles.
#[no_mangle]
pub unsafe extern "C" fn possg_lp_norm(space: *const PossgSpace, u: *const f64, p: f64, out: *mut f64) -> PossgStatus {
    guard(|| {
        let s = &handle(space, "space")?.0;
        let p = exponent(p)?;
        let u = LpElement::from_slice(s, input(u, s.len(), "u")?, p)?;
        write(out, lp_norm(&u, p), "out")
    })
}

/// Generator from an `n x n` row-major matrix. Metzler structure is not required here.
///
/// # Safety
/// `matrix` must point to `n * n` doubles where `n = possg_space_len(space)`.
#[no_mangle]
pub unsafe extern "C" fn possg_generator_new(
    space: *const PossgSpace,
    matrix: *const f64,
    out: *mut *mut PossgGenerator,
) -> PossgStatus {
    guard(|| {
        let s = &handle(space, "space")?.0;
        let n = s.len();
        let g = Generator::from_row_slice(s, input(matrix, n * n, "matrix")?)?;
        write(out, boxed(PossgGenerator(g)), "out")
    })
}

/// Generator associated with the bilinear form with row-major coefficients `coeffs`.
///
/// # Safety
/// `coeffs` must point to `n * n` doubles where `n = possg_space_len(space)`.
#[no_mangle]
pub unsafe extern "C" fn possg_generator_from_form(
    space: *const PossgSpace,
    coeffs: *const f64,
    out: *mut *mut PossgGenerator,
) -> PossgStatus {
    guard(|| {
        let s = &handle(space, "space")?.0;
        let n = s.len();
        let form = BilinearForm::from_row_slice(s, input(coeffs, n * n, "coeffs")?)?;
        write(out, boxed(PossgGenerator(associated_generator(&form))), "out")
    })
}

/// # Safety
/// `g` must come from a `possg_generator_*` constructor and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn possg_generator_free(g: *mut PossgGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Copies the row-major matrix into `out` (`n * n` doubles).
///
/// # Safety
/// `out` must have room for `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn possg_generator_matrix(g: *const PossgGenerator, out: *mut f64) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        let n = g.dim();
        let dst = output(out, n * n, "out")?;
        for (k, v) in dst.iter_mut().enumerate() {
            *v = g.matrix()[(k / n, k % n)];
        }
        Ok(())
    })
}

/// `out = exp(tG) u`.
///
/// # Safety
/// `u` and `out` must point to `n` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn possg_semigroup_apply(
    g: *const PossgGenerator,
    t: f64,
    u: *const f64,
    out: *mut f64,
) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        let r = semigroup_apply(g, t, &element(g, u, "u")?)?;
        output(out, g.dim(), "out")?.copy_from_slice(r.values().as_slice());
        Ok(())
    })
}

/// `out = (lambda - G)^{-power} u`.
///
/// # Safety
/// `u` and `out` must point to `n` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn possg_resolvent_apply(
    g: *const PossgGenerator,
    lambda: f64,
    power: usize,
    u: *const f64,
    out: *mut f64,
) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        let r = resolvent_apply(g, lambda, &element(g, u, "u")?, power)?;
        output(out, g.dim(), "out")?.copy_from_slice(r.values().as_slice());
        Ok(())
    })
}

/// `out = (I - tG/n)^{-n} u`.
///
/// # Safety
/// `u` and `out` must point to `dim` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn possg_euler_formula(
    g: *const PossgGenerator,
    t: f64,
    n: usize,
    u: *const f64,
    out: *mut f64,
) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        let r = euler_formula(g, t, n, &element(g, u, "u")?)?;
        output(out, g.dim(), "out")?.copy_from_slice(r.values().as_slice());
        Ok(())
    })
}

/// New handle holding the adjoint of `g` for the weighted pairing.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn possg_weighted_adjoint(g: *const PossgGenerator, out: *mut *mut PossgGenerator) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        write(out, boxed(PossgGenerator(weighted_adjoint(g))), "out")
    })
}

/// Sets `is_metzler` to 1 if every off-diagonal entry is nonnegative, else 0.
///
/// # Safety
/// `is_metzler` must be writable.
#[no_mangle]
pub unsafe extern "C" fn possg_positivity_check(g: *const PossgGenerator, is_metzler: *mut c_int) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        write(is_metzler, c_int::from(positivity_check(g).is_metzler), "is_metzler")
    })
}

/// `||exp(tG)||_{q -> q} <= m exp(omega t)`.
///
/// # Safety
/// `m` and `omega` must be writable.
#[no_mangle]
pub unsafe extern "C" fn possg_growth_bound(
    g: *const PossgGenerator,
    q: f64,
    m: *mut f64,
    omega: *mut f64,
) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        let b = growth_bound(g, exponent(q)?)?;
        write(m, b.m, "m")?;
        write(omega, b.omega, "omega")
    })
}

/// Heat kernel `k(t, x, y)` written row-major into `out` (`n * n` doubles).
///
/// # Safety
/// `out` must have room for `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn possg_extract_kernel(g: *const PossgGenerator, t: f64, out: *mut f64) -> PossgStatus {
    guard(|| {
        let g = &handle(g, "g")?.0;
        let k = extract_kernel(g, t)?;
        let n = g.dim();
        let dst = output(out, n * n, "out")?;
        for (i, v) in dst.iter_mut().enumerate() {
            *v = k.entry(i / n, i % n);
        }
        Ok(())
    })
}

/// Runs a scenario given as JSON text. On success `*report` holds the report JSON,
/// to be released with `possg_string_free`, and `*passed` is 1 if every check passed.
/// `seed` overrides the scenario seed when `has_seed` is nonzero.
///
/// # Safety
/// `json` must be a nul-terminated string; `report` and `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn possg_run_scenario_json(
    json: *const c_char,
    seed: u64,
    has_seed: c_int,
    report: *mut *mut c_char,
    passed: *mut c_int,
) -> PossgStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if report.is_null() {
            return Err(null("report"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(PossgStatus::InvalidArgument, format!("scenario is not UTF-8: {e}")))?;
        let s = parse_scenario(text, "<json>")?;
        let opts = RunOptions { seed: (has_seed != 0).then_some(seed), ..Default::default() };
        let outcome = run_scenario(&s, &opts)?;
        write(passed, c_int::from(outcome.report.passed), "passed")?;
        let c = CString::new(outcome.report.to_json()).expect("report JSON has no nul bytes");
        report.write(c.into_raw());
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn possg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn possg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
