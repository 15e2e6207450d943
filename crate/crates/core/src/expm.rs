//! Dense matrix exponential by scaling and squaring with a fixed-order
//! diagonal Padé approximant (degree 13).
//!
//! The scaling parameter is chosen so that `||A / 2^s||_1 <= THETA_13`
//! (Higham, 2005). The approximant is evaluated with the usual even/odd
//! split `r(A) = (V - U)^{-1} (V + U)`.

use nalgebra::DMatrix;

const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

pub(crate) fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(a)` for a square matrix. Panics if `a` is not square.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }

    let norm = one_norm(a);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let squarings = if norm > THETA_13 { (norm / THETA_13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = a * 2f64.powi(-squarings);

    let mut result = pade13(&scaled);
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn pade13(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let b = &PADE_13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_outer = &a6 * &u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = a * u_outer;

    let v_inner = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * &v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    q.lu().solve(&p).expect("Padé denominator is nonsingular for ||A||_1 <= theta_13")
}
