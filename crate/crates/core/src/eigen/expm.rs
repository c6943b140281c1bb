//! Semigroup `e^{-tH}` by scaling and squaring with the degree-13 Padé
//! approximant, plus a cancellation-free variant for stoquastic matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::SymmetricOperator;

pub const DEFAULT_EXPM_CAP: usize = 2048;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` for a general real square matrix.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(n, a.ncols()));
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidArgument("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Dense `e^{-tH}`.
pub fn matrix_exponential<H: SymmetricOperator + ?Sized>(h: &H, t: f64, cap: usize) -> Result<DMatrix<f64>> {
    if h.dim() > cap {
        return Err(Error::DimensionCap {
            dim: h.dim() as u128,
            cap,
        });
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    let n = h.dim();
    if t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    expm(&(h.to_dense() * (-t)))
}

/// `e^{-tA}` for a matrix with nonpositive off-diagonal entries, computed
/// without cancellation.
///
/// Writing `A = mu - B` with `mu` the largest diagonal entry gives
/// `B >= 0` entrywise, so `e^{-tA} = e^{-t mu} e^{tB}` is a sum and product
/// of nonnegative matrices. Every entry is then accurate to a few ulps
/// relative to itself, and an entry is positive exactly when some path
/// of the off-diagonal graph connects its indices. The Padé route loses
/// such entries below roughly `1e-16` times the largest one.
pub fn positive_semigroup(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(n, a.ncols()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    if let Some((k, &v)) = a.iter().enumerate().find(|&(k, &v)| k % n != k / n && v > 0.0) {
        return Err(Error::OrderViolation {
            row: k % n,
            col: k / n,
            value: v,
        });
    }
    let mu = (0..n).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let b = DMatrix::from_diagonal_element(n, n, mu) - a;
    let norm = one_norm(&b) * t;
    let s = if norm > 0.5 { (2.0 * norm).log2().ceil() as i32 } else { 0 };
    let tb = b * (t * 2f64.powi(-s));

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = sum.clone();
    // Keep adding terms while they reach new entries or still move an
    // entry by more than one ulp; the cap covers the longest path.
    for k in 1..=n + 60 {
        term = &tb * &term / k as f64;
        let moving = term.iter().zip(sum.iter()).any(|(&d, &v)| d > f64::EPSILON * v);
        sum += &term;
        if !moving {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    Ok(sum * (-t * mu).exp())
}
