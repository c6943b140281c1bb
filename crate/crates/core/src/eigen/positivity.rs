use super::lanczos::SpectralResult;
use crate::error::{Error, Result};
use crate::report::Report;

/// Coordinates must exceed this after dividing by the largest coordinate.
pub const GROUND_STRICT_TOL: f64 = 1e-13;

/// Strict positivity of a non-degenerate ground vector.
///
/// The global sign is fixed so the largest-magnitude coordinate is
/// positive; every coordinate must then exceed `strict_tol` relative to
/// that maximum.
pub fn ground_positivity_check(res: &SpectralResult, strict_tol: f64) -> Result<Report> {
    if !(res.gap > 10.0 * res.residual) {
        return Err(Error::Degenerate {
            gap: res.gap,
            residual: res.residual,
        });
    }
    let v = &res.ground_vector;
    let (imax, vmax) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, &x)| (i, x))
        .ok_or_else(|| Error::InvalidArgument("empty ground vector".into()))?;
    let sign = if vmax < 0.0 { -1.0 } else { 1.0 };
    let scale = vmax.abs();
    let (imin, min_rel) = v
        .iter()
        .map(|&x| sign * x / scale)
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");

    let mut r = Report::new("ground_positivity", v.len());
    r.tolerance("strict_tol", strict_tol);
    r.verdict("non_degenerate", true);
    r.verdict("strictly_positive", min_rel > strict_tol);
    r.detail("min_normalized_coordinate", min_rel)
        .detail("gap", res.gap)
        .detail("residual", res.residual)
        .detail("max_index", imax as f64);
    r.witness("min_coordinate", Some((imin, imin)), min_rel);
    Ok(r)
}
