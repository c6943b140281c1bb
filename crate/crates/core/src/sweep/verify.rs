//! Energy-table and small-instance verifications.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_2_PI, SQRT_2};
use std::sync::Arc;

use super::run::SweepRow;
use crate::eigen::{dense_spectrum, lanczos_ground, SolverConfig, DEFAULT_DENSE_CAP};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, DEFAULT_DIMENSION_CAP};
use crate::grid::MomentumGrid;
use crate::hamiltonian::{active_mode_count, assemble_fiber, basis_for, coupling_coefficients, ModelParams, Variant};
use crate::report::Report;

/// Rows grouped by a bitwise key, each group sorted by `by`.
fn group_rows<'a>(
    rows: &'a [SweepRow],
    key: impl Fn(&SweepRow) -> (f64, f64),
    by: impl Fn(&SweepRow) -> f64,
) -> BTreeMap<(u64, u64), Vec<(usize, &'a SweepRow)>> {
    let mut g: BTreeMap<(u64, u64), Vec<(usize, &SweepRow)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let (a, b) = key(r);
        g.entry((a.to_bits(), b.to_bits())).or_default().push((i, r));
    }
    for v in g.values_mut() {
        v.sort_by(|x, y| by(x.1).total_cmp(&by(y.1)));
    }
    g
}

/// Least-squares fit `E ≈ e_inf + b / Λ`.
fn inverse_cutoff_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Within each `(α, |P|)` group: `E_Λ` non-increasing in `Λ` within
/// `tol`, and for `α > 0`, `|P| < √2` every decrement exceeds
/// `strict_margin`. Also reports the `1/Λ` extrapolation over the upper
/// half of the cutoffs (a heuristic at strong coupling).
pub fn verify_monotonicity(rows: &[SweepRow], tol: f64, strict_margin: f64) -> Result<Report> {
    let groups = group_rows(rows, |r| (r.alpha, r.p), |r| r.lambda);
    let mut rep = Report::new("monotonicity", rows.iter().map(|r| r.dim).max().unwrap_or(0));
    rep.tolerance("tol", tol).tolerance("strict_margin", strict_margin);
    if groups.is_empty() {
        return Err(Error::InvalidArgument("empty table".into()));
    }
    for g in groups.values() {
        let (alpha, p) = (g[0].1.alpha, g[0].1.p);
        if g.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "group alpha={alpha}, p={p} has fewer than two cutoffs"
            )));
        }
        let name = format!("alpha={alpha},p={p}");
        let mut monotone = true;
        let mut strict = true;
        let mut min_dec = f64::INFINITY;
        for w in g.windows(2) {
            let ((i, a), (j, b)) = (w[0], w[1]);
            let dec = a.e0 - b.e0;
            min_dec = min_dec.min(dec);
            if dec < -tol {
                monotone = false;
                rep.witness(format!("{name}.increase"), Some((i, j)), dec);
            }
            if dec <= strict_margin && alpha > 0.0 && p < SQRT_2 {
                strict = false;
                rep.witness(format!("{name}.not_strict"), Some((i, j)), dec);
            }
        }
        rep.verdict(format!("{name}.non_increasing"), monotone);
        if alpha > 0.0 && p < SQRT_2 {
            rep.verdict(format!("{name}.strict"), strict);
        }
        rep.detail(format!("{name}.min_decrement"), min_dec);
        let top: Vec<(f64, f64)> = g[g.len() / 2..].iter().map(|(_, r)| (r.lambda, r.e0)).collect();
        if let Some((e_inf, b)) = inverse_cutoff_fit(&top) {
            rep.detail(format!("{name}.fit_e_inf"), e_inf);
            rep.detail(format!("{name}.fit_b"), b);
        }
    }
    Ok(rep)
}

/// Within each `(α, Λ)` group: `E(0) ≤ E(P) ≤ E(0) + P²/2` and concavity
/// of `F(P) = E(P) - P²/2` over consecutive sample triples.
pub fn verify_dispersion(rows: &[SweepRow], tol: f64, concavity_tol: f64) -> Result<Report> {
    let groups = group_rows(rows, |r| (r.alpha, r.lambda), |r| r.p);
    let mut rep = Report::new("dispersion", rows.iter().map(|r| r.dim).max().unwrap_or(0));
    rep.tolerance("tol", tol).tolerance("concavity_tol", concavity_tol);
    if groups.is_empty() {
        return Err(Error::InvalidArgument("empty table".into()));
    }
    for g in groups.values() {
        let (alpha, lambda) = (g[0].1.alpha, g[0].1.lambda);
        let name = format!("alpha={alpha},lambda={lambda}");
        let e_zero = g
            .iter()
            .find(|(_, r)| r.p == 0.0)
            .map(|(_, r)| r.e0)
            .ok_or_else(|| Error::InvalidArgument(format!("group {name} has no P = 0 row")))?;
        let (mut lower, mut upper) = (true, true);
        for &(i, r) in g {
            if e_zero > r.e0 + tol {
                lower = false;
                rep.witness(format!("{name}.below_zero_momentum"), Some((i, i)), r.e0 - e_zero);
            }
            if r.e0 > e_zero + 0.5 * r.p * r.p + tol {
                upper = false;
                rep.witness(format!("{name}.above_free_bound"), Some((i, i)), r.e0 - e_zero - 0.5 * r.p * r.p);
            }
        }
        rep.verdict(format!("{name}.lower"), lower);
        rep.verdict(format!("{name}.upper"), upper);
        if g.len() < 3 {
            rep.note(format!("{name}: fewer than three momenta, concavity not checked"));
            continue;
        }
        let mut concave = true;
        let mut worst = f64::INFINITY;
        for w in g.windows(3) {
            let f = |r: &SweepRow| r.e0 - 0.5 * r.p * r.p;
            let (a, m, b) = (w[0].1, w[1].1, w[2].1);
            let s = (m.p - a.p) / (b.p - a.p);
            let chord = (1.0 - s) * f(a) + s * f(b);
            let excess = f(m) - chord;
            worst = worst.min(excess);
            if excess < -concavity_tol {
                concave = false;
                rep.witness(format!("{name}.concavity"), Some((w[0].0, w[2].0)), excess);
            }
        }
        rep.verdict(format!("{name}.concave"), concave);
        rep.detail(format!("{name}.concavity_margin"), worst);
    }
    Ok(rep)
}

/// Parameters of the small dense full-versus-local comparison.
#[derive(Debug, Clone)]
pub struct FiberInstance<'a> {
    pub grid: &'a MomentumGrid,
    pub alpha: f64,
    pub lambda: f64,
    pub n_max: usize,
}

/// Enumerate exterior configurations (sorted multisets over
/// `lo..hi`) of size at most `n`.
fn exterior_configs(lo: usize, hi: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for c in &frontier {
            let start = c.last().copied().unwrap_or(lo);
            for m in start..hi {
                let mut d: Vec<usize> = c.clone();
                d.push(m);
                next.push(d);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Full-variant energies against local ones. Exterior modes are
/// uncoupled, so the full matrix is block diagonal over exterior
/// configurations `q`, and
/// `E_full(P) = min_q [ 𝓔_loc^{(n_max-|q|)}(P - Σ_q k) + |q| ]`.
/// Reports that identity, the single-exterior-boson form
/// `min(𝓔_loc(P), min_k 𝓔_loc(P - k) + 1)`, and for `|P| < √2` that
/// `E_full(P) = 𝓔_loc(P)` with no ground-state weight on exterior bosons.
pub fn verify_fiber_decomposition(inst: &FiberInstance<'_>, p_list: &[f64], tol: f64) -> Result<Report> {
    let grid = inst.grid;
    let m_loc = active_mode_count(grid, inst.lambda, Variant::Local)?;
    let m_all = grid.len();
    let full_basis = Arc::new(basis_for(grid, inst.lambda, inst.n_max, Variant::Full, DEFAULT_DENSE_CAP)?);
    let mut rep = Report::new("fiber_decomposition", full_basis.dim());
    rep.tolerance("tol", tol);
    rep.detail("local_modes", m_loc as f64);
    rep.detail("exterior_modes", (m_all - m_loc) as f64);

    let local_bases: Vec<Option<Arc<FockBasis>>> = (0..=inst.n_max)
        .map(|n| {
            if m_loc == 0 {
                Ok(None)
            } else {
                Ok(Some(Arc::new(FockBasis::enumerate_capped(m_loc, n, DEFAULT_DIMENSION_CAP)?)))
            }
        })
        .collect::<Result<_>>()?;
    let local_energy = |q: [f64; 3], n: usize| -> Result<f64> {
        match &local_bases[n] {
            // No interior modes: only the bare electron remains.
            None => Ok(0.5 * (q[0] * q[0] + q[1] * q[1] + q[2] * q[2])),
            Some(b) => {
                let h = assemble_fiber(grid, b.clone(), &ModelParams::new(inst.alpha, q, inst.lambda)?, Variant::Local)?;
                Ok(dense_spectrum(&h.to_csr(), DEFAULT_DENSE_CAP, false)?.ground_energy())
            }
        }
    };
    let configs = exterior_configs(m_loc, m_all, inst.n_max);

    for &pz in p_list {
        let p = [0.0, 0.0, pz];
        let tag = format!("p={pz}");
        let h = assemble_fiber(grid, full_basis.clone(), &ModelParams::new(inst.alpha, p, inst.lambda)?, Variant::Full)?;
        let spec = dense_spectrum(&h.to_csr(), DEFAULT_DENSE_CAP, true)?;
        let e_full = spec.ground_energy();

        let e_loc = local_energy(p, inst.n_max)?;
        let mut best = f64::INFINITY;
        let mut best_single = e_loc;
        for q in &configs {
            let mut shifted = p;
            for &m in q {
                for d in 0..3 {
                    shifted[d] -= grid.modes[m].k[d];
                }
            }
            let e = local_energy(shifted, inst.n_max - q.len())? + q.len() as f64;
            best = best.min(e);
            if q.len() == 1 {
                best_single = best_single.min(e);
            }
        }
        rep.detail(format!("{tag}.e_full"), e_full);
        rep.detail(format!("{tag}.e_local"), e_loc);
        rep.detail(format!("{tag}.e_local_zero"), local_energy([0.0; 3], inst.n_max)?);
        rep.verdict(format!("{tag}.block_identity"), (e_full - best).abs() <= tol);
        rep.verdict(format!("{tag}.single_boson_form"), (e_full - best_single).abs() <= tol);

        if pz.abs() < SQRT_2 {
            let v = spec.ground_vector().expect("vectors requested");
            let weight: f64 = (0..full_basis.dim())
                .filter(|&s| full_basis.multiset(s).iter().any(|&m| m as usize >= m_loc))
                .map(|s| v[s] * v[s])
                .sum();
            rep.detail(format!("{tag}.exterior_weight"), weight);
            rep.detail(format!("{tag}.gap"), spec.gap());
            rep.verdict(format!("{tag}.equals_local"), (e_full - e_loc).abs() <= tol);
            rep.verdict(format!("{tag}.no_exterior_weight"), weight <= tol);
        }
    }
    Ok(rep)
}

/// Continuum second-order energy `-α (2/π) arctan(Λ/√2)` at `P = 0`.
pub fn continuum_second_order(alpha: f64, lambda: f64) -> f64 {
    -alpha * FRAC_2_PI * (lambda / SQRT_2).atan()
}

/// Second-order sum `-Σ c_i² / (½|k_i|² + 1)` on the grid at `P = 0`.
pub fn grid_second_order(grid: &MomentumGrid, alpha: f64, lambda: f64) -> Result<f64> {
    let c = coupling_coefficients(grid, &ModelParams::new(alpha, [0.0; 3], lambda)?)?;
    Ok(-grid
        .modes
        .iter()
        .zip(&c)
        .map(|(m, c)| c * c / (0.5 * m.norm().powi(2) + 1.0))
        .sum::<f64>())
}

/// Compare the `P = 0` local ground energy with the second-order sum:
/// `|e0 - E⁽²⁾| ≤ tol_factor α²` plus the solver residual. The continuum
/// value and the relative grid-to-continuum gap are reported, not
/// asserted.
pub fn verify_weak_coupling(
    grid: &MomentumGrid,
    alpha: f64,
    lambda: f64,
    n_max: usize,
    tol_factor: f64,
    solver: &SolverConfig,
) -> Result<Report> {
    if !(0.0..=0.1).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("weak-coupling check needs 0 <= alpha <= 0.1, got {alpha}")));
    }
    let basis = Arc::new(basis_for(grid, lambda, n_max, Variant::Local, DEFAULT_DIMENSION_CAP)?);
    let h = assemble_fiber(grid, basis, &ModelParams::new(alpha, [0.0; 3], lambda)?, Variant::Local)?;
    let res = lanczos_ground(&h.to_csr(), solver)?;
    let e2 = grid_second_order(grid, alpha, lambda)?;
    let cont = continuum_second_order(alpha, lambda);
    let mut rep = Report::new("weak_coupling", h.dim);
    rep.tolerance("bound", tol_factor * alpha * alpha);
    rep.detail("e0", res.e0);
    rep.detail("e2_grid", e2);
    rep.detail("e2_continuum", cont);
    rep.detail("residual", res.residual);
    rep.detail(
        "continuum_rel_gap",
        if cont != 0.0 { ((e2 - cont) / cont).abs() } else { 0.0 },
    );
    // The eigensolver is only accurate to its residual.
    rep.verdict("second_order", (res.e0 - e2).abs() <= tol_factor * alpha * alpha + res.residual);
    Ok(rep)
}
