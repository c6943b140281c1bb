//! Sparse fiber Hamiltonians on a truncated Fock space and their
//! structural checks.
//!
//! At total momentum `P` the matrix is
//! `½|P - Σ n_i k_i|² + Σ n_i` on the diagonal and `-c_i √(n_i + 1)`
//! between states that differ by one boson in mode `i`. Only the lower
//! triangle is stored.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{all_entries_positive, is_ergodic, OperatorMatrix, Relation};
use crate::eigen::{dense_spectrum_of, matrix_exponential, positive_semigroup, DEFAULT_DENSE_CAP};
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::grid::MomentumGrid;
use crate::report::Report;
use crate::sparse::{CsrMatrix, SymmetricOperator};

/// `λ₀ = 2^{1/4} / (2π)`.
pub const LAMBDA0: f64 = 0.189_268_190_712_735_1;

/// Largest dimension handled by the dense verification paths.
pub const DENSE_CHECK_CAP: usize = 512;

/// Slack when comparing a cutoff with the grid radius.
const CUTOFF_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    /// Total momentum.
    pub p: [f64; 3],
    /// Ultraviolet cutoff.
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, p: [f64; 3], lambda: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be a finite nonnegative number, got {alpha}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("cutoff must be positive, got {lambda}")));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("total momentum must be finite".into()));
        }
        Ok(ModelParams { alpha, p, lambda })
    }

    /// Total momentum `(0, 0, pz)`.
    pub fn along_z(alpha: f64, pz: f64, lambda: f64) -> Result<Self> {
        Self::new(alpha, [0.0, 0.0, pz], lambda)
    }

    pub fn lambda0(&self) -> f64 {
        LAMBDA0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Every grid mode carries energy and momentum; coupling is masked at
    /// the cutoff.
    Full,
    /// Only modes with `|k| ≤ Λ` are present.
    Local,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Local => "local",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Variant::Full),
            "local" => Ok(Variant::Local),
            other => Err(Error::Config(format!("unknown variant '{other}' (expected full or local)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_cutoff(grid: &MomentumGrid, lambda: f64) -> Result<()> {
    if lambda > grid.lambda_max * (1.0 + CUTOFF_SLACK) {
        return Err(Error::InvalidArgument(format!(
            "cutoff {lambda} exceeds grid support {}",
            grid.lambda_max
        )));
    }
    Ok(())
}

/// Per-mode couplings `c_i = √α λ₀ I_i / √w_i` for `|k_i| ≤ Λ`, else 0.
pub fn coupling_coefficients(grid: &MomentumGrid, params: &ModelParams) -> Result<Vec<f64>> {
    check_cutoff(grid, params.lambda)?;
    let s = params.alpha.sqrt() * LAMBDA0;
    Ok(grid
        .modes
        .iter()
        .map(|m| {
            if m.norm() <= params.lambda {
                s * m.coupling_integral / m.weight.sqrt()
            } else {
                0.0
            }
        })
        .collect())
}

/// Number of grid modes the basis of `variant` must span. Modes are
/// sorted by `|k|`, so the local mode set is a prefix of the grid.
pub fn active_mode_count(grid: &MomentumGrid, lambda: f64, variant: Variant) -> Result<usize> {
    check_cutoff(grid, lambda)?;
    Ok(match variant {
        Variant::Full => grid.len(),
        Variant::Local => grid.modes.partition_point(|m| m.norm() <= lambda),
    })
}

/// Fock basis over the modes `variant` uses at cutoff `lambda`.
pub fn basis_for(grid: &MomentumGrid, lambda: f64, n_max: usize, variant: Variant, cap: usize) -> Result<FockBasis> {
    let m = active_mode_count(grid, lambda, variant)?;
    if m == 0 {
        return Err(Error::InvalidArgument(format!("no grid modes within cutoff {lambda}")));
    }
    FockBasis::enumerate_capped(m, n_max, cap)
}

/// Diagonal entry `½|P - Σ n_i k_i|² + Σ n_i` for a sorted mode list.
fn diagonal_entry(ms: &[u16], momenta: &[[f64; 3]], p: &[f64; 3]) -> f64 {
    let mut q = *p;
    for &i in ms {
        let k = &momenta[i as usize];
        q[0] -= k[0];
        q[1] -= k[1];
        q[2] -= k[2];
    }
    0.5 * (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) + ms.len() as f64
}

#[derive(Debug, Clone)]
pub struct FiberHamiltonian {
    pub dim: usize,
    /// Lower-triangle triplets sorted by `(row, col)`.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
    pub params: ModelParams,
    pub variant: Variant,
    pub grid_id: String,
    pub basis_id: String,
    pub basis: Arc<FockBasis>,
    /// Momenta of the basis modes, in basis order.
    pub momenta: Vec<[f64; 3]>,
    /// Couplings of the basis modes.
    pub couplings: Vec<f64>,
}

/// Assemble `H_Λ(P)` (`Full`) or `K_Λ(P)` (`Local`) over `basis`.
/// Rows are split across workers and concatenated in order, so the
/// triplet stream does not depend on the worker count.
pub fn assemble_fiber(
    grid: &MomentumGrid,
    basis: Arc<FockBasis>,
    params: &ModelParams,
    variant: Variant,
) -> Result<FiberHamiltonian> {
    let m = active_mode_count(grid, params.lambda, variant)?;
    if basis.mode_count() != m {
        return Err(Error::BasisMismatch {
            expected: m,
            found: basis.mode_count(),
        });
    }
    let couplings: Vec<f64> = coupling_coefficients(grid, params)?[..m].to_vec();
    let momenta: Vec<[f64; 3]> = grid.modes[..m].iter().map(|md| md.k).collect();
    let dim = basis.dim();

    const CHUNK: usize = 4096;
    let chunks: Vec<(Vec<usize>, Vec<usize>, Vec<f64>)> = (0..dim.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(dim);
            let mut rows = Vec::new();
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for p in lo..hi {
                // Removing one boson from p gives q < p, so the hopping
                // entries sit left of the diagonal in ascending column order.
                for (q, mode, amp) in basis.annihilation_neighbors(p) {
                    let c = couplings[mode];
                    if c != 0.0 {
                        rows.push(p);
                        cols.push(q);
                        vals.push(-c * amp);
                    }
                }
                rows.push(p);
                cols.push(p);
                vals.push(diagonal_entry(basis.multiset(p), &momenta, &params.p));
            }
            (rows, cols, vals)
        })
        .collect();

    let nnz: usize = chunks.iter().map(|c| c.0.len()).sum();
    let mut rows = Vec::with_capacity(nnz);
    let mut cols = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for (r, c, v) in chunks {
        rows.extend(r);
        cols.extend(c);
        values.extend(v);
    }
    Ok(FiberHamiltonian {
        dim,
        rows,
        cols,
        values,
        params: *params,
        variant,
        grid_id: grid.id(),
        basis_id: basis.id(),
        basis,
        momenta,
        couplings,
    })
}

impl FiberHamiltonian {
    /// Stored (lower-triangle) entry count.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_lower_triplets(self.dim, &self.rows, &self.cols, &self.values)
            .expect("assembled triplets are lower-triangular and in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            d[(r, c)] = v;
            d[(c, r)] = v;
        }
        d
    }

    /// Flip the sign of the first off-diagonal entry, returning its
    /// position. Used to exercise the checks.
    pub fn inject_sign_fault(&mut self) -> Option<(usize, usize)> {
        let k = (0..self.nnz()).find(|&k| self.rows[k] != self.cols[k] && self.values[k] != 0.0)?;
        self.values[k] = -self.values[k];
        Some((self.rows[k], self.cols[k]))
    }

    /// Coordinate-triplet text: `# dim nnz variant`, then `row col value`.
    pub fn write_triplets(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {} {} {}", self.dim, self.nnz(), self.variant)?;
        let mut line = String::new();
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            line.clear();
            writeln!(line, "{r} {c} {v:.16e}").unwrap();
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Off-diagonal signs and the closed-form diagonal of an assembled matrix.
/// The diagonal is recomputed from occupation vectors, independently of
/// the assembly path.
pub fn stoquastic_check(h: &FiberHamiltonian) -> Report {
    let mut r = Report::new("stoquastic", h.dim);
    r.tolerance("diagonal_rel", 1e-12);
    let mut signs_ok = true;
    let mut diag_ok = true;
    let mut worst_rel: f64 = 0.0;
    let mut diag_seen = 0usize;
    for ((&row, &col), &v) in h.rows.iter().zip(&h.cols).zip(&h.values) {
        if row != col {
            if v > 0.0 && signs_ok {
                signs_ok = false;
                r.witness("positive_off_diagonal", Some((row, col)), v);
            }
            continue;
        }
        diag_seen += 1;
        let s = h.basis.state(row);
        let mut q = h.params.p;
        let mut n = 0.0;
        for (i, &ni) in s.occupations.iter().enumerate() {
            let f = f64::from(ni);
            for d in 0..3 {
                q[d] -= f * h.momenta[i][d];
            }
            n += f;
        }
        let expect = 0.5 * (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) + n;
        let rel = (v - expect).abs() / expect.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
        if rel > 1e-12 && diag_ok {
            diag_ok = false;
            r.witness("diagonal_mismatch", Some((row, row)), v - expect);
        }
    }
    r.verdict("off_diagonal_nonpositive", signs_ok);
    r.verdict("diagonal_closed_form", diag_ok && diag_seen == h.dim);
    r.detail("diagonal_worst_rel", worst_rel);
    r
}

/// `e^{-tH} ⊵ 0` at each `t`, and `e^{-tH} ⊳ 0` when the hopping graph is
/// connected.
pub fn semigroup_positivity_check(h: &FiberHamiltonian, t_samples: &[f64], tol: f64) -> Result<Report> {
    if h.dim > DENSE_CHECK_CAP {
        return Err(Error::DimensionCap {
            dim: h.dim as u128,
            cap: DENSE_CHECK_CAP,
        });
    }
    let dense = h.to_dense();
    let pattern = DMatrix::from_fn(h.dim, h.dim, |i, j| if i != j { dense[(i, j)].abs() } else { 0.0 });
    let connected = is_ergodic(&OperatorMatrix::symmetric(pattern)?)?;
    let mut r = Report::new("semigroup_positivity", h.dim);
    r.tolerance("nonnegative", tol);
    r.detail("connected", if connected { 1.0 } else { 0.0 });
    let signs_ok = (0..h.dim).all(|i| (0..h.dim).all(|j| i == j || dense[(i, j)] <= 0.0));
    for &t in t_samples {
        let e = matrix_exponential(&dense, t, DENSE_CHECK_CAP)?;
        let (pos, min) = e
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
        r.detail(format!("min_entry.t={t}"), min);
        r.verdict(format!("nonnegative.t={t}"), min >= -tol);
        if min < -tol {
            r.witness(format!("negative.t={t}"), Some((pos % h.dim, pos / h.dim)), min);
        }
        if connected && signs_ok {
            let exact = positive_semigroup(&dense, t)?;
            r.detail(format!("min_positive_entry.t={t}"), exact.min());
            r.verdict(format!("strictly_positive.t={t}"), all_entries_positive(&exact));
        }
    }
    Ok(r)
}

/// Lower-triangle difference `a - b` of two matrices on the same basis.
fn sparse_difference(a: &FiberHamiltonian, b: &FiberHamiltonian) -> Vec<(usize, usize, f64)> {
    let key = |h: &FiberHamiltonian, k: usize| (h.rows[k], h.cols[k]);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.nnz() || j < b.nnz() {
        let ka = (i < a.nnz()).then(|| key(a, i));
        let kb = (j < b.nnz()).then(|| key(b, j));
        match (ka, kb) {
            (Some(x), Some(y)) if x == y => {
                out.push((x.0, x.1, a.values[i] - b.values[j]));
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push((x.0, x.1, a.values[i]));
                i += 1;
            }
            (Some(x), None) => {
                out.push((x.0, x.1, a.values[i]));
                i += 1;
            }
            (_, Some(y)) => {
                out.push((y.0, y.1, -b.values[j]));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// For consecutive cutoffs `Λ ≤ Λ'` on a shared full-variant basis:
/// `H_Λ - H_Λ'` has zero diagonal, nonnegative entries, and is supported
/// on hops through modes in the shell `Λ < |k| ≤ Λ'`.
pub fn interaction_monotonicity_check(
    grid: &MomentumGrid,
    basis: Arc<FockBasis>,
    alpha: f64,
    p: [f64; 3],
    lambdas: &[f64],
) -> Result<Report> {
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("cutoffs must be increasing".into()));
    }
    let hs: Vec<FiberHamiltonian> = lambdas
        .iter()
        .map(|&l| assemble_fiber(grid, basis.clone(), &ModelParams::new(alpha, p, l)?, Variant::Full))
        .collect::<Result<_>>()?;
    let mut r = Report::new("interaction_monotonicity", basis.dim());
    r.tolerance("order", 0.0);
    for (idx, pair) in hs.windows(2).enumerate() {
        let (lo, hi) = (&pair[0], &pair[1]);
        let (l0, l1) = (lo.params.lambda, hi.params.lambda);
        let diff = sparse_difference(lo, hi);
        let mut diag_zero = true;
        let mut min = 0.0f64;
        let mut min_at = None;
        let mut shell_only = true;
        for &(row, col, v) in &diff {
            if row == col {
                diag_zero &= v == 0.0;
                continue;
            }
            if v < min {
                min = v;
                min_at = Some((row, col));
            }
            if v != 0.0 {
                let mode = hop_mode(&basis, row, col);
                let k = grid.modes[mode].norm();
                shell_only &= k > l0 && k <= l1;
            }
        }
        let relation = if min >= 0.0 { Relation::Dominates } else { Relation::Incomparable };
        let name = format!("pair{idx}");
        r.verdict(format!("{name}.diagonal_zero"), diag_zero);
        r.verdict(format!("{name}.dominates"), relation == Relation::Dominates);
        r.verdict(format!("{name}.shell_support"), shell_only);
        r.detail(format!("{name}.min_entry"), min);
        if let Some(at) = min_at {
            r.witness(format!("{name}.negative"), Some(at), min);
        }
    }
    Ok(r)
}

/// Mode whose boson distinguishes neighbouring states `row > col`.
fn hop_mode(basis: &FockBasis, row: usize, col: usize) -> usize {
    let (a, b) = (basis.multiset(row), basis.multiset(col));
    let mut j = 0;
    for &m in a {
        if j < b.len() && b[j] == m {
            j += 1;
        } else {
            return m as usize;
        }
    }
    unreachable!("states {row} and {col} are not neighbours")
}

/// Dense `a(f)` (annihilation) on `basis`.
fn smeared_annihilation(basis: &FockBasis, f: &[f64]) -> DMatrix<f64> {
    let n = basis.dim();
    let mut m = DMatrix::zeros(n, n);
    for p in 0..n {
        for (q, mode, amp) in basis.annihilation_neighbors(p) {
            m[(q, p)] += f[mode] * amp;
        }
    }
    m
}

/// Field-operator bounds on truncated spaces, for each `n_max`:
///
/// * `a(f)† a(f) ≤ ‖f‖² N` and `a(f) a(f)† ≤ ‖f‖² (N + 1)`;
/// * `a(f)† a(f) ≤ ‖a^{-1/2} f‖² (dΓ(a) + 1)`;
/// * `dΓ(a) + a(f) + a(f)† ≥ -‖a^{-1/2} f‖²`.
pub fn verify_field_bounds(a: &[f64], f: &[f64], n_max_list: &[usize], tol: f64) -> Result<Report> {
    if a.len() != f.len() {
        return Err(Error::DimensionMismatch(a.len(), f.len()));
    }
    if let Some(bad) = a.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!("one-body entry {bad} must be positive")));
    }
    let f_norm2: f64 = f.iter().map(|x| x * x).sum();
    let weighted: f64 = f.iter().zip(a).map(|(x, y)| x * x / y).sum();
    let mut r = Report::new("field_bounds", 0);
    r.tolerance("bound", tol);
    r.detail("f_norm2", f_norm2);
    r.detail("weighted_norm2", weighted);
    for &n_max in n_max_list {
        let basis = FockBasis::enumerate(a.len(), n_max)?;
        let n = basis.dim();
        if n > DEFAULT_DENSE_CAP {
            return Err(Error::DimensionCap {
                dim: n as u128,
                cap: DEFAULT_DENSE_CAP,
            });
        }
        r.dim = r.dim.max(n);
        let number = basis.dgamma_diagonal(&vec![1.0; a.len()])?;
        let dga = basis.dgamma_diagonal(a)?;
        let af = smeared_annihilation(&basis, f);
        let afd = af.transpose();
        let lo = |m: &DMatrix<f64>| -> Result<f64> { Ok(dense_spectrum_of(m, DEFAULT_DENSE_CAP, false)?.values[0]) };
        let tag = format!("n_max={n_max}");

        // ‖f‖² N - a†a ≥ 0 and ‖f‖²(N+1) - a a† ≥ 0.
        let ann = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, number.iter().map(|&x| f_norm2 * x)))
            - &afd * &af;
        let cre = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            number.iter().map(|&x| f_norm2 * (x + 1.0)),
        )) - &af * &afd;
        let (e_ann, e_cre) = (lo(&ann)?, lo(&cre)?);
        r.detail(format!("standard_annihilation.{tag}"), e_ann);
        r.detail(format!("standard_creation.{tag}"), e_cre);
        r.verdict(format!("standard_annihilation.{tag}"), e_ann >= -tol);
        r.verdict(format!("standard_creation.{tag}"), e_cre >= -tol);

        let relative = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            dga.iter().map(|&x| weighted * (x + 1.0)),
        )) - &afd * &af;
        let e_rel = lo(&relative)?;
        r.detail(format!("relative.{tag}"), e_rel);
        r.verdict(format!("relative.{tag}"), e_rel >= -tol);

        let linear = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(dga)) + &af + &afd;
        let e_lin = lo(&linear)?;
        r.detail(format!("linear.{tag}"), e_lin);
        r.verdict(format!("linear.{tag}"), e_lin >= -weighted - tol);
    }
    Ok(r)
}

/// Terms `D_0(t), …, D_J(t)` of the interaction expansion of `e^{-tK}`
/// with `K = L - V`, `L` diagonal and `V ≥ 0`:
/// `D_0 = e^{-tL}`, `D_j(t) = ∫_0^t e^{-(t-s)L} V D_{j-1}(s) ds`.
///
/// The stacked `Y_j' = -L Y_j + V Y_{j-1}` is integrated exactly by
/// shifting `L` to `μ - B` with `B ≥ 0` and summing the Taylor series of a
/// nonnegative generator over short steps, so no term involves
/// cancellation.
pub fn duhamel_terms(k: &DMatrix<f64>, t: f64, order: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(Error::DimensionMismatch(n, k.ncols()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let ldiag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
    let mu = ldiag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b: Vec<f64> = ldiag.iter().map(|&l| mu - l).collect();
    let vrows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && k[(i, j)] != 0.0)
                .map(|j| (j, -k[(i, j)]))
                .collect()
        })
        .collect();
    if let Some((i, &(j, v))) = vrows.iter().enumerate().find_map(|(i, r)| r.iter().find(|e| e.1 < 0.0).map(|e| (i, e))) {
        return Err(Error::OrderViolation { row: i, col: j, value: -v });
    }
    let v_norm = vrows.iter().map(|r| r.iter().map(|e| e.1).sum::<f64>()).fold(0.0, f64::max);
    let b_norm = b.iter().copied().fold(0.0, f64::max);
    let gen_norm = b_norm + v_norm;

    let steps = ((t * gen_norm).ceil() as usize).max(1);
    let tau = t / steps as f64;
    let decay = (-mu * tau).exp();

    // y[j] is Y_j stored column-major as a dense matrix.
    let mut y: Vec<DMatrix<f64>> = (0..=order).map(|_| DMatrix::zeros(n, n)).collect();
    y[0] = DMatrix::identity(n, n);
    let apply = |src: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> {
        (0..=order)
            .into_par_iter()
            .map(|j| {
                let mut out = DMatrix::zeros(n, n);
                for c in 0..n {
                    for i in 0..n {
                        let mut acc = b[i] * src[j][(i, c)];
                        if j > 0 {
                            for &(l, v) in &vrows[i] {
                                acc += v * src[j - 1][(l, c)];
                            }
                        }
                        out[(i, c)] = acc;
                    }
                }
                out
            })
            .collect()
    };
    for _ in 0..steps {
        let mut sum = y.clone();
        let mut term = y.clone();
        let mut m = 1usize;
        loop {
            let next = apply(&term);
            let scale = tau / m as f64;
            term = next.into_iter().map(|x| x * scale).collect();
            let mut biggest = 0.0f64;
            for (s, tm) in sum.iter_mut().zip(&term) {
                *s += tm;
                biggest = biggest.max(tm.amax());
            }
            let total = sum.iter().map(|s| s.amax()).fold(0.0, f64::max);
            m += 1;
            if biggest <= f64::EPSILON * 1e-3 * total || m > 200 {
                break;
            }
        }
        y = sum.into_iter().map(|s| s * decay).collect();
    }
    Ok(y)
}

/// Expansion check for `e^{-tK}`: every `D_j ⊵ 0` and the partial sum
/// through `J` matches the exponential within the series tail
/// `(t‖V‖)^{J+1}/(J+1)! e^{t‖V‖}` plus `slack`.
pub fn duhamel_check(k: &FiberHamiltonian, t: f64, order: usize, tol: f64, slack: f64) -> Result<Report> {
    if k.dim > DENSE_CHECK_CAP {
        return Err(Error::DimensionCap {
            dim: k.dim as u128,
            cap: DENSE_CHECK_CAP,
        });
    }
    duhamel_check_dense(&k.to_dense(), t, order, tol, slack)
}

pub fn duhamel_check_dense(k: &DMatrix<f64>, t: f64, order: usize, tol: f64, slack: f64) -> Result<Report> {
    let n = k.nrows();
    let terms = duhamel_terms(k, t, order)?;
    let v_norm = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| k[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let x = t * v_norm;
    let tail = x.powi(order as i32 + 1) / factorial(order + 1) * x.exp();
    let exact = matrix_exponential(k, t, DENSE_CHECK_CAP)?;
    let mut partial = DMatrix::zeros(n, n);
    let mut r = Report::new("duhamel", n);
    r.tolerance("term_nonnegative", tol);
    r.tolerance("slack", slack);
    r.detail("t", t);
    r.detail("tail_bound", tail);
    let mut all_nonneg = true;
    for (j, d) in terms.iter().enumerate() {
        let min = d.min();
        r.detail(format!("min_entry.D{j}"), min);
        if min < -tol {
            all_nonneg = false;
            r.witness(format!("negative.D{j}"), None, min);
        }
        partial += d;
    }
    let err = (&partial - &exact).amax();
    r.detail("partial_sum_error", err);
    r.verdict("terms_nonnegative", all_nonneg);
    r.verdict("partial_sum_within_tail", err <= tail + slack);
    Ok(r)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Dense matrix of a fiber Hamiltonian as a cone-calculus operator.
pub fn as_operator(h: &FiberHamiltonian) -> Result<OperatorMatrix> {
    if h.dim > DEFAULT_DENSE_CAP {
        return Err(Error::DimensionCap {
            dim: h.dim as u128,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    OperatorMatrix::symmetric(h.to_dense())
}

impl SymmetricOperator for FiberHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Direct lower-triangle product; prefer [`FiberHamiltonian::to_csr`]
    /// for repeated products.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        FiberHamiltonian::to_dense(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::entrywise_order;
    use crate::eigen::{dense_spectrum, expm};
    use crate::fock::DEFAULT_DIMENSION_CAP;
    use crate::grid::{build_grid, Mode};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_grid(modes: &[([f64; 3], f64, f64)], lambda_max: f64) -> MomentumGrid {
        MomentumGrid {
            modes: modes
                .iter()
                .enumerate()
                .map(|(i, &(k, weight, coupling_integral))| Mode {
                    k,
                    weight,
                    coupling_integral,
                    cell: [i as i32, 0, 0],
                })
                .collect(),
            lambda_max,
            spacing: 1.0,
            symmetric: false,
        }
    }

    fn assemble(grid: &MomentumGrid, params: &ModelParams, n_max: usize, variant: Variant) -> FiberHamiltonian {
        let basis = basis_for(grid, params.lambda, n_max, variant, DEFAULT_DIMENSION_CAP).unwrap();
        assemble_fiber(grid, Arc::new(basis), params, variant).unwrap()
    }

    #[test]
    fn lambda0_constant() {
        assert_relative_eq!(LAMBDA0, 2f64.powf(0.25) / (2.0 * std::f64::consts::PI), max_relative = 1e-15);
    }

    #[test]
    fn coupling_examples() {
        let g = toy_grid(&[([0.0, 0.0, 1.0], 0.001, 0.001), ([0.0, 2.0, 0.0], 0.002, 0.001)], 3.0);
        let p0 = ModelParams::new(0.0, [0.0; 3], 3.0).unwrap();
        assert!(coupling_coefficients(&g, &p0).unwrap().iter().all(|&c| c == 0.0));
        // Centroid regime: I = w / |k|, so c = λ₀ √w / |k|.
        let p1 = ModelParams::new(1.0, [0.0; 3], 1.5).unwrap();
        let c = coupling_coefficients(&g, &p1).unwrap();
        assert_relative_eq!(c[0], 0.005_985_2, max_relative = 1e-4);
        assert_eq!(c[1], 0.0);
        let p_big = ModelParams::new(1.0, [0.0; 3], 5.0).unwrap();
        assert!(coupling_coefficients(&g, &p_big).is_err());
    }

    #[test]
    fn couplings_monotone_in_cutoff() {
        let g = build_grid(2.0, 0.5).unwrap();
        let lambdas = [0.5, 1.0, 1.5, 2.0];
        let cs: Vec<Vec<f64>> = lambdas
            .iter()
            .map(|&l| coupling_coefficients(&g, &ModelParams::new(1.0, [0.0; 3], l).unwrap()).unwrap())
            .collect();
        for (w, lw) in cs.windows(2).zip(lambdas.windows(2)) {
            for (i, m) in g.modes.iter().enumerate() {
                let d = w[1][i] - w[0][i];
                assert!(d >= 0.0);
                if d > 0.0 {
                    assert!(m.norm() > lw[0] && m.norm() <= lw[1]);
                }
            }
        }
    }

    #[test]
    fn vacuum_diagonal_and_free_ground_state() {
        let g = build_grid(1.0, 0.5).unwrap();
        let h = assemble(&g, &ModelParams::new(1.0, [1.0, 0.0, 0.0], 1.0).unwrap(), 1, Variant::Local);
        assert_eq!(h.rows[0], 0);
        assert_eq!(h.values[0], 0.5);
        let free = assemble(&g, &ModelParams::new(0.0, [0.0; 3], 1.0).unwrap(), 2, Variant::Full);
        let spec = dense_spectrum(&free.to_csr(), DEFAULT_DENSE_CAP, true).unwrap();
        assert_eq!(spec.ground_energy(), 0.0);
        let v = spec.ground_vector().unwrap();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-14);
    }

    /// Independent dense assembly from the operator definitions on a
    /// two-mode, two-boson space, enumerating occupation pairs directly.
    #[test]
    fn two_mode_matches_independent_dense_oracle() {
        let k = [[0.3, -0.2, 0.5], [-0.4, 0.1, 0.25]];
        let g = toy_grid(&[(k[0], 0.05, 0.09), (k[1], 0.07, 0.11)], 1.0);
        let params = ModelParams::new(1.7, [0.1, 0.2, 0.4], 1.0).unwrap();
        let h = assemble(&g, &params, 2, Variant::Full);
        assert_eq!(h.dim, 6);

        let c: Vec<f64> = (0..2)
            .map(|i| (1.7f64).sqrt() * LAMBDA0 * g.modes[i].coupling_integral / g.modes[i].weight.sqrt())
            .collect();
        let states: Vec<[u32; 2]> = vec![[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];
        let oracle = DMatrix::from_fn(6, 6, |r, s| {
            let (a, b) = (states[r], states[s]);
            if r == s {
                let q: Vec<f64> = (0..3)
                    .map(|d| params.p[d] - f64::from(a[0]) * k[0][d] - f64::from(a[1]) * k[1][d])
                    .collect();
                return 0.5 * q.iter().map(|x| x * x).sum::<f64>() + f64::from(a[0] + a[1]);
            }
            // <a| a_i† |b> with a = b + e_i, or the transpose.
            for i in 0..2 {
                let mut up = b;
                up[i] += 1;
                if up == a {
                    return -c[i] * f64::from(a[i]).sqrt();
                }
                let mut down = a;
                down[i] += 1;
                if down == b {
                    return -c[i] * f64::from(b[i]).sqrt();
                }
            }
            0.0
        });
        let ours = dense_spectrum(&h.to_csr(), 64, false).unwrap().values;
        let theirs = dense_spectrum_of(&oracle, 64, false).unwrap().values;
        for (x, y) in ours.iter().zip(&theirs) {
            assert_relative_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn structure_of_assembled_matrix() {
        let g = build_grid(1.0, 0.5).unwrap();
        let params = ModelParams::along_z(1.0, 0.5, 1.0).unwrap();
        let h = assemble(&g, &params, 2, Variant::Local);
        let rep = stoquastic_check(&h);
        assert!(rep.passed(), "{}", rep.to_json());
        // At most one hop per coupled mode in each direction.
        let csr = h.to_csr();
        let m = h.couplings.iter().filter(|&&c| c > 0.0).count();
        for i in 0..h.dim {
            assert!(csr.row(i).filter(|&(j, _)| j != i).count() <= 2 * m);
        }
        let sym = csr.to_dense();
        assert_eq!(sym, sym.transpose());
    }

    #[test]
    fn injected_fault_is_caught() {
        let g = build_grid(1.0, 0.5).unwrap();
        let mut h = assemble(&g, &ModelParams::along_z(1.0, 0.0, 1.0).unwrap(), 1, Variant::Local);
        let at = h.inject_sign_fault().unwrap();
        let rep = stoquastic_check(&h);
        assert!(!rep.verdicts["off_diagonal_nonpositive"]);
        assert!(rep.verdicts["diagonal_closed_form"]);
        assert_eq!(rep.witnesses[0].index, Some(at));
    }

    #[test]
    fn hopping_graph_is_connected() {
        let g = build_grid(1.0, 0.5).unwrap();
        let h = assemble(&g, &ModelParams::along_z(1.0, 0.0, 1.0).unwrap(), 2, Variant::Local);
        let d = h.to_dense();
        let pattern = DMatrix::from_fn(h.dim, h.dim, |i, j| if i == j { 0.0 } else { d[(i, j)].abs() });
        assert!(is_ergodic(&OperatorMatrix::symmetric(pattern).unwrap()).unwrap());
    }

    #[test]
    fn semigroup_is_positive() {
        let g = build_grid(1.0, 0.5).unwrap();
        let h = assemble(&g, &ModelParams::along_z(2.0, 0.3, 0.6).unwrap(), 3, Variant::Local);
        assert!(h.dim <= DENSE_CHECK_CAP);
        let rep = semigroup_positivity_check(&h, &[0.1, 1.0], 1e-12).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        assert_eq!(rep.details["connected"], 1.0);
    }

    #[test]
    fn assembly_is_deterministic_across_pools() {
        let g = build_grid(1.5, 0.5).unwrap();
        let params = ModelParams::along_z(1.0, 0.2, 1.5).unwrap();
        let basis = Arc::new(basis_for(&g, 1.5, 2, Variant::Local, DEFAULT_DIMENSION_CAP).unwrap());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| assemble_fiber(&g, basis.clone(), &params, Variant::Local).unwrap());
        let b = four.install(|| assemble_fiber(&g, basis.clone(), &params, Variant::Local).unwrap());
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.cols, b.cols);
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn basis_mismatch_is_an_error() {
        let g = build_grid(1.5, 0.5).unwrap();
        let params = ModelParams::along_z(1.0, 0.0, 1.0).unwrap();
        let wrong = Arc::new(FockBasis::enumerate(3, 1).unwrap());
        assert!(matches!(
            assemble_fiber(&g, wrong, &params, Variant::Full),
            Err(Error::BasisMismatch { .. })
        ));
    }

    #[test]
    fn monotonicity_in_cutoff_is_exact() {
        let g = build_grid(1.5, 0.5).unwrap();
        let basis = Arc::new(basis_for(&g, 1.5, 2, Variant::Full, DEFAULT_DIMENSION_CAP).unwrap());
        let rep = interaction_monotonicity_check(&g, basis.clone(), 1.0, [0.0, 0.0, 0.4], &[0.5, 1.0, 1.0, 1.5]).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        assert_eq!(rep.details["pair1.min_entry"], 0.0);
        assert!(interaction_monotonicity_check(&g, basis, 1.0, [0.0; 3], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn random_cutoff_pairs_dominate_densely() {
        let g = build_grid(1.5, 0.5).unwrap();
        let basis = Arc::new(basis_for(&g, 1.5, 1, Variant::Full, DEFAULT_DIMENSION_CAP).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: f64 = rng.random_range(0.1..1.5);
            let b: f64 = rng.random_range(0.1..1.5);
            let (l0, l1) = (a.min(b), a.max(b));
            let pz = rng.random_range(0.0..1.0);
            let h0 = assemble_fiber(&g, basis.clone(), &ModelParams::along_z(1.0, pz, l0).unwrap(), Variant::Full).unwrap();
            let h1 = assemble_fiber(&g, basis.clone(), &ModelParams::along_z(1.0, pz, l1).unwrap(), Variant::Full).unwrap();
            let rel = entrywise_order(&as_operator(&h0).unwrap(), &as_operator(&h1).unwrap(), 0.0).unwrap();
            assert!(rel.holds());
        }
    }

    #[test]
    fn field_bounds_trivial_and_saturating() {
        let zero = verify_field_bounds(&[1.0, 2.0], &[0.0, 0.0], &[1, 2], 1e-12).unwrap();
        assert!(zero.passed());
        assert_eq!(zero.details["linear.n_max=2"], 0.0);

        let one = verify_field_bounds(&[1.0], &[1.0], &[40], 1e-9).unwrap();
        assert!(one.passed(), "{}", one.to_json());
        assert!((one.details["linear.n_max=40"] + 1.0).abs() < 1e-8);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..2).map(|_| rng.random_range(0.2..2.0)).collect();
        let f: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(verify_field_bounds(&a, &f, &[1, 2, 3], 1e-9).unwrap().passed());
        assert!(verify_field_bounds(&[0.0], &[1.0], &[1], 1e-9).is_err());
    }

    #[test]
    fn duhamel_examples() {
        // V = 0: only the free term survives.
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0, 2.0]));
        let d = duhamel_terms(&l, 0.7, 3).unwrap();
        assert_relative_eq!(d[0], expm(&(-0.7 * &l)).unwrap(), epsilon = 1e-14);
        assert!(d[1..].iter().all(|m| m.amax() == 0.0));

        // t = 0: identity.
        let k = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 1.0]);
        let d0 = duhamel_terms(&k, 0.0, 4).unwrap();
        assert_eq!(d0[0], DMatrix::identity(2, 2));
        assert!(d0[1..].iter().all(|m| m.amax() == 0.0));

        // Closed-form 2x2 exponential: eigenvalues (1 ∓ √5)/2.
        let rep = duhamel_check_dense(&k, 1.0, 20, 1e-10, 1e-6).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        let d = duhamel_terms(&k, 1.0, 20).unwrap();
        let sum = d.iter().fold(DMatrix::zeros(2, 2), |a, b| a + b);
        let s5 = 5f64.sqrt();
        let (l0, l1) = ((1.0 - s5) / 2.0, (1.0 + s5) / 2.0);
        // K v = l v gives v ∝ (1, -l).
        let v0 = nalgebra::Vector2::new(1.0, -l0).normalize();
        let v1 = nalgebra::Vector2::new(1.0, -l1).normalize();
        let closed = (-l0).exp() * v0 * v0.transpose() + (-l1).exp() * v1 * v1.transpose();
        for i in 0..2 {
            for j in 0..2 {
                assert!((sum[(i, j)] - closed[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn duhamel_on_assembled_instance() {
        let g = build_grid(1.0, 0.5).unwrap();
        let h = assemble(&g, &ModelParams::along_z(2.0, 0.2, 0.6).unwrap(), 3, Variant::Local);
        let rep = duhamel_check(&h, 1.0, 12, 1e-10, 1e-6).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
    }

    #[test]
    fn triplet_text_format() {
        let g = build_grid(1.0, 0.5).unwrap();
        let h = assemble(&g, &ModelParams::along_z(1.0, 0.0, 1.0).unwrap(), 1, Variant::Local);
        let mut buf = Vec::new();
        h.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), format!("# {} {} local", h.dim, h.nnz()));
        let parsed: Vec<(usize, usize, f64)> = lines
            .map(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
            })
            .collect();
        assert_eq!(parsed.len(), h.nnz());
        for (k, &(r, c, v)) in parsed.iter().enumerate() {
            assert_eq!((r, c), (h.rows[k], h.cols[k]));
            assert_eq!(v.to_bits(), h.values[k].to_bits());
        }
    }
}
