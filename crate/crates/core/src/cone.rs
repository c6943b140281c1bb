//! Operator order on the coordinate-orthant cone.
//!
//! `A ⊵ B` means `A - B` maps nonnegative vectors to nonnegative vectors,
//! which for real matrices is entrywise nonnegativity of `A - B`. The
//! checkers below evaluate each clause of the positivity theorems
//! independently and report whether the clauses agree.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_spectrum_of, expm, positive_semigroup, DEFAULT_DENSE_CAP, DEFAULT_EXPM_CAP};
use crate::error::{Error, Result};
use crate::report::Report;
use crate::sparse::SymmetricOperator;

/// Entry threshold for "entrywise > 0", applied after dividing by the
/// largest absolute entry.
pub const STRICT_TOL: f64 = 1e-12;
pub const DEFAULT_SAMPLES: [f64; 3] = [0.1, 1.0, 10.0];
pub const DEFAULT_VECTOR_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    entries: DMatrix<f64>,
    symmetric: bool,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch(entries.nrows(), entries.ncols()));
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        let n = entries.nrows();
        let symmetric = (0..n).all(|i| (0..i).all(|j| entries[(i, j)] == entries[(j, i)]));
        Ok(OperatorMatrix { entries, symmetric })
    }

    /// Like [`OperatorMatrix::new`] but rejects non-symmetric input.
    pub fn symmetric(entries: DMatrix<f64>) -> Result<Self> {
        let m = Self::new(entries)?;
        m.require_symmetric()?;
        Ok(m)
    }

    pub fn from_rows(n: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch(rows.len(), n * n));
        }
        Self::new(DMatrix::from_row_slice(n, n, rows))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn require_symmetric(&self) -> Result<()> {
        if self.symmetric {
            return Ok(());
        }
        let n = self.dim();
        for i in 0..n {
            for j in 0..i {
                if self.entries[(i, j)] != self.entries[(j, i)] {
                    return Err(Error::NotSymmetric(i, j));
                }
            }
        }
        Ok(())
    }

    /// Largest off-diagonal entry and its position.
    pub fn max_off_diagonal(&self) -> Option<((usize, usize), f64)> {
        let n = self.dim();
        let mut best: Option<((usize, usize), f64)> = None;
        for i in 0..n {
            for j in 0..n {
                if i != j && best.is_none_or(|(_, v)| self.entries[(i, j)] > v) {
                    best = Some(((i, j), self.entries[(i, j)]));
                }
            }
        }
        best
    }

    pub fn is_stoquastic(&self, tol: f64) -> bool {
        self.max_off_diagonal().is_none_or(|(_, v)| v <= tol)
    }

    fn require_stoquastic(&self, tol: f64) -> Result<()> {
        match self.max_off_diagonal() {
            Some(((i, j), v)) if v > tol => Err(Error::OrderViolation { row: i, col: j, value: v }),
            _ => Ok(()),
        }
    }

    fn lowest_eigenvalue(&self) -> Result<f64> {
        Ok(dense_spectrum_of(&self.entries, DEFAULT_DENSE_CAP, false)?.values[0])
    }

    /// `e^{-tA}`.
    pub fn semigroup(&self, t: f64) -> Result<DMatrix<f64>> {
        if self.dim() > DEFAULT_EXPM_CAP {
            return Err(Error::DimensionCap {
                dim: self.dim() as u128,
                cap: DEFAULT_EXPM_CAP,
            });
        }
        expm(&(&self.entries * (-t)))
    }

    /// `(A + s)^{-1}`.
    pub fn resolvent(&self, s: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let m = &self.entries + DMatrix::<f64>::identity(n, n) * s;
        m.try_inverse()
            .ok_or_else(|| Error::InvalidArgument(format!("A + {s} is singular")))
    }
}

impl SymmetricOperator for OperatorMatrix {
    fn dim(&self) -> usize {
        self.entries.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.entries.apply(x, y)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.entries.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Dominates,
    StrictlyImproves,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeOrderReport {
    pub relation: Relation,
    pub min_entry: f64,
    /// Position of the most negative entry of `A - B` when incomparable.
    pub witness: Option<(usize, usize)>,
}

impl ConeOrderReport {
    /// `A ⊵ B` holds (strictly or not).
    pub fn holds(&self) -> bool {
        self.relation != Relation::Incomparable
    }
}

fn min_entry(d: &DMatrix<f64>) -> ((usize, usize), f64) {
    let mut best = ((0, 0), f64::INFINITY);
    for j in 0..d.ncols() {
        for i in 0..d.nrows() {
            if d[(i, j)] < best.1 {
                best = ((i, j), d[(i, j)]);
            }
        }
    }
    best
}

/// Order comparison of a raw difference matrix `A - B`.
pub fn order_of_difference(d: &DMatrix<f64>, tol: f64) -> ConeOrderReport {
    let (pos, min) = min_entry(d);
    let relation = if min > tol {
        Relation::StrictlyImproves
    } else if min >= -tol {
        Relation::Dominates
    } else {
        Relation::Incomparable
    };
    ConeOrderReport {
        relation,
        min_entry: min,
        witness: (relation == Relation::Incomparable).then_some(pos),
    }
}

/// `A ⊵ B` with respect to the orthant: every entry of `A - B` ≥ `-tol`.
pub fn entrywise_order(a: &OperatorMatrix, b: &OperatorMatrix, tol: f64) -> Result<ConeOrderReport> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(order_of_difference(&(a.entries() - b.entries()), tol))
}

/// Every entry exceeds `STRICT_TOL` after scaling by the largest absolute
/// entry.
pub fn is_strictly_positive(m: &DMatrix<f64>) -> bool {
    let scale = m.amax();
    scale > 0.0 && m.iter().all(|&x| x / scale > STRICT_TOL)
}

/// Every entry is strictly positive. Meant for matrices computed without
/// cancellation, where the sign of a tiny entry is still reliable.
pub fn all_entries_positive(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&x| x > 0.0)
}

fn is_nonnegative(m: &DMatrix<f64>, tol: f64) -> bool {
    m.iter().all(|&x| x >= -tol)
}

/// Ergodicity of a nonnegative matrix: every index reaches every other
/// through the directed graph of positive entries (self-loops implied).
pub fn is_ergodic(m: &OperatorMatrix) -> Result<bool> {
    let d = m.entries();
    let ((i, j), v) = min_entry(d);
    if v < 0.0 {
        return Err(Error::OrderViolation { row: i, col: j, value: v });
    }
    let n = m.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| (0..n).filter(|&c| c != r && d[(r, c)] > 0.0).collect())
        .collect();
    let radj: Vec<Vec<usize>> = (0..n)
        .map(|c| (0..n).filter(|&r| r != c && d[(r, c)] > 0.0).collect())
        .collect();
    Ok(all_reachable(&adj) && all_reachable(&radj))
}

fn all_reachable(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn quad(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

fn positive_part(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.max(0.0))
}

fn negative_part(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| (-v).max(0.0))
}

/// Probe vectors for the quadratic-form clauses: Gaussian samples plus
/// signed pair vectors `e_i - eps e_j`, which detect any positive
/// off-diagonal entry.
fn probe_vectors(n: usize, samples: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<DVector<f64>> = (0..samples)
        .map(|_| DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    if n <= 64 {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for eps in [1.0, 0.0625, 0.00390625, 1.0 / 65536.0] {
                    let mut x = DVector::zeros(n);
                    x[i] = 1.0;
                    x[j] = -eps;
                    out.push(x);
                }
            }
        }
    }
    out
}

/// Beurling–Deny criterion: compares
/// (i) `e^{-tA} ⊵ 0`, (ii) `<|x|, A|x|> ≤ <x, Ax>`,
/// (iii) `<x+, A x+> ≤ <x, Ax>`, (iv) `<x+, A x+> + <x-, A x-> ≤ <x, Ax>`.
///
/// The criterion is stated for positive operators, so `A` is shifted by
/// its lowest eigenvalue when that is negative; the shift leaves (i),
/// (ii) and (iv) unchanged.
pub fn beurling_deny_check(
    a: &OperatorMatrix,
    t_samples: &[f64],
    x_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Report> {
    a.require_symmetric()?;
    let n = a.dim();
    let lmin = a.lowest_eigenvalue()?;
    let shift = if lmin < 0.0 { -lmin } else { 0.0 };
    let ap = a.entries() + DMatrix::<f64>::identity(n, n) * shift;
    let shifted = OperatorMatrix::new(ap.clone())?;

    let mut r = Report::new("beurling_deny", n).with_seed(seed);
    r.tolerance("tol", tol).detail("shift", shift);

    let mut semigroup_ok = true;
    for &t in t_samples {
        let e = shifted.semigroup(t)?;
        let ((i, j), v) = min_entry(&e);
        if v < -tol * e.amax().max(1.0) {
            semigroup_ok = false;
            r.witness(format!("semigroup_t={t}"), Some((i, j)), v);
        }
    }

    let scale = ap.amax().max(1.0);
    let (mut abs_ok, mut plus_ok, mut split_ok) = (true, true, true);
    for x in probe_vectors(n, x_samples, seed) {
        let q = quad(&ap, &x);
        let xp = positive_part(&x);
        let xm = negative_part(&x);
        let qabs = quad(&ap, &(&xp + &xm));
        let qp = quad(&ap, &xp);
        let qm = quad(&ap, &xm);
        let slack = tol * scale * x.norm_squared().max(1.0);
        if qabs > q + slack && abs_ok {
            abs_ok = false;
            r.witness("abs_form", None, qabs - q);
        }
        if qp > q + slack && plus_ok {
            plus_ok = false;
            r.witness("positive_part_form", None, qp - q);
        }
        if qp + qm > q + slack && split_ok {
            split_ok = false;
            r.witness("split_form", None, qp + qm - q);
        }
    }
    r.verdict("i_semigroup_positive", semigroup_ok)
        .verdict("ii_abs_form", abs_ok)
        .verdict("iii_positive_part_form", plus_ok)
        .verdict("iv_split_form", split_ok);
    Ok(r)
}

/// Perron–Frobenius–Faris: compares
/// (i) simple ground state with strictly positive eigenvector,
/// (ii) `(A+s)^{-1} ⊳ 0` for some sampled `s`, (iii) every pair of basis
/// vectors is connected by `e^{-tA}` at some sampled `t`,
/// (iv) `(A+s)^{-1} ⊳ 0` for every sampled `s`, (v) `e^{-tA} ⊳ 0` for
/// every sampled `t`.
pub fn pf_faris_check(a: &OperatorMatrix, s_samples: &[f64], t_samples: &[f64], tol: f64) -> Result<Report> {
    a.require_symmetric()?;
    a.require_stoquastic(tol)?;
    let n = a.dim();
    let spec = dense_spectrum_of(a.entries(), DEFAULT_DENSE_CAP, true)?;
    let shifted = OperatorMatrix::new(a.entries() - DMatrix::<f64>::identity(n, n) * spec.values[0])?;

    let mut r = Report::new("pf_faris", n);
    r.tolerance("tol", tol).tolerance("strict_tol", STRICT_TOL);
    let gap = spec.gap();
    r.detail("gap", if gap.is_finite() { gap } else { -1.0 });

    let degenerate = !(gap > tol);
    let clause_i = if degenerate {
        r.note("degenerate ground space");
        false
    } else {
        let v = spec.ground_vector().expect("vectors requested");
        let vmax = v.iter().copied().fold(0.0, f64::max);
        let (imin, vmin) = v
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &x)| (i, x))
            .expect("nonempty");
        r.detail("min_ground_coordinate", vmin / vmax);
        if vmin / vmax <= STRICT_TOL {
            r.witness("ground_vector", Some((imin, imin)), vmin / vmax);
        }
        vmin / vmax > STRICT_TOL
    };

    let mut resolvent_any = false;
    let mut resolvent_all = true;
    for &s in s_samples {
        let res = shifted.resolvent(s)?;
        let pos = is_strictly_positive(&res);
        resolvent_any |= pos;
        resolvent_all &= pos;
    }

    // Semigroup entries between distant indices can sit far below the
    // largest entry, so they come from the cancellation-free series and
    // are tested by sign alone.
    let semigroups: Vec<DMatrix<f64>> = t_samples
        .iter()
        .map(|&t| positive_semigroup(shifted.entries(), t))
        .collect::<Result<_>>()?;
    let semigroup_all = !semigroups.is_empty() && semigroups.iter().all(all_entries_positive);
    let mut connected = true;
    'pairs: for x in 0..n {
        for y in 0..n {
            let ok = semigroups.iter().any(|e| e[(x, y)] > 0.0);
            if !ok {
                connected = false;
                r.witness("unconnected_pair", Some((x, y)), 0.0);
                break 'pairs;
            }
        }
    }

    r.verdict("i_simple_positive_ground", clause_i)
        .verdict("ii_resolvent_some_s", resolvent_any && !s_samples.is_empty())
        .verdict("iii_pairwise_connected", connected)
        .verdict("iv_resolvent_all_s", resolvent_all && !s_samples.is_empty())
        .verdict("v_semigroup_all_t", semigroup_all);
    Ok(r)
}

/// Monotone ground energies along an order-decreasing family
/// `H_1 ⊵ H_2 ⊵ ...` of stoquastic matrices.
///
/// Hypothesis failures are reported under `hypothesis.*`; the conclusion
/// is only asserted when all hypotheses hold.
pub fn monotone_energy_check(family: &[OperatorMatrix], tol: f64) -> Result<Report> {
    let dim = family.first().map_or(0, |m| m.dim());
    let mut r = Report::new("monotone_energy", dim);
    r.tolerance("tol", tol);
    if family.is_empty() {
        return Ok(r);
    }
    for m in family {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch(dim, m.dim()));
        }
        m.require_symmetric()?;
    }
    let mut hyp_stoquastic = true;
    for (n, m) in family.iter().enumerate() {
        if let Some(((i, j), v)) = m.max_off_diagonal() {
            if v > tol {
                hyp_stoquastic = false;
                r.witness(format!("hypothesis.stoquastic[{n}]"), Some((i, j)), v);
            }
        }
    }
    let mut hyp_order = true;
    for (n, pair) in family.windows(2).enumerate() {
        let ord = entrywise_order(&pair[0], &pair[1], tol)?;
        if !ord.holds() {
            hyp_order = false;
            r.witness(format!("hypothesis.order[{n}]"), ord.witness, ord.min_entry);
        }
    }
    r.verdict("hypothesis.stoquastic", hyp_stoquastic)
        .verdict("hypothesis.order", hyp_order);

    if hyp_stoquastic && hyp_order {
        let energies: Vec<f64> = family.iter().map(|m| m.lowest_eigenvalue()).collect::<Result<_>>()?;
        let mut decreasing = true;
        for (n, w) in energies.windows(2).enumerate() {
            if w[0] < w[1] - tol {
                decreasing = false;
                r.witness(format!("conclusion[{n}]"), Some((n, n + 1)), w[1] - w[0]);
            }
        }
        for (n, e) in energies.iter().enumerate() {
            r.detail(format!("E[{n}]"), *e);
        }
        r.verdict("conclusion.decreasing", decreasing);
    } else {
        r.note("hypotheses failed; conclusion not asserted");
    }
    Ok(r)
}

/// `B ⊵ A` ⇔ `(A+s)^{-1} ⊵ (B+s)^{-1}` ⇔ `e^{-tA} ⊵ e^{-tB}`.
///
/// Both operators are shifted by a common constant so they are positive
/// semidefinite; the shift does not change any of the three statements.
pub fn monotonicity_equivalence_check(
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    s_samples: &[f64],
    t_samples: &[f64],
    tol: f64,
) -> Result<Report> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    a.require_symmetric()?;
    b.require_symmetric()?;
    a.require_stoquastic(tol)?;
    b.require_stoquastic(tol)?;
    let n = a.dim();
    let lmin = a.lowest_eigenvalue()?.min(b.lowest_eigenvalue()?);
    let shift = if lmin < 0.0 { -lmin } else { 0.0 };
    let id = DMatrix::<f64>::identity(n, n);
    let a = OperatorMatrix::new(a.entries() + &id * shift)?;
    let b = OperatorMatrix::new(b.entries() + &id * shift)?;

    let mut r = Report::new("monotonicity_equivalence", n);
    r.tolerance("tol", tol).detail("shift", shift);

    let direct = entrywise_order(&b, &a, tol)?;
    if let Some(w) = direct.witness {
        r.witness("operator_order", Some(w), direct.min_entry);
    }
    let mut resolvent_ok = true;
    for &s in s_samples {
        let ord = order_of_difference(&(a.resolvent(s)? - b.resolvent(s)?), tol);
        if !ord.holds() {
            resolvent_ok = false;
            r.witness(format!("resolvent_s={s}"), ord.witness, ord.min_entry);
        }
    }
    let mut semigroup_ok = true;
    for &t in t_samples {
        let ord = order_of_difference(&(a.semigroup(t)? - b.semigroup(t)?), tol);
        if !ord.holds() {
            semigroup_ok = false;
            r.witness(format!("semigroup_t={t}"), ord.witness, ord.min_entry);
        }
    }
    r.verdict("i_operator_order", direct.holds())
        .verdict("ii_resolvent_order", resolvent_ok)
        .verdict("iii_semigroup_order", semigroup_ok);
    Ok(r)
}

/// `e^{-t(A+B)} ⊵ e^{-tA} ⊵ 0` for stoquastic `A` and `0 ⊵ B`.
pub fn semigroup_domination_check(a: &OperatorMatrix, b: &OperatorMatrix, t_samples: &[f64], tol: f64) -> Result<Report> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    a.require_symmetric()?;
    b.require_symmetric()?;
    a.require_stoquastic(tol)?;
    let ((i, j), bmax) = {
        let (pos, v) = min_entry(&(-b.entries()));
        (pos, -v)
    };
    if bmax > tol {
        return Err(Error::Hypothesis(format!("perturbation entry ({i}, {j}) = {bmax:e} is positive")));
    }
    let n = a.dim();
    let sum = OperatorMatrix::new(a.entries() + b.entries())?;
    let mut r = Report::new("semigroup_domination", n);
    r.tolerance("tol", tol);
    let (mut dom_ok, mut pos_ok) = (true, true);
    for &t in t_samples {
        let ea = a.semigroup(t)?;
        let eab = sum.semigroup(t)?;
        let scale = eab.amax().max(1.0);
        let ord = order_of_difference(&(&eab - &ea), tol * scale);
        if !ord.holds() {
            dom_ok = false;
            r.witness(format!("domination_t={t}"), ord.witness, ord.min_entry);
        }
        if !is_nonnegative(&ea, tol * ea.amax().max(1.0)) {
            pos_ok = false;
            let (pos, v) = min_entry(&ea);
            r.witness(format!("positivity_t={t}"), Some(pos), v);
        }
    }
    r.verdict("perturbed_dominates", dom_ok)
        .verdict("semigroup_positive", pos_ok);
    Ok(r)
}
