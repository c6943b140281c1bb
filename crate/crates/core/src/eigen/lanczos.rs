//! Ground-state Lanczos with full reorthogonalization and explicit
//! restarts.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::fix_sign;
use crate::error::{Error, Result};
use crate::sparse::SymmetricOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartVector {
    /// Normalized all-ones vector.
    AllOnes,
    /// `1 + u_i/2` with `u_i` uniform in `[-1, 1)`. Still strictly
    /// positive, but breaks the lattice symmetries of the all-ones
    /// vector so that the second Ritz value sees every symmetry sector.
    PerturbedOnes { seed: u64 },
    Given(Vec<f64>),
}

impl StartVector {
    fn describe(&self) -> String {
        match self {
            StartVector::AllOnes => "all-ones".into(),
            StartVector::PerturbedOnes { seed } => format!("perturbed-ones(seed={seed})"),
            StartVector::Given(_) => "given".into(),
        }
    }

    fn build(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            StartVector::AllOnes => Ok(vec![1.0; n]),
            StartVector::PerturbedOnes { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..n).map(|_| 1.0 + 0.5 * rng.random_range(-1.0..1.0)).collect())
            }
            StartVector::Given(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch(v.len(), n));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Residual tolerance on `||H psi - e0 psi||`.
    pub tol: f64,
    pub max_iter: usize,
    /// Krylov dimension at which the iteration restarts from the current
    /// Ritz vector.
    pub restart: usize,
    pub start: StartVector,
    /// Residual estimate the second Ritz pair should reach before the gap
    /// is reported as reliable.
    pub gap_tol: f64,
    /// Extra iterations allowed after the ground pair converged while
    /// waiting for the second Ritz pair.
    pub gap_extra_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 5000,
            restart: 300,
            start: StartVector::PerturbedOnes { seed: 0x5eed },
            gap_tol: 1e-6,
            gap_extra_iter: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub e0: f64,
    pub ground_vector: Vec<f64>,
    pub residual: f64,
    /// Second Ritz value minus `e0`; infinite for one-dimensional spaces.
    pub gap: f64,
    pub gap_reliable: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub start: String,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            axpy(-c, v, w);
        }
    }
}

struct Ritz {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn tridiagonal_ritz(alpha: &[f64], beta: &[f64]) -> Ritz {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ritz {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors,
    }
}

fn ritz_vector(basis: &[Vec<f64>], coeffs: impl Iterator<Item = f64>, n: usize) -> Vec<f64> {
    let mut psi = vec![0.0; n];
    for (v, c) in basis.iter().zip(coeffs) {
        axpy(c, v, &mut psi);
    }
    let nrm = norm(&psi);
    psi.iter_mut().for_each(|x| *x /= nrm);
    psi
}

/// Lowest eigenpair of a symmetric operator.
pub fn lanczos_ground<H: SymmetricOperator + ?Sized>(h: &H, cfg: &SolverConfig) -> Result<SpectralResult> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
    }
    let n = h.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let mut start = cfg.start.build(n)?;
    let s0 = norm(&start);
    if s0 == 0.0 {
        return Err(Error::InvalidArgument("zero start vector".into()));
    }
    start.iter_mut().for_each(|x| *x /= s0);

    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c05);
    let mut iterations = 0usize;
    let mut restarts = 0usize;
    let mut hv = vec![0.0; n];
    let mut best: Option<(f64, f64)> = None;

    loop {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut converged_at: Option<usize> = None;

        loop {
            let j = basis.len() - 1;
            h.apply(&basis[j], &mut hv);
            iterations += 1;
            let mut w = hv.clone();
            let a = dot(&basis[j], &w);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            orthogonalize(&mut w, &basis);
            alpha.push(a);
            let mut b = norm(&w);
            let scale = alpha.iter().map(|x| x.abs()).fold(1.0, f64::max);
            let exhausted = basis.len() == n;
            let invariant = b <= 1e-13 * scale;

            let m = alpha.len();
            let check = m <= 12 || m % 4 == 0 || invariant || exhausted || m >= cfg.restart || iterations >= cfg.max_iter;
            if check {
                let ritz = tridiagonal_ritz(&alpha, &beta);
                let bres = if invariant || exhausted { 0.0 } else { b };
                let res0 = bres * ritz.vectors[(m - 1, 0)].abs();
                let res1 = if m > 1 { bres * ritz.vectors[(m - 1, 1)].abs() } else { f64::INFINITY };
                best = Some((ritz.values[0], res0));
                if res0 <= 0.5 * cfg.tol && converged_at.is_none() {
                    converged_at = Some(iterations);
                }
                let gap_done = m > 1 && res1 <= cfg.gap_tol;
                let waited = converged_at.is_some_and(|c| iterations - c >= cfg.gap_extra_iter);
                let nothing_left = exhausted || (invariant && basis.len() == n);
                if converged_at.is_some() && (gap_done || waited || nothing_left) {
                    let mut psi = ritz_vector(&basis, ritz.vectors.column(0).iter().copied(), n);
                    h.apply(&psi, &mut hv);
                    let e0 = dot(&psi, &hv);
                    axpy(-e0, &psi, &mut hv);
                    let residual = norm(&hv);
                    if residual <= cfg.tol {
                        fix_sign(&mut psi);
                        let gap = if m > 1 { ritz.values[1] - ritz.values[0] } else { f64::INFINITY };
                        return Ok(SpectralResult {
                            e0,
                            ground_vector: psi,
                            residual,
                            gap,
                            gap_reliable: gap_done || (nothing_left && m > 1),
                            iterations,
                            restarts,
                            start: cfg.start.describe(),
                        });
                    }
                    // Rounding stalled the Krylov estimate; restart from psi.
                    start = psi;
                    break;
                }
                if iterations >= cfg.max_iter {
                    let (e0, residual) = best.unwrap_or((f64::NAN, f64::INFINITY));
                    return Err(Error::NoConvergence {
                        iterations,
                        e0,
                        residual,
                    });
                }
                if m >= cfg.restart && !invariant {
                    start = ritz_vector(&basis, ritz.vectors.column(0).iter().copied(), n);
                    break;
                }
            }
            if exhausted {
                // Full space spanned but the ground pair still above tol:
                // restart from the Ritz vector (only reachable through rounding).
                let ritz = tridiagonal_ritz(&alpha, &beta);
                start = ritz_vector(&basis, ritz.vectors.column(0).iter().copied(), n);
                break;
            }
            if invariant {
                // Krylov space closed early: continue in its complement
                // with a deterministic random direction (beta = 0 keeps T
                // block diagonal).
                loop {
                    w = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    orthogonalize(&mut w, &basis);
                    b = norm(&w);
                    if b > 1e-8 {
                        break;
                    }
                }
                w.iter_mut().for_each(|x| *x /= b);
                beta.push(0.0);
                basis.push(w);
            } else {
                w.iter_mut().for_each(|x| *x /= b);
                beta.push(b);
                basis.push(w);
            }
        }
        restarts += 1;
        if iterations >= cfg.max_iter {
            let (e0, residual) = best.unwrap_or((f64::NAN, f64::INFINITY));
            return Err(Error::NoConvergence {
                iterations,
                e0,
                residual,
            });
        }
    }
}
