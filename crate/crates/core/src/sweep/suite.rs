//! Randomized battery over the cone-order checkers and the structural
//! Hamiltonian checks.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cone::{
    beurling_deny_check, monotone_energy_check, monotonicity_equivalence_check, pf_faris_check,
    semigroup_domination_check, OperatorMatrix, DEFAULT_SAMPLES,
};
use crate::eigen::{ground_positivity_check, lanczos_ground, SolverConfig, GROUND_STRICT_TOL};
use crate::error::Result;
use crate::fock::DEFAULT_DIMENSION_CAP;
use crate::grid::build_grid;
use crate::hamiltonian::{
    as_operator, assemble_fiber, basis_for, duhamel_check, interaction_monotonicity_check, semigroup_positivity_check,
    stoquastic_check, ModelParams, Variant,
};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteSizes {
    /// Random stoquastic matrices for the abstract checks.
    pub random_matrices: usize,
    pub max_dim: usize,
    /// Random vectors per quadratic-form clause.
    pub vector_samples: usize,
    /// Assembled fiber Hamiltonians.
    pub hamiltonian_instances: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        SuiteSizes {
            random_matrices: 100,
            max_dim: 64,
            vector_samples: 1000,
            hamiltonian_instances: 4,
        }
    }
}

impl SuiteSizes {
    pub fn empty() -> Self {
        SuiteSizes {
            random_matrices: 0,
            max_dim: 0,
            vector_samples: 0,
            hamiltonian_instances: 0,
        }
    }
}

/// Symmetric matrix with nonpositive off-diagonal entries. A random
/// spanning path keeps it irreducible unless `irreducible` is false, in
/// which case entries are kept with probability 0.15 only.
pub fn random_stoquastic(n: usize, irreducible: bool, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let density = if irreducible { 0.4 } else { 0.15 };
    for i in 0..n {
        m[(i, i)] = 3.0 * rng.random::<f64>() - 1.0;
        for j in 0..i {
            if rng.random::<f64>() < density {
                let v = -rng.random_range(0.1..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    if irreducible {
        for w in perm.windows(2) {
            if m[(w[0], w[1])] == 0.0 {
                let v = -rng.random_range(0.1..1.0);
                m[(w[0], w[1])] = v;
                m[(w[1], w[0])] = v;
            }
        }
    }
    m
}

/// `B` with `B - A` entrywise ≥ 0 and `B` still stoquastic: off-diagonal
/// entries are scaled toward zero and the diagonal raised.
fn raised(a: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = a.nrows();
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += rng.random_range(0.1..1.0);
        for j in 0..i {
            let s = rng.random_range(0.0..1.0);
            b[(i, j)] = a[(i, j)] * s;
            b[(j, i)] = b[(i, j)];
        }
    }
    b
}

fn negative_perturbation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        b[(i, i)] = -rng.random_range(0.0..0.5);
        for j in 0..i {
            if rng.random::<f64>() < 0.3 {
                let v = -rng.random_range(0.0..0.5);
                b[(i, j)] = v;
                b[(j, i)] = v;
            }
        }
    }
    b
}

fn abstract_battery(rep: &mut Report, seed: u64, sizes: &SuiteSizes) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-10;
    let (mut bd, mut pf, mut eq, mut dom) = (0usize, 0usize, 0usize, 0usize);
    for k in 0..sizes.random_matrices {
        let n = rng.random_range(2..=sizes.max_dim.max(2));
        // Every fifth matrix is sparse enough to be reducible now and then.
        let a = random_stoquastic(n, k % 5 != 4, &mut rng);
        let op = OperatorMatrix::symmetric(a.clone())?;

        let r = beurling_deny_check(&op, &DEFAULT_SAMPLES, sizes.vector_samples, seed.wrapping_add(k as u64), tol)?;
        if !(r.verdicts_agree() && r.passed()) {
            bd += 1;
            rep.absorb(&format!("abstract.beurling_deny[{k}]"), &r);
        }
        let r = pf_faris_check(&op, &DEFAULT_SAMPLES, &DEFAULT_SAMPLES, tol)?;
        if !r.verdicts_agree() {
            pf += 1;
            rep.absorb(&format!("abstract.pf_faris[{k}]"), &r);
        }
        let b = OperatorMatrix::symmetric(raised(&a, &mut rng))?;
        let forward = monotonicity_equivalence_check(&op, &b, &DEFAULT_SAMPLES, &DEFAULT_SAMPLES, tol)?;
        let backward = monotonicity_equivalence_check(&b, &op, &DEFAULT_SAMPLES, &DEFAULT_SAMPLES, tol)?;
        let backward_fails = backward.verdicts.values().all(|&v| !v);
        if !(forward.passed() && backward_fails) {
            eq += 1;
            rep.absorb(&format!("abstract.equivalence_forward[{k}]"), &forward);
            rep.absorb(&format!("abstract.equivalence_backward[{k}]"), &backward);
        }
        let pert = OperatorMatrix::symmetric(negative_perturbation(n, &mut rng))?;
        let r = semigroup_domination_check(&op, &pert, &DEFAULT_SAMPLES, tol)?;
        if !r.passed() {
            dom += 1;
            rep.absorb(&format!("abstract.domination[{k}]"), &r);
        }
    }
    if sizes.random_matrices > 0 {
        rep.detail("abstract.beurling_deny_disagreements", bd as f64);
        rep.detail("abstract.pf_faris_disagreements", pf as f64);
        rep.detail("abstract.equivalence_disagreements", eq as f64);
        rep.detail("abstract.domination_failures", dom as f64);
        rep.verdict("abstract.beurling_deny", bd == 0);
        rep.verdict("abstract.pf_faris", pf == 0);
        rep.verdict("abstract.equivalence", eq == 0);
        rep.verdict("abstract.domination", dom == 0);
    }
    Ok(())
}

fn hamiltonian_battery(rep: &mut Report, seed: u64, sizes: &SuiteSizes, inject_fault: bool) -> Result<()> {
    if sizes.hamiltonian_instances == 0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let grid = build_grid(1.0, 0.5)?;
    let local = Arc::new(basis_for(&grid, 0.6, 2, Variant::Local, DEFAULT_DIMENSION_CAP)?);
    let full = Arc::new(basis_for(&grid, 1.0, 1, Variant::Full, DEFAULT_DIMENSION_CAP)?);
    let alphas = [0.5, 1.0, 2.0];
    for k in 0..sizes.hamiltonian_instances {
        let alpha = alphas[k % alphas.len()];
        let pz: f64 = rng.random_range(0.0..1.0);
        let tag = format!("hamiltonian[{k}]");
        let params = ModelParams::along_z(alpha, pz, 0.6)?;
        let h = assemble_fiber(&grid, local.clone(), &params, Variant::Local)?;

        let mut probe = h.clone();
        if inject_fault {
            probe.inject_sign_fault();
        }
        rep.absorb(&format!("{tag}.stoquastic"), &stoquastic_check(&probe));
        rep.absorb(&format!("{tag}.semigroup"), &semigroup_positivity_check(&h, &[0.1, 1.0], 1e-12)?);
        rep.absorb(&format!("{tag}.duhamel"), &duhamel_check(&h, 1.0, 12, 1e-10, 1e-6)?);
        let res = lanczos_ground(&h.to_csr(), &SolverConfig::default())?;
        rep.absorb(&format!("{tag}.ground"), &ground_positivity_check(&res, GROUND_STRICT_TOL)?);

        let lambdas = [0.45, 0.6, 0.9];
        rep.absorb(
            &format!("{tag}.interaction_order"),
            &interaction_monotonicity_check(&grid, full.clone(), alpha, params.p, &lambdas)?,
        );
        let mut family = Vec::with_capacity(lambdas.len());
        for (i, &l) in lambdas.iter().enumerate() {
            let mut hl = assemble_fiber(&grid, full.clone(), &ModelParams::along_z(alpha, pz, l)?, Variant::Full)?;
            if inject_fault && i == 1 {
                hl.inject_sign_fault();
            }
            family.push(as_operator(&hl)?);
        }
        rep.absorb(&format!("{tag}.energy_order"), &monotone_energy_check(&family, 1e-10)?);
    }
    Ok(())
}

/// Run the battery. With `inject_fault`, one interaction sign is flipped
/// in the matrices fed to the stoquasticity and monotone-energy checks,
/// which must then fail while every other check is unaffected.
pub fn verify_operator_suite(seed: u64, sizes: &SuiteSizes, inject_fault: bool) -> Result<Report> {
    let mut rep = Report::new("operator_suite", sizes.max_dim).with_seed(seed);
    abstract_battery(&mut rep, seed, sizes)?;
    hamiltonian_battery(&mut rep, seed, sizes, inject_fault)?;
    Ok(rep)
}
