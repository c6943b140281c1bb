//! Acceptance battery. Runs every criterion in sequence, prints one
//! PASS/FAIL line per criterion with its measured values, and exits
//! non-zero if any criterion fails or overruns its time budget.

use std::sync::Arc;
use std::time::{Duration, Instant};

use polaron::eigen::{ground_positivity_check, lanczos_ground, SolverConfig, GROUND_STRICT_TOL};
use polaron::fock::{Annihilated, Created, FockBasis, DEFAULT_DIMENSION_CAP};
use polaron::grid::{build_grid, MomentumGrid};
use polaron::hamiltonian::{
    assemble_fiber, basis_for, duhamel_check, interaction_monotonicity_check, semigroup_positivity_check,
    stoquastic_check, verify_field_bounds, ModelParams, Variant,
};
use polaron::sweep::{
    continuum_second_order, grid_second_order, run_sweep, verify_dispersion, verify_fiber_decomposition,
    verify_monotonicity, verify_operator_suite, verify_weak_coupling, FiberInstance, SuiteSizes, SweepConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const MONOTONE_TOL: f64 = 1e-9;
const STRICT_MARGIN: f64 = 1e-9;
const SEMIGROUP_TOL: f64 = 1e-12;
const DISPERSION_TOL: f64 = 1e-8;
const CONCAVITY_TOL: f64 = 1e-7;
const FIBER_TOL: f64 = 1e-8;
const EXTERIOR_WEIGHT_TOL: f64 = 1e-8;
const WEAK_ALPHA: f64 = 0.05;
const WEAK_FACTOR: f64 = 2.0;
const WEAK_CONTINUUM_REL: f64 = 0.05;
const DUHAMEL_TERM_TOL: f64 = 1e-10;
const DUHAMEL_SLACK: f64 = 1e-6;
const FIELD_TOL: f64 = 1e-9;
const SATURATION_TOL: f64 = 1e-8;
const CCR_TOL: f64 = 1e-15;

struct Outcome {
    ok: bool,
    summary: String,
}

fn pass_if(ok: bool, summary: String) -> Outcome {
    Outcome { ok, summary }
}

fn sweep_config(text: &str) -> SweepConfig {
    SweepConfig::parse(&format!("{text}\noutput = unused.csv\n")).expect("acceptance config parses")
}

fn solver() -> SolverConfig {
    SolverConfig::default()
}

/// Criteria 1 and 2 share one sweep.
fn exact_and_strict_monotonicity() -> (Outcome, Outcome) {
    let grid = build_grid(3.0, 0.75).unwrap();
    let lambdas = [1.0, 1.5, 2.0, 2.5, 3.0];
    let basis = Arc::new(basis_for(&grid, 3.0, 2, Variant::Full, DEFAULT_DIMENSION_CAP).unwrap());
    let mut order_ok = true;
    for p in [0.0, 0.5, 1.0] {
        let r = interaction_monotonicity_check(&grid, basis.clone(), 1.0, [0.0, 0.0, p], &lambdas).unwrap();
        order_ok &= r.passed();
    }
    let cfg = sweep_config(
        "alphas = 1\nlambdas = 1, 1.5, 2, 2.5, 3\np_magnitudes = 0, 0.5, 1\ngrid.lambda_max = 3\n\
         grid.spacing = 0.75\nn_max = 2\nvariant = full",
    );
    let out = run_sweep(&cfg).unwrap();
    let complete = out.failures.is_empty() && out.rows.len() == 15;
    let rep = verify_monotonicity(&out.rows, MONOTONE_TOL, STRICT_MARGIN).unwrap();
    let monotone = rep.verdicts.iter().filter(|(k, _)| k.ends_with("non_increasing")).all(|(_, &v)| v);
    let strict = rep.verdicts.iter().filter(|(k, _)| k.ends_with(".strict")).all(|(_, &v)| v);
    let n_strict = rep.verdicts.keys().filter(|k| k.ends_with(".strict")).count();
    let min_dec = rep
        .details
        .iter()
        .filter(|(k, _)| k.ends_with("min_decrement"))
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let c1 = pass_if(
        order_ok && complete && monotone,
        format!(
            "dim {}, H_L - H_L' entrywise >= 0 exactly: {order_ok}, E non-increasing within {MONOTONE_TOL:e}: {monotone}",
            basis.dim()
        ),
    );
    let c2 = pass_if(
        complete && strict && n_strict == 3,
        format!("{n_strict} groups with |P| < sqrt2, smallest decrement {min_dec:.3e} > {STRICT_MARGIN:e}"),
    );
    (c1, c2)
}

fn stoquasticity_and_semigroups() -> Outcome {
    let small = build_grid(1.0, 0.5).unwrap();
    let large = build_grid(2.0, 0.5).unwrap();
    let mut assembled = 0;
    let mut stoquastic = true;
    let mut dense_checked = 0;
    let mut strict_checked = 0;
    let mut semigroup_ok = true;
    let mut min_entry = f64::INFINITY;
    let cases: [(&MomentumGrid, f64, usize, Variant); 6] = [
        (&small, 0.5, 3, Variant::Local),
        (&small, 0.9, 1, Variant::Local),
        (&small, 1.0, 1, Variant::Local),
        (&small, 0.6, 1, Variant::Full),
        (&small, 0.9, 1, Variant::Full),
        (&large, 2.0, 2, Variant::Local),
    ];
    for (grid, lambda, n_max, variant) in cases {
        let basis = Arc::new(basis_for(grid, lambda, n_max, variant, DEFAULT_DIMENSION_CAP).unwrap());
        for alpha in [0.5, 1.0, 2.0] {
            for p in [0.0, 0.7] {
                let h = assemble_fiber(grid, basis.clone(), &ModelParams::along_z(alpha, p, lambda).unwrap(), variant)
                    .unwrap();
                assembled += 1;
                stoquastic &= stoquastic_check(&h).passed();
                if h.dim <= 512 {
                    dense_checked += 1;
                    let r = semigroup_positivity_check(&h, &[0.1, 1.0], SEMIGROUP_TOL).unwrap();
                    let connected = r.details["connected"] == 1.0;
                    if connected {
                        strict_checked += 1;
                    }
                    let has_strict = r.verdicts.keys().any(|k| k.starts_with("strictly_positive"));
                    semigroup_ok &= r.passed() && has_strict == connected;
                    min_entry = r
                        .details
                        .iter()
                        .filter(|(k, _)| k.starts_with("min_entry"))
                        .map(|(_, &v)| v)
                        .fold(min_entry, f64::min);
                }
            }
        }
    }
    pass_if(
        stoquastic && semigroup_ok && strict_checked > 0 && dense_checked > strict_checked,
        format!(
            "{assembled} matrices stoquastic: {stoquastic}; {dense_checked} semigroups >= -{SEMIGROUP_TOL:e} \
             (min {min_entry:.2e}), {strict_checked} connected ones strictly positive: {semigroup_ok}"
        ),
    )
}

fn ground_state_positivity() -> Outcome {
    let grid = build_grid(2.0, 0.5).unwrap();
    let alphas = [0.5, 1.0, 2.0];
    let lambdas = [1.0, 1.5, 2.0];
    let ps = [0.0, 0.3, 0.6, 0.9, 1.2];
    let bases: Vec<Arc<FockBasis>> = lambdas
        .iter()
        .map(|&l| Arc::new(basis_for(&grid, l, 2, Variant::Local, DEFAULT_DIMENSION_CAP).unwrap()))
        .collect();
    let mut passed = 0;
    let mut worst_ratio = f64::INFINITY;
    let mut min_coord = f64::INFINITY;
    for i in 0..20 {
        let (a, li, p) = (alphas[i % 3], (i / 3) % 3, ps[i % 5]);
        let h = assemble_fiber(&grid, bases[li].clone(), &ModelParams::along_z(a, p, lambdas[li]).unwrap(), Variant::Local)
            .unwrap();
        let res = lanczos_ground(&h.to_csr(), &solver()).unwrap();
        worst_ratio = worst_ratio.min(res.gap / res.residual.max(f64::MIN_POSITIVE));
        match ground_positivity_check(&res, GROUND_STRICT_TOL) {
            Ok(r) => {
                if r.passed() {
                    passed += 1;
                }
                min_coord = r
                    .details
                    .get("min_normalized_coordinate")
                    .copied()
                    .unwrap_or(f64::NAN)
                    .min(min_coord);
            }
            Err(e) => println!("  instance {i}: {e}"),
        }
    }
    pass_if(
        passed == 20,
        format!(
            "{passed}/20 instances non-degenerate (min gap/residual {worst_ratio:.2e}) with strictly positive ground \
             vector (min normalized coordinate {min_coord:.2e})"
        ),
    )
}

fn dispersion() -> Outcome {
    let cfg = sweep_config(
        "alphas = 1\nlambdas = 2\np_magnitudes = 0, 0.3, 0.6, 0.9, 1.2\ngrid.lambda_max = 2\n\
         grid.spacing = 0.5\nn_max = 2\nvariant = local",
    );
    let out = run_sweep(&cfg).unwrap();
    let rep = verify_dispersion(&out.rows, DISPERSION_TOL, CONCAVITY_TOL).unwrap();
    let margin = rep
        .details
        .iter()
        .filter(|(k, _)| k.ends_with("concavity_margin"))
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    pass_if(
        out.failures.is_empty() && out.rows.len() == 5 && rep.passed() && rep.verdicts.len() == 3,
        format!(
            "dim {}, E(0) <= E(P) <= E(0) + P^2/2 within {DISPERSION_TOL:e}, concavity margin {margin:.3e}",
            out.rows[0].dim
        ),
    )
}

fn fiber_decomposition() -> Outcome {
    let grid = build_grid(1.0, 0.5).unwrap();
    let inst = FiberInstance {
        grid: &grid,
        alpha: 1.0,
        lambda: 0.6,
        n_max: 2,
    };
    let rep = verify_fiber_decomposition(&inst, &[0.0, 1.0], FIBER_TOL).unwrap();
    let diff = |p: &str| (rep.details[&format!("p={p}.e_full")] - rep.details[&format!("p={p}.e_local")]).abs();
    let weight = rep.details["p=0.exterior_weight"].max(rep.details["p=1.exterior_weight"]);
    pass_if(
        rep.passed() && rep.dim <= 4096 && weight <= EXTERIOR_WEIGHT_TOL,
        format!(
            "dim {}, |E_full - E_loc| = {:.1e} (P=0), {:.1e} (P=1), exterior weight {weight:.1e}",
            rep.dim,
            diff("0"),
            diff("1")
        ),
    )
}

fn weak_coupling() -> Outcome {
    let lambda = 2.0;
    let cont = continuum_second_order(WEAK_ALPHA, lambda);
    let mut gaps = Vec::new();
    let mut oracle_ok = true;
    let mut worst = 0.0f64;
    for h in [0.5, 0.25, 0.125] {
        let grid = build_grid(lambda, h).unwrap();
        let rep = verify_weak_coupling(&grid, WEAK_ALPHA, lambda, 1, WEAK_FACTOR, &solver()).unwrap();
        oracle_ok &= rep.passed();
        worst = worst.max((rep.details["e0"] - rep.details["e2_grid"]).abs());
        let e2 = grid_second_order(&grid, WEAK_ALPHA, lambda).unwrap();
        gaps.push(((e2 - cont) / cont).abs());
    }
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let last = *gaps.last().unwrap();
    pass_if(
        oracle_ok && monotone && last <= WEAK_CONTINUUM_REL,
        format!(
            "max |E0 - E2_grid| = {worst:.2e} <= {:.1e}; continuum {cont:.6}, relative gaps {:.3} -> {:.3} -> {:.3}",
            WEAK_FACTOR * WEAK_ALPHA * WEAK_ALPHA,
            gaps[0],
            gaps[1],
            gaps[2]
        ),
    )
}

fn duhamel() -> Outcome {
    let grid = build_grid(1.0, 0.5).unwrap();
    let basis = Arc::new(basis_for(&grid, 0.6, 3, Variant::Local, DEFAULT_DIMENSION_CAP).unwrap());
    let k = assemble_fiber(&grid, basis, &ModelParams::along_z(0.5, 0.5, 0.6).unwrap(), Variant::Local).unwrap();
    let rep = duhamel_check(&k, 1.0, 12, DUHAMEL_TERM_TOL, DUHAMEL_SLACK).unwrap();
    let min_term = rep
        .details
        .iter()
        .filter(|(n, _)| n.starts_with("min_entry"))
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    pass_if(
        rep.passed() && k.dim <= 256,
        format!(
            "dim {}, min D_j entry {min_term:.2e}, |sum D_j - e^(-K)|_max = {:.2e} <= tail {:.2e} + {DUHAMEL_SLACK:e}",
            k.dim, rep.details["partial_sum_error"], rep.details["tail_bound"]
        ),
    )
}

fn abstract_suite() -> Outcome {
    let sizes = SuiteSizes {
        random_matrices: 100,
        max_dim: 64,
        vector_samples: 1000,
        hamiltonian_instances: 0,
    };
    let rep = verify_operator_suite(2024, &sizes, false).unwrap();
    let count = |k: &str| rep.details[k] as usize;
    pass_if(
        rep.passed(),
        format!(
            "100 matrices: Beurling-Deny disagreements {}, PF-Faris {}, order equivalence {}, domination failures {}",
            count("abstract.beurling_deny_disagreements"),
            count("abstract.pf_faris_disagreements"),
            count("abstract.equivalence_disagreements"),
            count("abstract.domination_failures")
        ),
    )
}

fn field_bounds() -> Outcome {
    let mut all = true;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=4);
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..2.0)).collect();
        let f: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        all &= verify_field_bounds(&a, &f, &[1, 2, 3], FIELD_TOL).unwrap().passed();
    }
    let single = verify_field_bounds(&[1.0], &[1.0], &[40], FIELD_TOL).unwrap();
    let sat = single.details["linear.n_max=40"];
    pass_if(
        all && single.passed() && (sat + 1.0).abs() <= SATURATION_TOL,
        format!("50 seeds hold within {FIELD_TOL:e}: {all}; single-mode minimum at n_max=40 is {sat:.12}"),
    )
}

fn ccr() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for m in 1..=4 {
        for n_max in 1..=3 {
            let b = FockBasis::enumerate(m, n_max).unwrap();
            for p in 0..b.dim() {
                let s = b.state(p);
                if s.total() as usize >= n_max {
                    continue;
                }
                for i in 0..m {
                    for j in 0..m {
                        // <t| a_i a_j† - a_j† a_i |s> over all t, as a sparse map.
                        let mut acc: std::collections::HashMap<Vec<u32>, f64> = Default::default();
                        if let Created::State(u, c1) = b.apply_create(j, &s).unwrap() {
                            if let Annihilated::State(v, c2) = b.apply_annihilate(i, &u).unwrap() {
                                *acc.entry(v.occupations).or_default() += c1 * c2;
                            }
                        }
                        if let Annihilated::State(u, c1) = b.apply_annihilate(i, &s).unwrap() {
                            if let Created::State(v, c2) = b.apply_create(j, &u).unwrap() {
                                *acc.entry(v.occupations).or_default() -= c1 * c2;
                            }
                        }
                        for (t, v) in acc {
                            let expect = if i == j && t == s.occupations { 1.0 } else { 0.0 };
                            worst = worst.max((v - expect).abs());
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    pass_if(
        worst <= CCR_TOL && checked > 0,
        format!("M <= 4, n_max <= 3: max deviation from delta_ij is {worst:.1e}"),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let list: [Criterion; 9] = [
        (3, "stoquasticity and semigroup positivity", Duration::from_secs(60), stoquasticity_and_semigroups),
        (4, "ground-state positivity and uniqueness", Duration::from_secs(120), ground_state_positivity),
        (5, "dispersion inequalities", Duration::from_secs(120), dispersion),
        (6, "fiber decomposition", Duration::from_secs(60), fiber_decomposition),
        (7, "weak-coupling oracle", Duration::from_secs(300), weak_coupling),
        (8, "interaction expansion positivity", Duration::from_secs(60), duhamel),
        (9, "abstract order suite", Duration::from_secs(120), abstract_suite),
        (10, "field-operator bounds", Duration::from_secs(60), field_bounds),
        (11, "canonical commutation relations", Duration::from_secs(10), ccr),
    ];
    let mut failures = 0;
    let mut line = |n: u32, name: &str, o: &Outcome, elapsed: Duration, budget: Duration| {
        let ok = o.ok && elapsed <= budget;
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {:<4} {name}: {} [{:.1}s / {}s]",
            if ok { "PASS" } else { "FAIL" },
            o.summary,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    };

    let t0 = Instant::now();
    let (c1, c2) = exact_and_strict_monotonicity();
    let elapsed = t0.elapsed();
    line(1, "exact structural monotonicity", &c1, elapsed, Duration::from_secs(120));
    line(2, "strict decrease", &c2, elapsed, Duration::from_secs(120));
    for (n, name, budget, f) in list {
        let t = Instant::now();
        let o = f();
        line(n, name, &o, t.elapsed(), budget);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
