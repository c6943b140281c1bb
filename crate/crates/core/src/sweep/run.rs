//! Parallel sweeps over `(α, Λ, |P|)` with CSV output, a JSON run
//! manifest and resume.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{hex_digest, SweepConfig};
use crate::eigen::{lanczos_ground, SolverConfig, StartVector};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, DEFAULT_DIMENSION_CAP};
use crate::grid::{build_grid, MomentumGrid};
use crate::hamiltonian::{assemble_fiber, basis_for, ModelParams, Variant};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "POLARON_WORKERS";

pub const CSV_HEADER: &str = "alpha,lambda,p,e0,gap,residual,dim,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub lambda: f64,
    pub p: f64,
    pub e0: f64,
    pub gap: f64,
    pub residual: f64,
    pub dim: usize,
    pub wall_ms: u64,
}

impl SweepRow {
    fn key(&self) -> TripleKey {
        TripleKey::new(self.alpha, self.lambda, self.p)
    }
}

/// A triple whose solve failed; kept out of the energy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub alpha: f64,
    pub lambda: f64,
    pub p: f64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TripleKey([u64; 3]);

impl TripleKey {
    fn new(alpha: f64, lambda: f64, p: f64) -> Self {
        TripleKey([alpha.to_bits(), lambda.to_bits(), p.to_bits()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: String,
    pub seed: u64,
    pub crate_version: String,
    pub grid: String,
    pub rows: usize,
    pub failures: Vec<FailureRow>,
    pub csv_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Sorted by `(α, |P|, Λ)`.
    pub rows: Vec<SweepRow>,
    pub failures: Vec<FailureRow>,
    /// Rows taken over from an earlier run.
    pub reused: usize,
    pub computed: usize,
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        a.alpha
            .total_cmp(&b.alpha)
            .then(a.p.total_cmp(&b.p))
            .then(a.lambda.total_cmp(&b.lambda))
    });
}

struct Prepared {
    grid: MomentumGrid,
    bases: BTreeMap<u64, Arc<FockBasis>>,
}

/// Build the grid and every basis up front, so dimension-cap violations
/// abort before any solve.
fn prepare(cfg: &SweepConfig) -> Result<Prepared> {
    let grid = build_grid(cfg.grid.lambda_max, cfg.grid.spacing)?;
    let mut bases = BTreeMap::new();
    match cfg.variant {
        Variant::Full => {
            let top = *cfg.lambdas.last().expect("validated non-empty");
            let b = Arc::new(basis_for(&grid, top, cfg.n_max, Variant::Full, DEFAULT_DIMENSION_CAP)?);
            for l in &cfg.lambdas {
                bases.insert(l.to_bits(), b.clone());
            }
        }
        Variant::Local => {
            for &l in &cfg.lambdas {
                let b = basis_for(&grid, l, cfg.n_max, Variant::Local, DEFAULT_DIMENSION_CAP)?;
                bases.insert(l.to_bits(), Arc::new(b));
            }
        }
    }
    Ok(Prepared { grid, bases })
}

fn solver_for(cfg: &SweepConfig) -> SolverConfig {
    SolverConfig {
        start: StartVector::PerturbedOnes { seed: cfg.seed },
        ..cfg.solver.clone()
    }
}

fn solve_triple(cfg: &SweepConfig, prep: &Prepared, alpha: f64, lambda: f64, p: f64) -> Result<SweepRow> {
    let t0 = Instant::now();
    let basis = prep.bases[&lambda.to_bits()].clone();
    let params = ModelParams::along_z(alpha, p, lambda)?;
    let h = assemble_fiber(&prep.grid, basis, &params, cfg.variant)?;
    let csr = h.to_csr();
    let res = lanczos_ground(&csr, &solver_for(cfg))?;
    Ok(SweepRow {
        alpha,
        lambda,
        p,
        e0: res.e0,
        gap: res.gap,
        residual: res.residual,
        dim: h.dim,
        wall_ms: if cfg.timing { t0.elapsed().as_millis() as u64 } else { 0 },
    })
}

/// Solve every triple not already in `existing`, in a pool of
/// `workers` threads (default: rayon's choice or `POLARON_WORKERS`).
pub fn run_sweep_with(cfg: &SweepConfig, existing: Vec<SweepRow>, workers: Option<usize>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let have: HashSet<TripleKey> = existing.iter().map(SweepRow::key).collect();
    let mut jobs = Vec::new();
    for &a in &cfg.alphas {
        for &l in &cfg.lambdas {
            for &p in &cfg.p_magnitudes {
                if !have.contains(&TripleKey::new(a, l, p)) {
                    jobs.push((a, l, p));
                }
            }
        }
    }
    let reused = existing.len();
    let mut rows = existing;
    let mut failures = Vec::new();
    let computed = jobs.len();
    if !jobs.is_empty() {
        let prep = prepare(cfg)?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers.or_else(workers_from_env) {
            pool = pool.num_threads(n);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        let results: Vec<(f64, f64, f64, Result<SweepRow>)> = pool.install(|| {
            jobs.par_iter()
                .map(|&(a, l, p)| (a, l, p, solve_triple(cfg, &prep, a, l, p)))
                .collect()
        });
        for (alpha, lambda, p, r) in results {
            match r {
                Ok(row) => rows.push(row),
                Err(e) => failures.push(FailureRow {
                    alpha,
                    lambda,
                    p,
                    error: e.to_string(),
                }),
            }
        }
    }
    sort_rows(&mut rows);
    Ok(SweepOutcome {
        rows,
        failures,
        reused,
        computed,
    })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    run_sweep_with(cfg, Vec::new(), None)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header '{header}'")));
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn read_table(path: &Path) -> Result<Vec<SweepRow>> {
    rows_from_csv(&fs::read_to_string(path)?)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Run the sweep and persist the table and manifest. If the output and
/// its manifest already exist for the same configuration hash, their
/// rows are kept and only missing triples are solved; a manifest from a
/// different configuration is an error.
pub fn run_sweep_to_disk(cfg: &SweepConfig, workers: Option<usize>) -> Result<SweepOutcome> {
    let hash = cfg.hash();
    let manifest_path = cfg.manifest_path();
    let existing = if cfg.output.exists() && manifest_path.exists() {
        let old: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        if old.config_hash != hash {
            return Err(Error::Config(format!(
                "{} was produced by a different configuration (hash {}); move it aside or change output",
                cfg.output.display(),
                old.config_hash
            )));
        }
        read_table(&cfg.output)?
    } else {
        Vec::new()
    };
    let outcome = run_sweep_with(cfg, existing, workers)?;
    let csv = rows_to_csv(&outcome.rows)?;
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_atomic(&cfg.output, csv.as_bytes())?;
    let manifest = Manifest {
        config_hash: hash,
        config: cfg.canonical(),
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        grid: format!(
            "lambda_max={:?},spacing={:?}",
            cfg.grid.lambda_max, cfg.grid.spacing
        ),
        rows: outcome.rows.len(),
        failures: outcome.failures.clone(),
        csv_sha256: hex_digest(csv.as_bytes()),
    };
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(outcome)
}
