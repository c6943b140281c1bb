use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use polaron::eigen::{lanczos_ground, StartVector};
use polaron::fock::{basis_dimension, DEFAULT_DIMENSION_CAP};
use polaron::grid::build_grid;
use polaron::hamiltonian::{active_mode_count, assemble_fiber, basis_for, ModelParams};
use polaron::sweep::{
    read_table, run_sweep_to_disk, verify_dispersion, verify_fiber_decomposition, verify_monotonicity,
    verify_operator_suite, verify_weak_coupling, FiberInstance, SuiteSizes, SweepConfig,
};
use polaron::{Error, Report};

/// Fixed-momentum polaron ground states on a truncated Fock space.
#[derive(Parser)]
#[command(name = "polaron", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every (alpha, lambda, |P|) triple of a config and write the CSV.
    Sweep {
        config: PathBuf,
        /// Worker threads (overrides POLARON_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a verification and print its JSON report.
    #[command(subcommand)]
    Verify(Verify),
    /// Ground state at one cutoff and momentum, for each alpha of a config.
    Spectrum {
        config: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        p: f64,
        /// Override the config's alphas.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
    },
    /// Summarize the grid of a config; `--modes` prints the mode table.
    Gridinfo {
        config: PathBuf,
        #[arg(long)]
        modes: bool,
    },
}

#[derive(Subcommand)]
enum Verify {
    /// Energies non-increasing in the cutoff, strictly for |P| < sqrt 2.
    Monotonicity {
        table: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1e-9)]
        strict_margin: f64,
    },
    /// E(0) <= E(P) <= E(0) + P^2/2 and concavity of E(P) - P^2/2.
    Dispersion {
        table: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 1e-7)]
        concavity_tol: f64,
    },
    /// Full-variant energies against local ones on a small dense instance.
    Fiber {
        config: PathBuf,
        #[command(flatten)]
        point: Point,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
        p: Vec<f64>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Ground energy against second-order perturbation theory at P = 0.
    Weak {
        config: PathBuf,
        #[command(flatten)]
        point: Point,
        #[arg(long, default_value_t = 2.0)]
        tol_factor: f64,
    },
    /// Randomized battery over the order checkers and assembled matrices.
    Operators {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        matrices: usize,
        #[arg(long, default_value_t = 64)]
        max_dim: usize,
        #[arg(long, default_value_t = 1000)]
        vectors: usize,
        #[arg(long, default_value_t = 4)]
        instances: usize,
        /// Flip one interaction sign to exercise the failure paths.
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct Point {
    /// Coupling; defaults to the config's first alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Cutoff; defaults to the config's first lambda.
    #[arg(long)]
    lambda: Option<f64>,
}

impl Point {
    fn resolve(&self, cfg: &SweepConfig) -> (f64, f64) {
        (self.alpha.unwrap_or(cfg.alphas[0]), self.lambda.unwrap_or(cfg.lambdas[0]))
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionCap { .. } | Error::Io(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<SweepConfig, Failure> {
    Ok(SweepConfig::from_file(path)?)
}

fn emit(report: &Report) -> Result<(), Failure> {
    println!("{}", report.to_json());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

#[derive(Serialize)]
struct SpectrumLine {
    alpha: f64,
    lambda: f64,
    p: f64,
    dim: usize,
    e0: f64,
    gap: f64,
    gap_reliable: bool,
    residual: f64,
    iterations: usize,
    start: String,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep { config, workers } => {
            let cfg = load(&config)?;
            let out = run_sweep_to_disk(&cfg, workers)?;
            eprintln!(
                "wrote {} rows to {} ({} reused, {} solved, {} failed)",
                out.rows.len(),
                cfg.output.display(),
                out.reused,
                out.computed,
                out.failures.len()
            );
            for f in &out.failures {
                eprintln!("failed: alpha={} lambda={} p={}: {}", f.alpha, f.lambda, f.p, f.error);
            }
            if out.failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
        Command::Verify(v) => match v {
            Verify::Monotonicity {
                table,
                tol,
                strict_margin,
            } => emit(&verify_monotonicity(&read_table(&table)?, tol, strict_margin)?),
            Verify::Dispersion {
                table,
                tol,
                concavity_tol,
            } => emit(&verify_dispersion(&read_table(&table)?, tol, concavity_tol)?),
            Verify::Fiber { config, point, p, tol } => {
                let cfg = load(&config)?;
                let (alpha, lambda) = point.resolve(&cfg);
                let grid = build_grid(cfg.grid.lambda_max, cfg.grid.spacing)?;
                let inst = FiberInstance {
                    grid: &grid,
                    alpha,
                    lambda,
                    n_max: cfg.n_max,
                };
                emit(&verify_fiber_decomposition(&inst, &p, tol)?)
            }
            Verify::Weak {
                config,
                point,
                tol_factor,
            } => {
                let cfg = load(&config)?;
                let (alpha, lambda) = point.resolve(&cfg);
                let grid = build_grid(cfg.grid.lambda_max, cfg.grid.spacing)?;
                let mut solver = cfg.solver.clone();
                solver.start = StartVector::PerturbedOnes { seed: cfg.seed };
                emit(&verify_weak_coupling(&grid, alpha, lambda, cfg.n_max, tol_factor, &solver)?)
            }
            Verify::Operators {
                seed,
                matrices,
                max_dim,
                vectors,
                instances,
                inject_fault,
            } => {
                let sizes = SuiteSizes {
                    random_matrices: matrices,
                    max_dim,
                    vector_samples: vectors,
                    hamiltonian_instances: instances,
                };
                emit(&verify_operator_suite(seed, &sizes, inject_fault)?)
            }
        },
        Command::Spectrum { config, lambda, p, alpha } => {
            let cfg = load(&config)?;
            let grid = build_grid(cfg.grid.lambda_max, cfg.grid.spacing)?;
            let basis = Arc::new(basis_for(&grid, lambda, cfg.n_max, cfg.variant, DEFAULT_DIMENSION_CAP)?);
            let mut solver = cfg.solver.clone();
            solver.start = StartVector::PerturbedOnes { seed: cfg.seed };
            for a in alpha.unwrap_or_else(|| cfg.alphas.clone()) {
                let h = assemble_fiber(&grid, basis.clone(), &ModelParams::along_z(a, p, lambda)?, cfg.variant)?;
                let res = lanczos_ground(&h.to_csr(), &solver)?;
                let line = SpectrumLine {
                    alpha: a,
                    lambda,
                    p,
                    dim: h.dim,
                    e0: res.e0,
                    gap: res.gap,
                    gap_reliable: res.gap_reliable,
                    residual: res.residual,
                    iterations: res.iterations,
                    start: res.start,
                };
                println!("{}", serde_json::to_string(&line).expect("plain data serializes"));
            }
            Ok(())
        }
        Command::Gridinfo { config, modes } => {
            let cfg = load(&config)?;
            let grid = build_grid(cfg.grid.lambda_max, cfg.grid.spacing)?;
            if modes {
                print!("{}", grid.to_text());
                return Ok(());
            }
            let ball = 4.0 / 3.0 * std::f64::consts::PI * cfg.grid.lambda_max.powi(3);
            println!("grid            {}", grid.id());
            println!("total weight    {:.12} (ball {:.12})", grid.total_weight(), ball);
            println!("mirror-closed   {}", grid.mirror_permutation().is_some());
            println!("n_max           {}", cfg.n_max);
            println!("variant         {}", cfg.variant);
            for &l in &cfg.lambdas {
                let m = active_mode_count(&grid, l, cfg.variant)?;
                let dim = basis_dimension(m, cfg.n_max);
                let within = if dim <= DEFAULT_DIMENSION_CAP as u128 { "" } else { "  (over cap)" };
                println!("lambda {l:<8} modes {m:<6} dim {dim}{within}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
