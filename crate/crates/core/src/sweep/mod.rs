//! Parameter sweeps, persistence, and the verification drivers.

pub mod config;
pub mod run;
pub mod suite;
pub mod verify;

pub use config::{GridSpec, SweepConfig};
pub use run::{
    read_table, rows_from_csv, rows_to_csv, run_sweep, run_sweep_to_disk, run_sweep_with, FailureRow, Manifest,
    SweepOutcome, SweepRow, CSV_HEADER, WORKERS_ENV,
};
pub use suite::{verify_operator_suite, SuiteSizes};
pub use verify::{
    continuum_second_order, grid_second_order, verify_dispersion, verify_fiber_decomposition, verify_monotonicity,
    verify_weak_coupling, FiberInstance,
};
