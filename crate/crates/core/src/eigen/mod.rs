//! Eigensolvers and semigroup oracles.

pub mod dense;
pub mod expm;
pub mod lanczos;
mod positivity;

pub use dense::{dense_spectrum, dense_spectrum_of, DenseSpectrum, DEFAULT_DENSE_CAP};
pub use expm::{expm, matrix_exponential, positive_semigroup, DEFAULT_EXPM_CAP};
pub use lanczos::{lanczos_ground, SolverConfig, SpectralResult, StartVector};
pub use positivity::{ground_positivity_check, GROUND_STRICT_TOL};
