//! Worked examples: step-function kernels, the complex Ornstein–Uhlenbeck
//! statistic, and Toeplitz quadratic functionals.

pub mod ou;
pub mod quadrature;
pub mod step;
pub mod toeplitz;

pub use ou::{ou_closed_forms, ou_grid_kernel, ou_sample_moments, ou_simulate, OUParams, OUSampleMoments};
pub use step::{step_family, step_matrices, StepFamilyParams};
pub use toeplitz::{toeplitz_covariance, toeplitz_cumulant, Spectral, ToeplitzParams, ToeplitzReport};
