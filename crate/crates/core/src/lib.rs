//! Joint cumulants, Γ-variable chaos expansions and the optimal-rate
//! functional for vectors of multiple Wiener–Itô integrals on a finite
//! Gaussian basis, plus the worked applications (step kernels, complex
//! Ornstein–Uhlenbeck statistic, Toeplitz quadratic functionals).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod complex;
pub mod cumulant;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod multiindex;
pub mod stein;
pub mod tensor;

pub use error::{ChaosError, Result};
pub use multiindex::MultiIndex;
pub use tensor::{ChaosExpansion, ChaosVector, Kernel};
