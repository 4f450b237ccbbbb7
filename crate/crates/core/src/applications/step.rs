use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};
use crate::tensor::{make_step_kernel, ChaosVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFamilyParams {
    pub n: usize,
}

/// The 3n×3n step matrices (A_{n,1}, A_{n,2}): √n times an n×n anti-identity
/// in the corner blocks (1,3) and (3,1) for the first, in the centre block
/// for the second.
pub fn step_matrices(n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n == 0 {
        return Err(ChaosError::InvalidParameter("step family needs n >= 1".into()));
    }
    let big = 3 * n;
    let s = (n as f64).sqrt();
    let mut a1 = DMatrix::zeros(big, big);
    let mut a2 = DMatrix::zeros(big, big);
    for i in 0..n {
        let j = n - 1 - i;
        a1[(i, 2 * n + j)] = s;
        a1[(2 * n + i, j)] = s;
        a2[(n + i, n + j)] = s;
    }
    Ok((a1, a2))
}

/// d = 2 second-chaos vector on N = 3n basis elements.
pub fn step_family(n: usize) -> Result<ChaosVector> {
    let (a1, a2) = step_matrices(n)?;
    ChaosVector::from_kernels(vec![make_step_kernel(&a1)?, make_step_kernel(&a2)?])
}
