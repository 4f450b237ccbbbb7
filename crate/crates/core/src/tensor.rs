//! Dense symmetric tensors over an orthonormal Gaussian basis, contractions,
//! and the real chaos product formula.
//!
//! Storage is row-major: the tuple `(i_1, ..., i_q)` lives at
//! `sum_k i_k * N^(q-1-k)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};

/// Hard cap on dense storage (entries).
const MAX_ENTRIES: usize = 1 << 27;

pub(crate) fn storage_len(order: usize, dim: usize) -> Result<usize> {
    u32::try_from(order)
        .ok()
        .and_then(|o| dim.checked_pow(o))
        .filter(|&n| n <= MAX_ENTRIES)
        .ok_or(ChaosError::TooLarge { order, dim })
}

pub fn flat_index(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

pub fn unflatten(mut flat: usize, dim: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of distinct tuples obtained by permuting a sorted tuple.
fn orbit_size(sorted: &[usize]) -> f64 {
    let mut denom = 1.0;
    let mut run = 1usize;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
            denom *= run as f64;
        } else {
            run = 1;
        }
    }
    factorial(sorted.len()) / denom
}

/// Average over all index permutations, done by accumulating each
/// permutation orbit at its sorted representative.
pub fn symmetrize_coeffs(order: usize, dim: usize, coeffs: &[f64]) -> Vec<f64> {
    if order <= 1 {
        return coeffs.to_vec();
    }
    let mut sums = vec![0.0; coeffs.len()];
    let mut idx = vec![0usize; order];
    for (flat, &v) in coeffs.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        unflatten(flat, dim, &mut idx);
        idx.sort_unstable();
        sums[flat_index(&idx, dim)] += v;
    }
    let mut out = vec![0.0; coeffs.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        unflatten(flat, dim, &mut idx);
        idx.sort_unstable();
        let key = flat_index(&idx, dim);
        if sums[key] != 0.0 {
            *slot = sums[key] / orbit_size(&idx);
        }
    }
    out
}

/// Largest deviation between an entry and any of its index permutations.
/// Orders up to 4 are scanned over every permutation; higher orders compare
/// against the sorted representative, which is equivalent.
pub fn symmetry_violation(order: usize, dim: usize, coeffs: &[f64]) -> (f64, Vec<usize>, Vec<usize>) {
    let mut worst = (0.0, Vec::new(), Vec::new());
    if order <= 1 {
        return worst;
    }
    let perms = if order <= 4 { permutations(order) } else { Vec::new() };
    let mut idx = vec![0usize; order];
    let mut other = vec![0usize; order];
    for (flat, &v) in coeffs.iter().enumerate() {
        unflatten(flat, dim, &mut idx);
        let mut check = |other: &[usize]| {
            let w = coeffs[flat_index(other, dim)];
            let dev = (v - w).abs();
            if dev > worst.0 || (dev.is_nan() && !worst.0.is_nan()) {
                worst = (dev, idx.clone(), other.to_vec());
            }
        };
        if order <= 4 {
            for p in &perms {
                for (k, &src) in p.iter().enumerate() {
                    other[k] = idx[src];
                }
                check(&other);
            }
        } else {
            other.copy_from_slice(&idx);
            other.sort_unstable();
            check(&other);
        }
    }
    worst
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Symmetric kernel of order `q` over an `N`-dimensional orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    order: usize,
    dim: usize,
    coeffs: Vec<f64>,
}

impl Kernel {
    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        let len = storage_len(order, dim)?;
        Ok(Self { order, dim, coeffs: vec![0.0; len] })
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Self { order: 0, dim, coeffs: vec![value] }
    }

    /// Checked constructor; rejects asymmetric input with the worst offender.
    pub fn new(order: usize, dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        let len = storage_len(order, dim)?;
        if coeffs.len() != len {
            return Err(ChaosError::DimensionMismatch { expected: len, found: coeffs.len() });
        }
        let scale = coeffs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let (violation, index, partner) = symmetry_violation(order, dim, &coeffs);
        if violation > 1e-12 * scale || violation.is_nan() {
            return Err(ChaosError::NotSymmetric { index, partner, violation });
        }
        Ok(Self { order, dim, coeffs })
    }

    /// Builds the symmetrization of an arbitrary coefficient array.
    pub fn symmetrized(order: usize, dim: usize, coeffs: &[f64]) -> Result<Self> {
        let len = storage_len(order, dim)?;
        if coeffs.len() != len {
            return Err(ChaosError::DimensionMismatch { expected: len, found: coeffs.len() });
        }
        Ok(Self { order, dim, coeffs: symmetrize_coeffs(order, dim, coeffs) })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(ChaosError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        // nalgebra is column-major; transpose gives the row-major layout.
        Self::new(2, m.nrows(), m.transpose().as_slice().to_vec())
    }

    pub fn basis_vector(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(ChaosError::DimensionMismatch { expected: dim, found: i + 1 });
        }
        let mut coeffs = vec![0.0; dim];
        coeffs[i] = 1.0;
        Ok(Self { order: 1, dim, coeffs })
    }

    /// Symmetrized tensor product of order-1 vectors.
    pub fn sym_outer(dim: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        let order = vectors.len();
        let len = storage_len(order, dim)?;
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(ChaosError::DimensionMismatch { expected: dim, found: v.len() });
        }
        let mut idx = vec![0usize; order];
        let coeffs: Vec<f64> = (0..len)
            .map(|flat| {
                unflatten(flat, dim, &mut idx);
                idx.iter().zip(vectors).map(|(&i, v)| v[i]).product()
            })
            .collect();
        Self::symmetrized(order, dim, &coeffs)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.coeffs[flat_index(idx, self.dim)]
    }

    pub fn to_matrix(&self) -> Option<DMatrix<f64>> {
        (self.order == 2).then(|| DMatrix::from_row_slice(self.dim, self.dim, &self.coeffs))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { order: self.order, dim: self.dim, coeffs: self.coeffs.iter().map(|x| x * c).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn inner(&self, other: &Kernel) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub(crate) fn add_assign_scaled(&mut self, other: &Kernel, c: f64) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
        Ok(())
    }

    fn same_shape(&self, other: &Kernel) -> Result<()> {
        if self.dim != other.dim {
            return Err(ChaosError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.order != other.order {
            return Err(ChaosError::DimensionMismatch { expected: self.order, found: other.order });
        }
        Ok(())
    }
}

/// Step-function kernel Σ a_ij 1_{α_i}(x) 1_{α_j}(y) on N equal cells of
/// [0,1), converted to orthonormal coordinates (A / N).
pub fn make_step_kernel(a: &DMatrix<f64>) -> Result<Kernel> {
    let n = a.nrows();
    Kernel::from_matrix(&(a / n as f64))
}

/// Unsymmetrized contraction: the last `r` slots of `f` are paired with the
/// last `r` slots of `g`. The result has order `p + q - 2r` with the free
/// slots of `f` first.
pub fn contract(f: &Kernel, g: &Kernel, r: usize) -> Result<Vec<f64>> {
    if f.dim != g.dim {
        return Err(ChaosError::DimensionMismatch { expected: f.dim, found: g.dim });
    }
    if r > f.order.min(g.order) {
        return Err(ChaosError::ContractionOutOfRange { r, p: f.order, q: g.order });
    }
    let n = f.dim;
    storage_len(f.order + g.order - 2 * r, n)?;
    let k = n.pow(r as u32);
    let a = n.pow((f.order - r) as u32);
    let b = n.pow((g.order - r) as u32);
    // Row-major (a x k) data read column-major is its (k x a) transpose.
    let ft = DMatrix::from_column_slice(k, a, &f.coeffs);
    let gt = DMatrix::from_column_slice(k, b, &g.coeffs);
    // (G F^T) is b x a; its column-major data is the row-major a x b product.
    let out = gt.transpose() * ft;
    Ok(out.as_slice().to_vec())
}

/// Symmetrized contraction f ⊗̃_r g.
pub fn contract_sym(f: &Kernel, g: &Kernel, r: usize) -> Result<Kernel> {
    let raw = contract(f, g, r)?;
    Kernel::symmetrized(f.order + g.order - 2 * r, f.dim, &raw)
}

/// Finite chaos expansion Σ_q I_q(f_q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosExpansion {
    dim: usize,
    terms: BTreeMap<usize, Kernel>,
}

impl ChaosExpansion {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut e = Self::zero(dim);
        e.terms.insert(0, Kernel::scalar(dim, c));
        e
    }

    pub fn from_kernel(k: Kernel) -> Self {
        let mut terms = BTreeMap::new();
        let dim = k.dim;
        terms.insert(k.order, k);
        Self { dim, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &BTreeMap<usize, Kernel> {
        &self.terms
    }

    pub fn term(&self, order: usize) -> Option<&Kernel> {
        self.terms.get(&order)
    }

    pub fn constant_term(&self) -> f64 {
        self.terms.get(&0).map_or(0.0, |k| k.coeffs[0])
    }

    /// Adds `c * k` to the term of matching order.
    pub fn add_kernel(&mut self, k: &Kernel, c: f64) -> Result<()> {
        if k.dim != self.dim {
            return Err(ChaosError::DimensionMismatch { expected: self.dim, found: k.dim });
        }
        match self.terms.get_mut(&k.order) {
            Some(t) => t.add_assign_scaled(k, c)?,
            None => {
                self.terms.insert(k.order, k.scaled(c));
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &ChaosExpansion) -> Result<ChaosExpansion> {
        let mut out = self.clone();
        for k in other.terms.values() {
            out.add_kernel(k, 1.0)?;
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { dim: self.dim, terms: self.terms.iter().map(|(&q, k)| (q, k.scaled(c))).collect() }
    }

    /// Order of the single term, if the expansion is pure.
    pub fn pure_order(&self) -> Option<usize> {
        (self.terms.len() == 1).then(|| *self.terms.keys().next().unwrap())
    }

    /// E[X²] by the isometry Σ_q q!‖f_q‖².
    pub fn second_moment(&self) -> f64 {
        self.terms.iter().map(|(&q, k)| factorial(q) * k.norm_sq()).sum()
    }

    /// Variance: the second moment without the constant term.
    pub fn variance(&self) -> f64 {
        self.terms.iter().filter(|(&q, _)| q > 0).map(|(&q, k)| factorial(q) * k.norm_sq()).sum()
    }
}

/// Real product formula, extended bilinearly over terms.
pub fn chaos_product(a: &ChaosExpansion, b: &ChaosExpansion) -> Result<ChaosExpansion> {
    if a.dim != b.dim {
        return Err(ChaosError::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    let mut out = ChaosExpansion::zero(a.dim);
    for (&p, f) in &a.terms {
        for (&q, g) in &b.terms {
            for r in 0..=p.min(q) {
                let c = factorial(r) * binomial(p, r) * binomial(q, r);
                out.add_kernel(&contract_sym(f, g, r)?, c)?;
            }
        }
    }
    Ok(out)
}

/// Vector (F_1, ..., F_d) of chaos expansions on a shared basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosVector {
    components: Vec<ChaosExpansion>,
}

impl ChaosVector {
    pub fn new(components: Vec<ChaosExpansion>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| ChaosError::InvalidParameter("a chaos vector needs d >= 1".into()))?;
        let dim = first.dim;
        if let Some(c) = components.iter().find(|c| c.dim != dim) {
            return Err(ChaosError::DimensionMismatch { expected: dim, found: c.dim });
        }
        Ok(Self { components })
    }

    pub fn from_kernels(kernels: Vec<Kernel>) -> Result<Self> {
        Self::new(kernels.into_iter().map(ChaosExpansion::from_kernel).collect())
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim
    }

    pub fn components(&self) -> &[ChaosExpansion] {
        &self.components
    }

    /// Common order and the kernels, for vectors whose components are pure.
    pub fn pure_kernels(&self) -> Result<(usize, Vec<&Kernel>)> {
        let mut order = None;
        let mut out = Vec::with_capacity(self.d());
        for c in &self.components {
            let q = c.pure_order().ok_or(ChaosError::MixedOrders)?;
            if *order.get_or_insert(q) != q {
                return Err(ChaosError::MixedOrders);
            }
            out.push(&c.terms[&q]);
        }
        Ok((order.unwrap(), out))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { components: self.components.iter().map(|e| e.scaled(c)).collect() }
    }
}

/// Cov(F_i, F_j) = Σ_{q≥1} q!⟨f_i^q, f_j^q⟩.
pub fn covariance(v: &ChaosVector) -> DMatrix<f64> {
    let d = v.d();
    DMatrix::from_fn(d, d, |i, j| {
        v.components[i]
            .terms
            .iter()
            .filter(|(&q, _)| q > 0)
            .filter_map(|(q, f)| v.components[j].terms.get(q).map(|g| factorial(*q) * f.inner(g).unwrap_or(0.0)))
            .sum()
    })
}
