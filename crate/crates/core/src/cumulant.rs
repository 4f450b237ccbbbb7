//! Joint cumulants of pure-order chaos vectors, Γ-variable expansions, the
//! rate functional M(F), and covariance renormalization.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};
use crate::multiindex::{distinct_arrangements, MultiIndex};
use crate::tensor::{contract_sym, covariance, factorial, ChaosExpansion, ChaosVector, Kernel};

/// Eigenvalue floor used for invertibility decisions.
pub const EIGEN_FLOOR: f64 = 1e-12;

fn exact_binomial(n: i128, k: i128) -> Result<i128> {
    if n < 0 || k < 0 {
        return Err(ChaosError::Domain(format!("binomial({n}, {k}) has a negative argument")));
    }
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul(n - i)
            .ok_or_else(|| ChaosError::Domain("integer overflow".into()))?
            / (i + 1);
    }
    Ok(acc)
}

fn exact_factorial(n: i128) -> Result<i128> {
    (1..=n).try_fold(1i128, |acc, k| acc.checked_mul(k).ok_or_else(|| ChaosError::Domain("integer overflow".into())))
}

/// One step of the c_{q,l} recursion: contracting an intermediate of order
/// `prev_order` with a new order-`q` factor over `r` slots.
fn recursion_factor(prev_order: i128, q: i128, r: i128) -> Result<i128> {
    if r < 1 {
        return Err(ChaosError::Domain(format!("contraction index r = {r} must be at least 1")));
    }
    let parts = [q, exact_factorial(r - 1)?, exact_binomial(prev_order - 1, r - 1)?, exact_binomial(q - 1, r - 1)?];
    parts
        .iter()
        .try_fold(1i128, |acc, &x| acc.checked_mul(x).ok_or_else(|| ChaosError::Domain("integer overflow".into())))
}

/// The recursive constant c_{q,l}(r_2, ..., r_s) for factor orders
/// `orders = (q_{λ_1}, ..., q_{λ_s})`. The empty sequence gives 1.
pub fn c_ql(orders: &[usize], rs: &[usize]) -> Result<Ratio<i128>> {
    if orders.len() < rs.len() + 1 {
        return Err(ChaosError::Domain(format!("{} orders cannot support {} contraction indices", orders.len(), rs.len())));
    }
    let mut c: i128 = 1;
    let mut current = orders[0] as i128;
    for (s, &r) in rs.iter().enumerate() {
        let q = orders[s + 1] as i128;
        let r = r as i128;
        c = c
            .checked_mul(recursion_factor(current, q, r)?)
            .ok_or_else(|| ChaosError::Domain("integer overflow".into()))?;
        current += q - 2 * r;
    }
    Ok(Ratio::from_integer(c))
}

fn check_sequence(v: &ChaosVector, seq: &[usize]) -> Result<(usize, Vec<Kernel>)> {
    if seq.is_empty() {
        return Err(ChaosError::EmptyMultiIndex);
    }
    let (q, ks) = v.pure_kernels()?;
    if let Some(&bad) = seq.iter().find(|&&i| i >= v.d()) {
        return Err(ChaosError::DimensionMismatch { expected: v.d(), found: bad + 1 });
    }
    Ok((q, seq.iter().map(|&i| ks[i].clone()).collect()))
}

/// The cumulant formula evaluated along one fixed ordering of the elementary
/// decomposition (contractions iterated left to right). This equals
/// (|m|-1)! E[Γ_{l_1..l_k}] for that ordering.
pub fn cumulant_along(v: &ChaosVector, seq: &[usize]) -> Result<f64> {
    let (q, fs) = check_sequence(v, seq)?;
    let k = fs.len();
    match k {
        1 => return Ok(0.0),
        2 => return Ok(factorial(q) * fs[0].inner(&fs[1])?),
        _ => {}
    }
    // DFS over r_2..r_{k-1}; the chain must end with order q to pair with f_{l_k}.
    fn dfs(fs: &[Kernel], q: usize, level: usize, chain: &Kernel, c: i128, acc: &mut f64) -> Result<()> {
        let k = fs.len();
        if level == k - 1 {
            if chain.order() == q {
                *acc += c as f64 * chain.inner(&fs[k - 1])?;
            }
            return Ok(());
        }
        let o = chain.order();
        for r in 1..=o.min(q) {
            let next_order = o + q - 2 * r;
            // intermediate orders stay positive
            if next_order == 0 {
                continue;
            }
            let factor = recursion_factor(o as i128, q as i128, r as i128)?;
            let next = contract_sym(chain, &fs[level], r)?;
            dfs(fs, q, level + 1, &next, c * factor, acc)?;
        }
        Ok(())
    }
    let mut acc = 0.0;
    dfs(&fs, q, 1, &fs[0], 1, &mut acc)?;
    Ok(factorial(q) * factorial(k - 1) * acc)
}

/// Joint cumulant κ_m of a pure common-order chaos vector. The ordered
/// formula is averaged over the distinct arrangements of the elementary
/// decomposition, which makes the result the symmetric joint cumulant; for
/// |m| ≤ 3 or a single repeated component there is only one value to take.
pub fn cumulant(v: &ChaosVector, m: &MultiIndex) -> Result<f64> {
    if m.abs() == 0 {
        return Err(ChaosError::EmptyMultiIndex);
    }
    if m.d() != v.d() {
        return Err(ChaosError::DimensionMismatch { expected: v.d(), found: m.d() });
    }
    let seq = m.decomposition();
    if seq.len() <= 3 {
        return cumulant_along(v, &seq);
    }
    let arrangements = distinct_arrangements(&seq);
    let mut total = 0.0;
    for a in &arrangements {
        total += cumulant_along(v, a)?;
    }
    Ok(total / arrangements.len() as f64)
}

/// Second-chaos cumulant through matrix traces:
/// κ = 2^{k-1} Σ_σ Tr(B_{l_1} B_{l_σ(2)} ⋯ B_{l_σ(k)}) over all orderings of
/// the remaining factors.
pub fn cumulant_q2_trace(v: &ChaosVector, m: &MultiIndex) -> Result<f64> {
    if m.abs() == 0 {
        return Err(ChaosError::EmptyMultiIndex);
    }
    if m.d() != v.d() {
        return Err(ChaosError::DimensionMismatch { expected: v.d(), found: m.d() });
    }
    let mats = second_chaos_matrices(v)?;
    let seq = m.decomposition();
    let k = seq.len();
    if k == 1 {
        return Ok(0.0);
    }
    let first = seq[0];
    let rest = &seq[1..];
    let mut counts = vec![0usize; v.d()];
    for &i in rest {
        counts[i] += 1;
    }
    let weight: f64 = counts.iter().map(|&c| factorial(c)).product();
    let mut sum = 0.0;
    for arr in distinct_arrangements(rest) {
        let (last, middle) = arr.split_last().unwrap();
        let mut prod = mats[first].clone();
        for &i in middle {
            prod = &prod * &mats[i];
        }
        // Tr(P B) without forming the final product
        sum += prod.component_mul(&mats[*last].transpose()).sum();
    }
    Ok(2f64.powi(k as i32 - 1) * weight * sum)
}

/// Kernel matrices of a pure second-chaos vector.
pub fn second_chaos_matrices(v: &ChaosVector) -> Result<Vec<DMatrix<f64>>> {
    v.components()
        .iter()
        .enumerate()
        .map(|(i, c)| match (c.pure_order(), c.term(2)) {
            (Some(2), Some(k)) => Ok(k.to_matrix().unwrap()),
            _ => Err(ChaosError::NotSecondChaos { component: i }),
        })
        .collect()
}

/// Chaos expansion of Γ_{l_1..l_k}(F) for the given ordering.
pub fn gamma_expansion(v: &ChaosVector, seq: &[usize]) -> Result<ChaosExpansion> {
    let (q, fs) = check_sequence(v, seq)?;
    let mut out = ChaosExpansion::zero(v.dim());
    if fs.len() == 1 {
        out.add_kernel(&fs[0], 1.0)?;
        return Ok(out);
    }
    fn dfs(fs: &[Kernel], q: usize, level: usize, chain: &Kernel, c: i128, out: &mut ChaosExpansion) -> Result<()> {
        let k = fs.len();
        let o = chain.order();
        for r in 1..=o.min(q) {
            let next_order = o + q - 2 * r;
            if level < k - 1 && next_order == 0 {
                continue;
            }
            let c_next = c
                .checked_mul(recursion_factor(o as i128, q as i128, r as i128)?)
                .ok_or_else(|| ChaosError::Domain("integer overflow".into()))?;
            let next = contract_sym(chain, &fs[level], r)?;
            if level == k - 1 {
                out.add_kernel(&next, c_next as f64)?;
            } else {
                dfs(fs, q, level + 1, &next, c_next, out)?;
            }
        }
        Ok(())
    }
    dfs(&fs, q, 1, &fs[0], 1, &mut out)?;
    Ok(out)
}

/// Average of Γ over the distinct arrangements of the elementary
/// decomposition of m; its constant term is κ_m / (|m|-1)!.
pub fn gamma_expansion_symmetrized(v: &ChaosVector, m: &MultiIndex) -> Result<ChaosExpansion> {
    if m.abs() == 0 {
        return Err(ChaosError::EmptyMultiIndex);
    }
    let arrangements = distinct_arrangements(&m.decomposition());
    let mut out = ChaosExpansion::zero(v.dim());
    for a in &arrangements {
        out = out.add(&gamma_expansion(v, a)?)?;
    }
    Ok(out.scaled(1.0 / arrangements.len() as f64))
}

/// All κ_m with 1 ≤ |m| ≤ max_order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantTable {
    pub d: usize,
    pub entries: BTreeMap<MultiIndex, f64>,
}

impl CumulantTable {
    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.entries.get(m).copied()
    }
}

pub fn cumulant_table(v: &ChaosVector, max_order: usize) -> Result<CumulantTable> {
    let mut entries = BTreeMap::new();
    for k in 1..=max_order {
        for m in MultiIndex::all_of_order(v.d(), k) {
            let val = cumulant(v, &m)?;
            entries.insert(m, val);
        }
    }
    Ok(CumulantTable { d: v.d(), entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThirdOrderEntry {
    pub m: MultiIndex,
    pub kappa: f64,
    pub multiplicity: f64,
}

/// The two branches of M(F) and their breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub d: usize,
    pub third: Vec<ThirdOrderEntry>,
    pub fourth: Vec<f64>,
    /// Σ over multi-indices m with |m| = 3 of |κ_m|.
    pub third_sum: f64,
    /// Σ over ordered triples (i,j,k) of |κ_{e_i+e_j+e_k}|.
    pub third_sum_ordered: f64,
    pub fourth_sum: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

pub fn rate_m(v: &ChaosVector) -> Result<RateReport> {
    v.pure_kernels()?;
    let d = v.d();
    let mut third = Vec::new();
    for m in MultiIndex::all_of_order(d, 3) {
        let kappa = cumulant(v, &m)?;
        let multiplicity = m.multiplicity();
        third.push(ThirdOrderEntry { m, kappa, multiplicity });
    }
    let fourth = (0..d)
        .map(|i| {
            let mut e = vec![0; d];
            e[i] = 4;
            cumulant(v, &MultiIndex::new(e))
        })
        .collect::<Result<Vec<_>>>()?;
    let third_sum = third.iter().map(|t| t.kappa.abs()).sum();
    let third_sum_ordered = third.iter().map(|t| t.multiplicity * t.kappa.abs()).sum();
    let fourth_sum: f64 = fourth.iter().sum();
    Ok(RateReport { d, third, fourth, third_sum, third_sum_ordered, fourth_sum, m: f64::max(third_sum, fourth_sum) })
}

fn sym_sqrt(m: &DMatrix<f64>, inverse: bool) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|l| {
        let s = l.max(0.0).sqrt();
        if inverse {
            1.0 / s
        } else {
            s
        }
    });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn check_symmetric_psd(c: &DMatrix<f64>) -> Result<()> {
    if c.nrows() != c.ncols() {
        return Err(ChaosError::DimensionMismatch { expected: c.nrows(), found: c.ncols() });
    }
    let scale = c.amax().max(1.0);
    if (c - c.transpose()).amax() > 1e-12 * scale {
        let (i, j) = (0..c.nrows())
            .flat_map(|i| (0..c.ncols()).map(move |j| (i, j)))
            .max_by(|a, b| (c[*a] - c[(a.1, a.0)]).abs().total_cmp(&(c[*b] - c[(b.1, b.0)]).abs()))
            .unwrap();
        return Err(ChaosError::NotSymmetric { index: vec![i, j], partner: vec![j, i], violation: (c[(i, j)] - c[(j, i)]).abs() });
    }
    let min = min_eigenvalue(c);
    if min < -EIGEN_FLOOR * scale {
        return Err(ChaosError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// F' = C^{1/2} C_F^{-1/2} F, so that Cov(F') = C.
pub fn normalize_covariance(v: &ChaosVector, target: &DMatrix<f64>) -> Result<ChaosVector> {
    let d = v.d();
    if target.nrows() != d {
        return Err(ChaosError::DimensionMismatch { expected: d, found: target.nrows() });
    }
    check_symmetric_psd(target)?;
    let cf = covariance(v);
    let min = min_eigenvalue(&cf);
    if min <= EIGEN_FLOOR {
        return Err(ChaosError::SingularCovariance { min_eigenvalue: min });
    }
    let map = sym_sqrt(target, false) * sym_sqrt(&cf, true);
    let comps = (0..d)
        .map(|i| {
            let mut acc = ChaosExpansion::zero(v.dim());
            for j in 0..d {
                acc = acc.add(&v.components()[j].scaled(map[(i, j)]))?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    ChaosVector::new(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::make_step_kernel;

    fn anti_vec() -> ChaosVector {
        let k = make_step_kernel(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        ChaosVector::from_kernels(vec![k]).unwrap()
    }

    #[test]
    fn c_ql_second_chaos_values() {
        assert_eq!(c_ql(&[2, 2], &[1]).unwrap(), Ratio::from_integer(2));
        assert_eq!(c_ql(&[2, 2, 2], &[1, 1]).unwrap(), Ratio::from_integer(4));
        assert_eq!(c_ql(&[2, 2, 2, 2], &[1, 1, 1]).unwrap(), Ratio::from_integer(8));
    }

    #[test]
    fn c_ql_full_contraction_is_factorial() {
        for q in 1..=6 {
            assert_eq!(c_ql(&[q, q], &[q]).unwrap(), Ratio::from_integer(exact_factorial(q as i128).unwrap()));
        }
    }

    #[test]
    fn c_ql_third_order_chain() {
        assert_eq!(c_ql(&[3, 3], &[2]).unwrap(), Ratio::from_integer(12));
        // 3 · 0! · C(6-4-1, 0) · C(2, 0) · 12
        assert_eq!(c_ql(&[3, 3, 3], &[2, 1]).unwrap(), Ratio::from_integer(36));
    }

    #[test]
    fn c_ql_domain_errors() {
        assert!(matches!(c_ql(&[2, 2], &[0]), Err(ChaosError::Domain(_))));
        // the chain is exhausted after (2,2) with r=2: next binomial top is -1
        assert!(matches!(c_ql(&[2, 2, 2], &[2, 1]), Err(ChaosError::Domain(_))));
        assert!(matches!(c_ql(&[2], &[1]), Err(ChaosError::Domain(_))));
    }

    #[test]
    fn anti_diagonal_fourth_cumulant() {
        let v = anti_vec();
        let m4 = MultiIndex::new(vec![4]);
        assert!((cumulant(&v, &m4).unwrap() - 6.0).abs() < 1e-12);
        assert!((cumulant_q2_trace(&v, &m4).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(cumulant(&v, &MultiIndex::new(vec![3])).unwrap(), 0.0);
        assert_eq!(cumulant(&v, &MultiIndex::new(vec![1])).unwrap(), 0.0);
        assert!((cumulant(&v, &MultiIndex::new(vec![2])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn odd_chaos_parity_gives_exact_zero() {
        let k = Kernel::symmetrized(3, 2, &[0.3, -0.1, 0.7, 0.2, 0.5, 0.9, -0.4, 0.6]).unwrap();
        let v = ChaosVector::from_kernels(vec![k]).unwrap();
        assert_eq!(cumulant(&v, &MultiIndex::new(vec![3])).unwrap(), 0.0);
        assert_eq!(cumulant(&v, &MultiIndex::new(vec![5])).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let v = anti_vec();
        assert_eq!(cumulant(&v, &MultiIndex::new(vec![0])), Err(ChaosError::EmptyMultiIndex));
        let mixed = ChaosVector::new(vec![
            ChaosExpansion::from_kernel(Kernel::basis_vector(2, 0).unwrap()),
            v.components()[0].clone(),
        ])
        .unwrap();
        assert_eq!(cumulant(&mixed, &MultiIndex::new(vec![1, 1])), Err(ChaosError::MixedOrders));
        assert!(matches!(gamma_expansion(&v, &[]), Err(ChaosError::EmptyMultiIndex)));
    }

    #[test]
    fn gamma_constant_term_anti_diagonal() {
        let g = gamma_expansion(&anti_vec(), &[0, 0, 0, 0]).unwrap();
        assert!((g.constant_term() - 1.0).abs() < 1e-12);
        let g2 = gamma_expansion(&anti_vec(), &[0, 0]).unwrap();
        assert!((g2.constant_term() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_report_anti_diagonal() {
        let r = rate_m(&anti_vec()).unwrap();
        assert_eq!(r.third_sum, 0.0);
        assert!((r.fourth_sum - 6.0).abs() < 1e-12);
        assert!((r.m - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rate_report_zero_vector() {
        let v = ChaosVector::from_kernels(vec![Kernel::zeros(2, 3).unwrap(); 2]).unwrap();
        assert_eq!(rate_m(&v).unwrap().m, 0.0);
    }

    #[test]
    fn normalize_scalar_case() {
        let v = anti_vec();
        let target = DMatrix::from_element(1, 1, 0.25);
        let w = normalize_covariance(&v, &target).unwrap();
        assert!((covariance(&w)[(0, 0)] - 0.25).abs() < 1e-12);
        let k0 = v.components()[0].term(2).unwrap();
        let k1 = w.components()[0].term(2).unwrap();
        assert!((k1.get(&[0, 1]) - 0.5 * k0.get(&[0, 1])).abs() < 1e-14);
    }

    #[test]
    fn normalize_errors() {
        let v = ChaosVector::from_kernels(vec![Kernel::zeros(2, 2).unwrap()]).unwrap();
        assert!(matches!(
            normalize_covariance(&v, &DMatrix::identity(1, 1)),
            Err(ChaosError::SingularCovariance { .. })
        ));
        assert!(matches!(
            normalize_covariance(&anti_vec(), &DMatrix::from_element(1, 1, -1.0)),
            Err(ChaosError::NotPositiveSemidefinite { .. })
        ));
    }
}
