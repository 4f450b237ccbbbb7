use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};

/// m ∈ ℕ₀^d.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    /// m = e_i summed over the given component indices.
    pub fn from_elementary(d: usize, seq: &[usize]) -> Result<Self> {
        let mut m = vec![0; d];
        for &i in seq {
            if i >= d {
                return Err(ChaosError::DimensionMismatch { expected: d, found: i + 1 });
            }
            m[i] += 1;
        }
        Ok(Self(m))
    }

    /// Unit multi-index e_i.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut m = vec![0; d];
        m[i] = 1;
        Self(m)
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn abs(&self) -> usize {
        self.0.iter().sum()
    }

    /// Elementary decomposition l_1, ..., l_|m| as component indices in
    /// non-decreasing order.
    pub fn decomposition(&self) -> Vec<usize> {
        self.0.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect()
    }

    /// Number of ordered elementary sequences producing this multi-index.
    pub fn multiplicity(&self) -> f64 {
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        fact(self.abs()) / self.0.iter().map(|&c| fact(c)).product::<f64>()
    }

    /// All multi-indices of dimension d with |m| = k, in descending
    /// lexicographic order (e.g. 3e_1 first).
    pub fn all_of_order(d: usize, k: usize) -> Vec<MultiIndex> {
        fn rec(d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if cur.len() + 1 == d {
                cur.push(left);
                out.push(MultiIndex(cur.clone()));
                cur.pop();
                return;
            }
            for c in (0..=left).rev() {
                cur.push(c);
                rec(d, left - c, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if d > 0 {
            rec(d, k, &mut Vec::with_capacity(d), &mut out);
        }
        out
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Distinct arrangements of a multiset, in lexicographic order.
pub fn distinct_arrangements(items: &[usize]) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = items.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    // next_permutation
    loop {
        let n = cur.len();
        if n < 2 {
            return out;
        }
        let mut i = n - 1;
        while i > 0 && cur[i - 1] >= cur[i] {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        let mut j = n - 1;
        while cur[j] <= cur[i - 1] {
            j -= 1;
        }
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}
