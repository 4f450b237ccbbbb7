//! Complex multiple integrals I_{p,q}: finite-basis kernels with the complex
//! product formula, (1,1) grid kernels on [0,T] with quadrature
//! contractions, the moment functional M′, and real↔complex moment checks.
//!
//! Conventions: for a (1,1) kernel C, F = Σ_jk C_jk (Z_j Z̄_k − δ_jk) with
//! Z_j = (X_j + iY_j)/√2, so the first index group integrates against Z and
//! the second against Z̄.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cumulant::cumulant_q2_trace;
use crate::error::{ChaosError, Result};
use crate::multiindex::MultiIndex;
use crate::tensor::{binomial, factorial, flat_index, storage_len, unflatten, ChaosVector, Kernel};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Average over permutations inside each of the two index groups.
fn symmetrize_groups(p: usize, q: usize, dim: usize, coeffs: &[C64]) -> Vec<C64> {
    if p <= 1 && q <= 1 {
        return coeffs.to_vec();
    }
    let canon = |idx: &mut Vec<usize>| {
        idx[..p].sort_unstable();
        idx[p..].sort_unstable();
    };
    let orbit = |idx: &[usize]| {
        let group = |g: &[usize]| {
            let mut denom = 1.0;
            let mut run = 1usize;
            for w in g.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                    denom *= run as f64;
                } else {
                    run = 1;
                }
            }
            factorial(g.len()) / denom
        };
        group(&idx[..p]) * group(&idx[p..])
    };
    let mut sums = vec![ZERO; coeffs.len()];
    let mut idx = vec![0usize; p + q];
    for (flat, &v) in coeffs.iter().enumerate() {
        unflatten(flat, dim, &mut idx);
        canon(&mut idx);
        sums[flat_index(&idx, dim)] += v;
    }
    (0..coeffs.len())
        .map(|flat| {
            unflatten(flat, dim, &mut idx);
            canon(&mut idx);
            sums[flat_index(&idx, dim)] / orbit(&idx)
        })
        .collect()
}

/// Bidegree-(p,q) kernel over an N-dimensional complex orthonormal basis,
/// symmetric within the first p and within the last q slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisKernel {
    p: usize,
    q: usize,
    dim: usize,
    coeffs: Vec<C64>,
}

impl BasisKernel {
    pub fn new(p: usize, q: usize, dim: usize, coeffs: Vec<C64>) -> Result<Self> {
        let len = storage_len(p + q, dim)?;
        if coeffs.len() != len {
            return Err(ChaosError::DimensionMismatch { expected: len, found: coeffs.len() });
        }
        let sym = symmetrize_groups(p, q, dim, &coeffs);
        let scale = coeffs.iter().fold(1.0f64, |m, c| m.max(c.norm()));
        let (worst, at) = coeffs
            .iter()
            .zip(&sym)
            .enumerate()
            .map(|(k, (a, b))| ((a - b).norm(), k))
            .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
        if worst > 1e-12 * scale {
            let mut index = vec![0; p + q];
            unflatten(at, dim, &mut index);
            let mut partner = index.clone();
            partner[..p].sort_unstable();
            partner[p..].sort_unstable();
            return Err(ChaosError::NotSymmetric { index, partner, violation: worst });
        }
        Ok(Self { p, q, dim, coeffs })
    }

    pub fn symmetrized(p: usize, q: usize, dim: usize, coeffs: &[C64]) -> Result<Self> {
        let len = storage_len(p + q, dim)?;
        if coeffs.len() != len {
            return Err(ChaosError::DimensionMismatch { expected: len, found: coeffs.len() });
        }
        Ok(Self { p, q, dim, coeffs: symmetrize_groups(p, q, dim, coeffs) })
    }

    pub fn constant(dim: usize, c: C64) -> Self {
        Self { p: 0, q: 0, dim, coeffs: vec![c] }
    }

    /// (1,1) kernel from an N×N complex matrix (row = Z slot, column = Z̄ slot).
    pub fn from_matrix(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(ChaosError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        Ok(Self { p: 1, q: 1, dim: m.nrows(), coeffs: m.transpose().as_slice().to_vec() })
    }

    pub fn to_matrix(&self) -> Option<DMatrix<C64>> {
        (self.p == 1 && self.q == 1).then(|| DMatrix::from_row_slice(self.dim, self.dim, &self.coeffs))
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|x| x * c).collect(), ..self.clone() }
    }
}

/// f ⊗_{i,j} g: i slots of f's first group against g's second group, and j
/// slots of f's second group against g's first group, then symmetrized.
pub fn contract_basis(f: &BasisKernel, g: &BasisKernel, i: usize, j: usize) -> Result<BasisKernel> {
    if f.dim != g.dim {
        return Err(ChaosError::DimensionMismatch { expected: f.dim, found: g.dim });
    }
    let (a, b, c, d) = (f.p, f.q, g.p, g.q);
    if i > a.min(d) || j > b.min(c) {
        return Err(ChaosError::ContractionOutOfRange { r: i.max(j), p: a + b, q: c + d });
    }
    let n = f.dim;
    let (rp, rq) = (a + c - i - j, b + d - i - j);
    let len = storage_len(rp + rq, n)?;
    let mut out = vec![ZERO; len];
    let free_g = (c - j) + (d - i);
    let free_count = n.pow(free_g as u32);
    let mut fd = vec![0usize; a + b];
    let mut gfree = vec![0usize; free_g];
    let mut gd = vec![0usize; c + d];
    let mut od = vec![0usize; rp + rq];
    for (fi, &fv) in f.coeffs.iter().enumerate() {
        if fv == ZERO {
            continue;
        }
        unflatten(fi, n, &mut fd);
        let (f1, f2) = fd.split_at(a);
        for gf in 0..free_count {
            unflatten(gf, n, &mut gfree);
            let (g1free, g2free) = gfree.split_at(c - j);
            // g's first group: free digits then f's last j second-group digits
            gd[..c - j].copy_from_slice(g1free);
            gd[c - j..c].copy_from_slice(&f2[b - j..]);
            // g's second group: free digits then f's last i first-group digits
            gd[c..c + d - i].copy_from_slice(g2free);
            gd[c + d - i..].copy_from_slice(&f1[a - i..]);
            let gv = g.coeffs[flat_index(&gd, n)];
            if gv == ZERO {
                continue;
            }
            od[..a - i].copy_from_slice(&f1[..a - i]);
            od[a - i..rp].copy_from_slice(g1free);
            od[rp..rp + b - j].copy_from_slice(&f2[..b - j]);
            od[rp + b - j..].copy_from_slice(g2free);
            out[flat_index(&od, n)] += fv * gv;
        }
    }
    BasisKernel::symmetrized(rp, rq, n, &out)
}

/// 2^{-(p+q)/2} J_{p,q}(√2 z) with J_{p,q}(w) = Σ_k (−2)^k k! C(p,k) C(q,k) w^{p−k} w̄^{q−k}.
pub fn complex_hermite(p: usize, q: usize, z: C64) -> C64 {
    let w = z * std::f64::consts::SQRT_2;
    let mut acc = ZERO;
    for k in 0..=p.min(q) {
        let c = (-2f64).powi(k as i32) * factorial(k) * binomial(p, k) * binomial(q, k);
        acc += w.powu((p - k) as u32) * w.conj().powu((q - k) as u32) * c;
    }
    acc * 2f64.powf(-((p + q) as f64) / 2.0)
}

/// Pathwise value of I_{p,q}(f) at the complex Gaussian point z.
pub fn evaluate_basis(f: &BasisKernel, z: &[C64]) -> Result<C64> {
    if z.len() != f.dim {
        return Err(ChaosError::DimensionMismatch { expected: f.dim, found: z.len() });
    }
    let (p, q, n) = (f.p, f.q, f.dim);
    if p + q == 0 {
        return Ok(f.coeffs[0]);
    }
    fn sorted_tuples(len: usize, n: usize) -> Vec<Vec<usize>> {
        fn rec(len: usize, n: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == len {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(len, n, i, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(len, n, 0, &mut Vec::new(), &mut out);
        out
    }
    let counts = |t: &[usize]| {
        let mut c = vec![0usize; n];
        for &i in t {
            c[i] += 1;
        }
        c
    };
    let mult = |c: &[usize], total: usize| factorial(total) / c.iter().map(|&x| factorial(x)).product::<f64>();
    let firsts = sorted_tuples(p, n);
    let seconds = sorted_tuples(q, n);
    let mut acc = ZERO;
    let mut idx = vec![0usize; p + q];
    for s1 in &firsts {
        let ca = counts(s1);
        for s2 in &seconds {
            idx[..p].copy_from_slice(s1);
            idx[p..].copy_from_slice(s2);
            let coef = f.coeffs[flat_index(&idx, n)];
            if coef == ZERO {
                continue;
            }
            let cb = counts(s2);
            let mut v = coef * mult(&ca, p) * mult(&cb, q);
            for k in 0..n {
                if ca[k] + cb[k] > 0 {
                    v *= complex_hermite(ca[k], cb[k], z[k]);
                }
            }
            acc += v;
        }
    }
    Ok(acc)
}

/// (1,1) kernel f(t,s) on the midpoint grid t_a = (a − ½)T/G of [0,T].
///
/// The kernels of interest jump across the diagonal, so each node stores
/// both one-sided limits there: `lower[a]` is the limit from t > s and
/// `upper[a]` from t < s. The matrix diagonal holds their average.
#[derive(Debug, Clone, PartialEq)]
pub struct GridKernel {
    horizon: f64,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    lower: Vec<C64>,
    upper: Vec<C64>,
}

impl GridKernel {
    /// Samples `f(t, s)` off the diagonal; `lower`/`upper` give the diagonal
    /// limits at each node.
    pub fn from_fn<F, L, U>(horizon: f64, points: usize, f: F, lower: L, upper: U) -> Result<Self>
    where
        F: Fn(f64, f64) -> C64,
        L: Fn(f64) -> C64,
        U: Fn(f64) -> C64,
    {
        if !(horizon > 0.0) || points == 0 {
            return Err(ChaosError::InvalidParameter(format!("grid needs T > 0 and G >= 1, got T = {horizon}, G = {points}")));
        }
        let h = horizon / points as f64;
        let t: Vec<f64> = (0..points).map(|a| (a as f64 + 0.5) * h).collect();
        let lower: Vec<C64> = t.iter().map(|&x| lower(x)).collect();
        let upper: Vec<C64> = t.iter().map(|&x| upper(x)).collect();
        let mut re = DMatrix::zeros(points, points);
        let mut im = DMatrix::zeros(points, points);
        for b in 0..points {
            for a in 0..points {
                let v = if a == b { (lower[a] + upper[a]) * 0.5 } else { f(t[a], t[b]) };
                re[(a, b)] = v.re;
                im[(a, b)] = v.im;
            }
        }
        Ok(Self { horizon, re, im, lower, upper })
    }

    /// Kernel continuous across the diagonal, from node values.
    pub fn from_values(horizon: f64, values: &DMatrix<C64>) -> Result<Self> {
        let g = values.nrows();
        if g != values.ncols() {
            return Err(ChaosError::DimensionMismatch { expected: g, found: values.ncols() });
        }
        if !(horizon > 0.0) || g == 0 {
            return Err(ChaosError::InvalidParameter("grid needs T > 0 and G >= 1".into()));
        }
        let diag: Vec<C64> = (0..g).map(|a| values[(a, a)]).collect();
        Ok(Self { horizon, re: values.map(|v| v.re), im: values.map(|v| v.im), lower: diag.clone(), upper: diag })
    }

    /// Node values with explicit one-sided diagonal limits.
    pub fn from_parts(horizon: f64, values: &DMatrix<C64>, lower: Vec<C64>, upper: Vec<C64>) -> Result<Self> {
        let mut k = Self::from_values(horizon, values)?;
        if lower.len() != k.points() || upper.len() != k.points() {
            return Err(ChaosError::DimensionMismatch { expected: k.points(), found: lower.len().min(upper.len()) });
        }
        for a in 0..k.points() {
            let avg = (lower[a] + upper[a]) * 0.5;
            k.re[(a, a)] = avg.re;
            k.im[(a, a)] = avg.im;
        }
        k.lower = lower;
        k.upper = upper;
        Ok(k)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self) -> usize {
        self.re.nrows()
    }

    pub fn weight(&self) -> f64 {
        self.horizon / self.points() as f64
    }

    /// Quadrature weights (uniform, summing to T).
    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight(); self.points()]
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.weight();
        (0..self.points()).map(|a| (a as f64 + 0.5) * h).collect()
    }

    pub fn value(&self, a: usize, b: usize) -> C64 {
        C64::new(self.re[(a, b)], self.im[(a, b)])
    }

    pub fn diagonal_limits(&self) -> (&[C64], &[C64]) {
        (&self.lower, &self.upper)
    }

    pub fn scaled(&self, c: C64) -> Self {
        let re = &self.re * c.re - &self.im * c.im;
        let im = &self.re * c.im + &self.im * c.re;
        Self {
            horizon: self.horizon,
            re,
            im,
            lower: self.lower.iter().map(|x| x * c).collect(),
            upper: self.upper.iter().map(|x| x * c).collect(),
        }
    }

    fn check_same_grid(&self, other: &GridKernel) -> Result<()> {
        if self.points() != other.points() || self.horizon != other.horizon {
            return Err(ChaosError::RepresentationMismatch(format!(
                "grid (T={}, G={}) vs (T={}, G={})",
                self.horizon,
                self.points(),
                other.horizon,
                other.points()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &GridKernel) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            horizon: self.horizon,
            re: &self.re + &other.re,
            im: &self.im + &other.im,
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a + b).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a + b).collect(),
        })
    }
}

/// The (1,1) operations shared by basis and grid kernels: a square complex
/// matrix with a quadrature weight and one-sided diagonal limits.
#[derive(Debug, Clone)]
struct Op11 {
    horizon: Option<f64>,
    w: f64,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    lower: Vec<C64>,
    upper: Vec<C64>,
}

fn complex_gemm(ar: &DMatrix<f64>, ai: &DMatrix<f64>, a_real: bool, br: &DMatrix<f64>, bi: &DMatrix<f64>, b_real: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ar.nrows();
    match (a_real, b_real) {
        (true, true) => (ar * br, DMatrix::zeros(n, n)),
        (true, false) => (ar * br, ar * bi),
        (false, true) => (ar * br, ai * br),
        (false, false) => (ar * br - ai * bi, ar * bi + ai * br),
    }
}

impl Op11 {
    fn from_grid(k: &GridKernel) -> Self {
        Self { horizon: Some(k.horizon), w: k.weight(), re: k.re.clone(), im: k.im.clone(), lower: k.lower.clone(), upper: k.upper.clone() }
    }

    fn from_basis(k: &BasisKernel) -> Result<Self> {
        let m = k.to_matrix().ok_or_else(|| ChaosError::InvalidParameter(format!("expected bidegree (1,1), got {:?}", k.bidegree())))?;
        let diag: Vec<C64> = (0..k.dim).map(|a| m[(a, a)]).collect();
        Ok(Self { horizon: None, w: 1.0, re: m.map(|v| v.re), im: m.map(|v| v.im), lower: diag.clone(), upper: diag })
    }

    fn into_grid(self) -> GridKernel {
        GridKernel { horizon: self.horizon.unwrap(), re: self.re, im: self.im, lower: self.lower, upper: self.upper }
    }

    fn n(&self) -> usize {
        self.re.nrows()
    }

    fn diag(&self, a: usize) -> C64 {
        C64::new(self.re[(a, a)], self.im[(a, a)])
    }

    fn is_real(&self) -> bool {
        self.im.iter().all(|&x| x == 0.0)
    }

    /// h(t,s) = conj f(s,t).
    fn adjoint(&self) -> Self {
        Self {
            horizon: self.horizon,
            w: self.w,
            re: self.re.transpose(),
            im: -self.im.transpose(),
            lower: self.upper.iter().map(|x| x.conj()).collect(),
            upper: self.lower.iter().map(|x| x.conj()).collect(),
        }
    }

    /// (x, u) ↦ ∫ X(t,u) Y(u,s) du. The diagonal cell u = t is split at the
    /// kink, so the output diagonal uses the one-sided limits of both factors.
    fn mul(x: &Op11, y: &Op11) -> Op11 {
        let w = x.w;
        let (mut re, mut im) = complex_gemm(&x.re, &x.im, x.is_real(), &y.re, &y.im, y.is_real());
        re *= w;
        im *= w;
        let n = x.n();
        let mut diag = Vec::with_capacity(n);
        for a in 0..n {
            let plain = x.diag(a) * y.diag(a);
            let split = (x.lower[a] * y.upper[a] + x.upper[a] * y.lower[a]) * 0.5;
            let v = C64::new(re[(a, a)], im[(a, a)]) + (split - plain) * w;
            re[(a, a)] = v.re;
            im[(a, a)] = v.im;
            diag.push(v);
        }
        Op11 { horizon: x.horizon, w, re, im, lower: diag.clone(), upper: diag }
    }

    /// ∫∫ X(u,v) Y(v,u) du dv.
    fn pair(x: &Op11, y: &Op11) -> C64 {
        let n = x.n();
        let mut acc = ZERO;
        for b in 0..n {
            for a in 0..n {
                if a != b {
                    acc += C64::new(x.re[(a, b)], x.im[(a, b)]) * C64::new(y.re[(b, a)], y.im[(b, a)]);
                }
            }
            acc += (x.lower[b] * y.upper[b] + x.upper[b] * y.lower[b]) * 0.5;
        }
        acc * (x.w * x.w)
    }

    fn norm_sq(&self) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for b in 0..n {
            for a in 0..n {
                if a != b {
                    acc += self.re[(a, b)].powi(2) + self.im[(a, b)].powi(2);
                }
            }
            acc += 0.5 * (self.lower[b].norm_sqr() + self.upper[b].norm_sqr());
        }
        acc * self.w * self.w
    }

    fn add(&self, other: &Op11) -> Op11 {
        Op11 {
            horizon: self.horizon,
            w: self.w,
            re: &self.re + &other.re,
            im: &self.im + &other.im,
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a + b).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Grid (1,1) contractions: ⊗_{1,0}, ⊗_{0,1} and the full ⊗_{1,1}.
pub fn grid_contract_10(f: &GridKernel, g: &GridKernel) -> Result<GridKernel> {
    f.check_same_grid(g)?;
    Ok(Op11::mul(&Op11::from_grid(g), &Op11::from_grid(f)).into_grid())
}

pub fn grid_contract_01(f: &GridKernel, g: &GridKernel) -> Result<GridKernel> {
    f.check_same_grid(g)?;
    Ok(Op11::mul(&Op11::from_grid(f), &Op11::from_grid(g)).into_grid())
}

pub fn grid_contract_11(f: &GridKernel, g: &GridKernel) -> Result<C64> {
    f.check_same_grid(g)?;
    Ok(Op11::pair(&Op11::from_grid(f), &Op11::from_grid(g)))
}

/// h(t,s) = conj f(s,t).
pub fn grid_adjoint(f: &GridKernel) -> GridKernel {
    Op11::from_grid(f).adjoint().into_grid()
}

pub fn grid_norm_sq(f: &GridKernel) -> f64 {
    Op11::from_grid(f).norm_sq()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComplexKernel {
    Basis(BasisKernel),
    Grid(GridKernel),
}

impl ComplexKernel {
    pub fn bidegree(&self) -> (usize, usize) {
        match self {
            ComplexKernel::Basis(k) => k.bidegree(),
            ComplexKernel::Grid(_) => (1, 1),
        }
    }

    fn op11(&self) -> Result<Op11> {
        match self {
            ComplexKernel::Basis(k) => Op11::from_basis(k),
            ComplexKernel::Grid(k) => Ok(Op11::from_grid(k)),
        }
    }
}

/// A term of a complex chaos expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum TermKernel {
    Basis(BasisKernel),
    Grid(GridKernel),
    /// Order-(0,0) term of a grid expansion.
    Constant(C64),
    /// Unevaluated symmetrized tensor product f ⊗ g of two (1,1) grid
    /// kernels, bidegree (2,2).
    Outer(Box<GridKernel>, Box<GridKernel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTerm {
    pub bidegree: (usize, usize),
    /// Contraction pair (i, j) that produced the term; (0, 0) for inputs.
    pub contraction: (usize, usize),
    pub coef: f64,
    pub kernel: TermKernel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Representation {
    Basis { dim: usize },
    Grid { horizon: f64, points: usize },
}

/// Σ coef · I_{p,q}(kernel), kept as a list of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexExpansion {
    pub repr: Representation,
    pub terms: Vec<ComplexTerm>,
}

impl ComplexExpansion {
    pub fn from_kernel(k: ComplexKernel) -> Self {
        let (repr, bidegree, kernel) = match k {
            ComplexKernel::Basis(b) => (Representation::Basis { dim: b.dim }, b.bidegree(), TermKernel::Basis(b)),
            ComplexKernel::Grid(g) => {
                (Representation::Grid { horizon: g.horizon, points: g.points() }, (1, 1), TermKernel::Grid(g))
            }
        };
        Self { repr, terms: vec![ComplexTerm { bidegree, contraction: (0, 0), coef: 1.0, kernel }] }
    }

    pub fn unit(repr: Representation) -> Self {
        let kernel = match repr {
            Representation::Basis { dim } => TermKernel::Basis(BasisKernel::constant(dim, C64::new(1.0, 0.0))),
            Representation::Grid { .. } => TermKernel::Constant(C64::new(1.0, 0.0)),
        };
        Self { repr, terms: vec![ComplexTerm { bidegree: (0, 0), contraction: (0, 0), coef: 1.0, kernel }] }
    }

    /// Sum of the (0,0) terms, i.e. the expectation.
    pub fn constant_term(&self) -> C64 {
        self.terms
            .iter()
            .filter(|t| t.bidegree == (0, 0))
            .map(|t| {
                t.coef
                    * match &t.kernel {
                        TermKernel::Basis(b) => b.coeffs[0],
                        TermKernel::Constant(c) => *c,
                        _ => ZERO,
                    }
            })
            .sum()
    }

    /// Pathwise value at z for finite-basis expansions.
    pub fn evaluate(&self, z: &[C64]) -> Result<C64> {
        let mut acc = ZERO;
        for t in &self.terms {
            match &t.kernel {
                TermKernel::Basis(b) => acc += evaluate_basis(b, z)? * t.coef,
                _ => return Err(ChaosError::Unsupported("pathwise evaluation needs a finite basis".into())),
            }
        }
        Ok(acc)
    }
}

fn product_coefficient(a: usize, b: usize, c: usize, d: usize, i: usize, j: usize) -> f64 {
    binomial(a, i) * binomial(d, i) * binomial(b, j) * binomial(c, j) * factorial(i) * factorial(j)
}

fn grid_term_product(x: &ComplexTerm, y: &ComplexTerm) -> Result<Vec<ComplexTerm>> {
    use TermKernel::*;
    let coef = x.coef * y.coef;
    let term = |bidegree, contraction, coef, kernel| ComplexTerm { bidegree, contraction, coef, kernel };
    Ok(match (&x.kernel, &y.kernel) {
        (Constant(c), other) | (other, Constant(c)) => {
            let scaled = match other {
                Constant(d) => Constant(c * d),
                Grid(g) => Grid(g.scaled(*c)),
                Outer(f, g) => Outer(Box::new(f.scaled(*c)), g.clone()),
                Basis(_) => return Err(ChaosError::RepresentationMismatch("basis term in a grid expansion".into())),
            };
            let bidegree = if matches!(x.kernel, Constant(_)) { y.bidegree } else { x.bidegree };
            vec![term(bidegree, (0, 0), coef, scaled)]
        }
        (Grid(f), Grid(g)) => vec![
            term((2, 2), (0, 0), coef, Outer(Box::new(f.clone()), Box::new(g.clone()))),
            term((1, 1), (1, 0), coef, Grid(grid_contract_10(f, g)?)),
            term((1, 1), (0, 1), coef, Grid(grid_contract_01(f, g)?)),
            term((0, 0), (1, 1), coef, Constant(grid_contract_11(f, g)?)),
        ],
        _ => {
            return Err(ChaosError::Unsupported(
                "grid products beyond (1,1) x (1,1) are kept formal and cannot be multiplied again".into(),
            ))
        }
    })
}

/// Complex product formula, extended bilinearly over the terms.
pub fn complex_product(a: &ComplexExpansion, b: &ComplexExpansion) -> Result<ComplexExpansion> {
    if a.repr != b.repr {
        return Err(ChaosError::RepresentationMismatch(format!("{:?} vs {:?}", a.repr, b.repr)));
    }
    let mut terms = Vec::new();
    for x in &a.terms {
        for y in &b.terms {
            match (&x.kernel, &y.kernel) {
                (TermKernel::Basis(f), TermKernel::Basis(g)) => {
                    let (pa, pb) = f.bidegree();
                    let (pc, pd) = g.bidegree();
                    for i in 0..=pa.min(pd) {
                        for j in 0..=pb.min(pc) {
                            let k = contract_basis(f, g, i, j)?;
                            terms.push(ComplexTerm {
                                bidegree: k.bidegree(),
                                contraction: (i, j),
                                coef: x.coef * y.coef * product_coefficient(pa, pb, pc, pd, i, j),
                                kernel: TermKernel::Basis(k),
                            });
                        }
                    }
                }
                _ => terms.extend(grid_term_product(x, y)?),
            }
        }
    }
    Ok(ComplexExpansion { repr: a.repr, terms })
}

/// Third/fourth-order moment quantities of F = I_{1,1}(f).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexMomentReport {
    pub e_f3: C64,
    pub e_f2_fbar: C64,
    /// E|F|⁴ − 2(E|F|²)² − |EF²|².
    pub q4: f64,
    pub e_abs2: f64,
    pub e_f2: C64,
}

impl ComplexMomentReport {
    pub fn m_prime(&self) -> f64 {
        rate_mprime(self)
    }
}

/// M′ = max(|EF³|, |EF²F̄|, Q₄).
pub fn rate_mprime(r: &ComplexMomentReport) -> f64 {
    r.e_f3.norm().max(r.e_f2_fbar.norm()).max(r.q4)
}

/// Moments of a (1,1) integral through iterated contractions.
pub fn complex_moments(f: &ComplexKernel) -> Result<ComplexMomentReport> {
    if f.bidegree() != (1, 1) {
        return Err(ChaosError::InvalidParameter(format!("moments need bidegree (1,1), got {:?}", f.bidegree())));
    }
    let op = f.op11()?;
    let h = op.adjoint();
    let ff = Op11::mul(&op, &op);
    let mixed = Op11::mul(&op, &h).add(&Op11::mul(&h, &op));
    Ok(ComplexMomentReport {
        e_f3: Op11::pair(&ff, &op) * 2.0,
        e_f2_fbar: Op11::pair(&ff, &h) * 2.0,
        q4: 2.0 * ff.norm_sq() + mixed.norm_sq(),
        e_abs2: op.norm_sq(),
        e_f2: Op11::pair(&op, &op),
    })
}

/// Real second-chaos matrices (B₁, B₂) on the 2N coordinates (X, Y) with
/// F₁ = Re F and F₂ = Im F for a basis (1,1) kernel c = a + ib.
pub fn real_embedding(k: &BasisKernel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = k.to_matrix().ok_or_else(|| ChaosError::InvalidParameter("embedding needs bidegree (1,1)".into()))?;
    let n = k.dim;
    let a = m.map(|v| v.re);
    let b = m.map(|v| v.im);
    let block = |tl: &DMatrix<f64>, tr: &DMatrix<f64>, bl: &DMatrix<f64>, br: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(tl);
        out.view_mut((0, n), (n, n)).copy_from(tr);
        out.view_mut((n, 0), (n, n)).copy_from(bl);
        out.view_mut((n, n), (n, n)).copy_from(br);
        (&out + out.transpose()) * 0.25
    };
    Ok((block(&a, &b, &(-&b), &a), block(&b, &(-&a), &a, &b)))
}

/// (Re F, Im F) as a real second-chaos vector over 2N coordinates.
pub fn embedding_vector(k: &BasisKernel) -> Result<ChaosVector> {
    let (b1, b2) = real_embedding(k)?;
    ChaosVector::from_kernels(vec![Kernel::from_matrix(&b1)?, Kernel::from_matrix(&b2)?])
}

/// Real moments of F̃ = (F₁, F₂) used by the real↔complex inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealMoments {
    pub m30: f64,
    pub m21: f64,
    pub m12: f64,
    pub m03: f64,
    pub k40: f64,
    pub k22: f64,
    pub k04: f64,
}

impl RealMoments {
    /// Exact values for a basis (1,1) kernel through the real embedding.
    pub fn from_kernel(k: &BasisKernel) -> Result<Self> {
        let v = embedding_vector(k)?;
        let kap = |m: [usize; 2]| cumulant_q2_trace(&v, &MultiIndex::new(m.to_vec()));
        Ok(Self {
            m30: kap([3, 0])?,
            m21: kap([2, 1])?,
            m12: kap([1, 2])?,
            m03: kap([0, 3])?,
            k40: kap([4, 0])?,
            k22: kap([2, 2])?,
            k04: kap([0, 4])?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealComplexReport {
    pub real_third_sum: f64,
    pub complex_third_sum: f64,
    /// real_third_sum / complex_third_sum; within [1/8, √2] by the lemma.
    pub third_ratio: f64,
    pub lower_third_ok: bool,
    pub upper_third_ok: bool,
    pub fourth_real_sum: f64,
    pub q4: f64,
    pub fourth_lower_ok: bool,
    /// Q₄ / (κ₄(F₁) + κ₄(F₂)); bounded by an unquantified constant.
    pub fourth_ratio: f64,
}

/// Checks the third- and fourth-order real↔complex relations. `tol` is the
/// absolute tolerance used both for the consistency check between the real
/// and complex inputs and for the inequalities.
pub fn real_complex_checks(real: &RealMoments, cplx: &ComplexMomentReport, tol: f64) -> Result<RealComplexReport> {
    let ef3 = C64::new(real.m30 - 3.0 * real.m12, 3.0 * real.m21 - real.m03);
    let ef2fb = C64::new(real.m30 + real.m12, real.m21 + real.m03);
    let q4 = real.k40 + real.k04 + 2.0 * real.k22;
    let mismatch = [(ef3 - cplx.e_f3).norm(), (ef2fb - cplx.e_f2_fbar).norm(), (q4 - cplx.q4).abs()];
    if let Some(m) = mismatch.iter().find(|&&m| !(m <= tol)) {
        return Err(ChaosError::InvalidParameter(format!("real and complex moments disagree by {m:e} (tolerance {tol:e})")));
    }
    let real_third_sum = real.m30.abs() + real.m21.abs() + real.m12.abs() + real.m03.abs();
    let complex_third_sum = cplx.e_f3.norm() + cplx.e_f2_fbar.norm();
    let fourth_real_sum = real.k40 + real.k04;
    Ok(RealComplexReport {
        real_third_sum,
        complex_third_sum,
        third_ratio: real_third_sum / complex_third_sum,
        lower_third_ok: complex_third_sum / 8.0 <= real_third_sum + tol,
        upper_third_ok: real_third_sum <= std::f64::consts::SQRT_2 * complex_third_sum + tol,
        fourth_real_sum,
        q4: cplx.q4,
        fourth_lower_ok: fourth_real_sum <= cplx.q4 + tol,
        fourth_ratio: cplx.q4 / fourth_real_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{fill_normals, quadratic_form, substream};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = substream(seed, 0);
        let mut v = vec![0.0; 2 * n * n];
        fill_normals(&mut rng, &mut v);
        DMatrix::from_fn(n, n, |a, b| c(v[2 * (a * n + b)], v[2 * (a * n + b) + 1]) * 0.3)
    }

    fn point(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<f64>, Vec<C64>) {
        let mut xi = vec![0.0; 2 * n];
        fill_normals(rng, &mut xi);
        let z = (0..n).map(|k| c(xi[k], xi[n + k]) * std::f64::consts::FRAC_1_SQRT_2).collect();
        (xi, z)
    }

    #[test]
    fn complex_hermite_low_orders() {
        let z = c(0.3, -1.1);
        assert!((complex_hermite(1, 1, z) - (z.norm_sqr() - 1.0)).norm() < 1e-14);
        assert!((complex_hermite(2, 0, z) - z * z).norm() < 1e-14);
        assert!((complex_hermite(0, 1, z) - z.conj()).norm() < 1e-14);
    }

    #[test]
    fn embedding_matches_pathwise_values() {
        let m = random_matrix(3, 1);
        let k = BasisKernel::from_matrix(&m).unwrap();
        let (b1, b2) = real_embedding(&k).unwrap();
        let mut rng = substream(9, 0);
        for _ in 0..100 {
            let (xi, z) = point(3, &mut rng);
            let f = evaluate_basis(&k, &z).unwrap();
            assert!((f.re - quadratic_form(&b1, &xi)).abs() < 1e-12);
            assert!((f.im - quadratic_form(&b2, &xi)).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_covariance_matches_complex_second_moments() {
        let k = BasisKernel::from_matrix(&random_matrix(4, 2)).unwrap();
        let mo = complex_moments(&ComplexKernel::Basis(k.clone())).unwrap();
        let cov = crate::tensor::covariance(&embedding_vector(&k).unwrap());
        assert!((cov[(0, 0)] - (mo.e_abs2 + mo.e_f2.re) / 2.0).abs() < 1e-12);
        assert!((cov[(1, 1)] - (mo.e_abs2 - mo.e_f2.re) / 2.0).abs() < 1e-12);
        assert!((cov[(0, 1)] - mo.e_f2.im / 2.0).abs() < 1e-12);
    }

    #[test]
    fn product_with_unit() {
        let k = BasisKernel::from_matrix(&random_matrix(2, 3)).unwrap();
        let f = ComplexExpansion::from_kernel(ComplexKernel::Basis(k.clone()));
        let p = complex_product(&f, &ComplexExpansion::unit(f.repr)).unwrap();
        assert_eq!(p.terms.len(), 1);
        assert_eq!(p.terms[0].kernel, TermKernel::Basis(k));
    }

    #[test]
    fn square_has_four_terms() {
        let k = BasisKernel::from_matrix(&random_matrix(2, 4)).unwrap();
        let f = ComplexExpansion::from_kernel(ComplexKernel::Basis(k.clone()));
        let p = complex_product(&f, &f).unwrap();
        let degs: Vec<_> = p.terms.iter().map(|t| (t.bidegree, t.contraction)).collect();
        assert_eq!(degs, vec![((2, 2), (0, 0)), ((1, 1), (0, 1)), ((1, 1), (1, 0)), ((0, 0), (1, 1))]);
        let m = k.to_matrix().unwrap();
        assert!((p.constant_term() - (&m * &m).trace()).norm() < 1e-12);
    }

    #[test]
    fn representation_mismatch() {
        let k = BasisKernel::from_matrix(&random_matrix(2, 5)).unwrap();
        let f = ComplexExpansion::from_kernel(ComplexKernel::Basis(k));
        let g = ComplexExpansion::unit(Representation::Grid { horizon: 1.0, points: 4 });
        assert!(matches!(complex_product(&f, &g), Err(ChaosError::RepresentationMismatch(_))));
    }

    #[test]
    fn moments_match_trace_identities() {
        let m = random_matrix(4, 6);
        let k = ComplexKernel::Basis(BasisKernel::from_matrix(&m).unwrap());
        let r = complex_moments(&k).unwrap();
        let h = m.adjoint();
        let tr = |x: DMatrix<C64>| x.trace();
        assert!((r.e_f3 - tr(&m * &m * &m) * 2.0).norm() < 1e-12);
        assert!((r.e_f2_fbar - tr(&m * &m * &h) * 2.0).norm() < 1e-12);
        let q4 = tr(&m * &m * &h * &h) * 4.0 + tr(&m * &h * &m * &h) * 2.0;
        assert!((r.q4 - q4.re).abs() < 1e-12);
        assert!((r.e_abs2 - m.norm_squared()).abs() < 1e-12);
        assert!((r.e_f2 - tr(&m * &m)).norm() < 1e-12);
    }

    #[test]
    fn hermitian_kernel_has_real_mixed_moment() {
        let m = random_matrix(3, 7);
        let herm = (&m + m.adjoint()) * c(0.5, 0.0);
        let r = complex_moments(&ComplexKernel::Basis(BasisKernel::from_matrix(&herm).unwrap())).unwrap();
        assert!(r.e_f2_fbar.im.abs() < 1e-14);
    }

    #[test]
    fn mprime_scaling() {
        let m = random_matrix(3, 8);
        let r1 = complex_moments(&ComplexKernel::Basis(BasisKernel::from_matrix(&m).unwrap())).unwrap();
        let r2 = complex_moments(&ComplexKernel::Basis(BasisKernel::from_matrix(&(&m * c(-2.0, 0.0))).unwrap())).unwrap();
        assert!((r2.e_f3.norm() - 8.0 * r1.e_f3.norm()).abs() < 1e-12);
        assert!((r2.e_f2_fbar.norm() - 8.0 * r1.e_f2_fbar.norm()).abs() < 1e-12);
        assert!((r2.q4 - 16.0 * r1.q4).abs() < 1e-11);
        let zero = ComplexMomentReport { e_f3: ZERO, e_f2_fbar: ZERO, q4: 0.0, e_abs2: 1.0, e_f2: ZERO };
        assert_eq!(rate_mprime(&zero), 0.0);
    }

    #[test]
    fn real_variable_saturates_half_ratio() {
        let m = random_matrix(3, 9);
        let sym = (&m + m.transpose()).map(|v| c(v.re, 0.0));
        let k = BasisKernel::from_matrix(&sym).unwrap();
        // a real symmetric kernel gives F = F₁ with F₂ = 0 only if also Hermitian
        let r = complex_moments(&ComplexKernel::Basis(k.clone())).unwrap();
        let real = RealMoments::from_kernel(&k).unwrap();
        assert!(real.m21.abs() < 1e-12 && real.m12.abs() < 1e-12 && real.m03.abs() < 1e-12);
        let rep = real_complex_checks(&real, &r, 1e-10).unwrap();
        assert!((rep.third_ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_inputs_rejected() {
        let k = BasisKernel::from_matrix(&random_matrix(2, 10)).unwrap();
        let r = complex_moments(&ComplexKernel::Basis(k.clone())).unwrap();
        let mut real = RealMoments::from_kernel(&k).unwrap();
        real.m30 += 1.0;
        assert!(real_complex_checks(&real, &r, 1e-10).is_err());
    }

    #[test]
    fn grid_constant_kernel_closed_forms() {
        // f ≡ 1 on [0,T]²: E|F|² = T², EF² = T², EF³ = 2T³, Q₄ = 6T⁴
        let t = 2.0;
        let g = GridKernel::from_fn(t, 50, |_, _| c(1.0, 0.0), |_| c(1.0, 0.0), |_| c(1.0, 0.0)).unwrap();
        let r = complex_moments(&ComplexKernel::Grid(g)).unwrap();
        assert!((r.e_abs2 - 4.0).abs() < 1e-12);
        assert!((r.e_f3.re - 16.0).abs() < 1e-11);
        assert!((r.q4 - 96.0).abs() < 1e-10);
        assert_eq!(g_weights_sum(t, 50), t);
    }

    fn g_weights_sum(t: f64, points: usize) -> f64 {
        let g = GridKernel::from_values(t, &DMatrix::from_element(points, points, ZERO)).unwrap();
        let s: f64 = g.weights().iter().sum();
        (s * 1e12).round() / 1e12
    }

    #[test]
    fn grid_adjoint_swaps_sides() {
        let g = GridKernel::from_fn(1.0, 10, |t, s| if s < t { c(1.0, 0.5) } else { ZERO }, |_| c(1.0, 0.5), |_| ZERO).unwrap();
        let h = grid_adjoint(&g);
        let (lo, up) = h.diagonal_limits();
        assert_eq!(lo[0], ZERO);
        assert_eq!(up[0], c(1.0, -0.5));
        // disjoint supports: the full contraction vanishes exactly
        assert_eq!(grid_contract_11(&g, &g).unwrap(), ZERO);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn q4_is_nonnegative(seed in 0u64..10_000, n in 1usize..6) {
            let k = ComplexKernel::Basis(BasisKernel::from_matrix(&random_matrix(n, seed)).unwrap());
            prop_assert!(complex_moments(&k).unwrap().q4 >= -1e-12);
        }

        #[test]
        fn product_formula_pathwise(seed in 0u64..10_000, n in 1usize..4, pa in 0usize..3, pb in 0usize..3) {
            // kernels of bidegree (p,q) with p+q <= 2
            let degs = [(0usize, 0usize), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)];
            let (p1, q1) = degs[(pa + 3 * pb) % 6];
            let (p2, q2) = degs[(seed as usize) % 6];
            let mk = |p: usize, q: usize, s: u64| {
                let len = n.pow((p + q) as u32);
                let mut rng = substream(s, 1);
                let mut v = vec![0.0; 2 * len];
                fill_normals(&mut rng, &mut v);
                let coeffs: Vec<C64> = (0..len).map(|i| c(v[2 * i], v[2 * i + 1])).collect();
                BasisKernel::symmetrized(p, q, n, &coeffs).unwrap()
            };
            let f = ComplexExpansion::from_kernel(ComplexKernel::Basis(mk(p1, q1, seed)));
            let g = ComplexExpansion::from_kernel(ComplexKernel::Basis(mk(p2, q2, seed + 1)));
            let prod = complex_product(&f, &g).unwrap();
            let mut rng = substream(seed, 2);
            for _ in 0..50 {
                let (_, z) = point(n, &mut rng);
                let lhs = prod.evaluate(&z).unwrap();
                let rhs = f.evaluate(&z).unwrap() * g.evaluate(&z).unwrap();
                prop_assert!((lhs - rhs).norm() <= 1e-8 * (1.0 + rhs.norm()));
            }
        }
    }
}
