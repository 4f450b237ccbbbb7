//! Cumulants of vectors of normalized Toeplitz quadratic functionals through
//! discretized truncated Toeplitz operators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::quadrature::{integrate_half_line, integrate_line};
use crate::error::{ChaosError, Result};
use crate::multiindex::MultiIndex;
use crate::tensor::factorial;

const QUAD_TOL: f64 = 1e-12;

/// Even integrable functions with closed-form Fourier transforms
/// ψ̂(t) = ∫ e^{iλt} ψ(λ) dλ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Spectral {
    /// Σ amp · e^{−α x²}.
    GaussianMix { terms: Vec<(f64, f64)> },
    /// 1/(1 + x²).
    Cauchy,
    Zero,
}

impl Spectral {
    pub fn gaussian() -> Self {
        Spectral::GaussianMix { terms: vec![(1.0, 1.0)] }
    }

    /// Catalog lookup: "gaussian", "cauchy", "zero", "case-ii".
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "cauchy" => Ok(Spectral::Cauchy),
            "zero" => Ok(Spectral::Zero),
            "case-ii" => case_ii_weight(),
            other => Err(ChaosError::InvalidParameter(format!("unknown catalog entry {other:?}"))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Spectral::GaussianMix { terms } => terms.iter().map(|&(a, al)| a * (-al * x * x).exp()).sum(),
            Spectral::Cauchy => 1.0 / (1.0 + x * x),
            Spectral::Zero => 0.0,
        }
    }

    pub fn fourier(&self, t: f64) -> f64 {
        match self {
            Spectral::GaussianMix { terms } => {
                terms.iter().map(|&(a, al)| a * (PI / al).sqrt() * (-t * t / (4.0 * al)).exp()).sum()
            }
            Spectral::Cauchy => PI * (-t.abs()).exp(),
            Spectral::Zero => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Spectral::GaussianMix { terms } = self {
            if terms.is_empty() || terms.iter().any(|&(a, al)| !a.is_finite() || !(al > 0.0)) {
                return Err(ChaosError::InvalidParameter("gaussian mixture needs finite amplitudes and positive rates".into()));
            }
        }
        Ok(())
    }
}

/// Artifact-chosen weight g = e^{−x²} − c e^{−x²/4} for f = e^{−x²}, with c
/// fixed so that ∫ f³g³ = 0 while ∫ f⁴g⁴ > 0. Every third-order limit then
/// vanishes for the vector (g).
pub fn case_ii_weight() -> Result<Spectral> {
    // ∫ e^{−3x²} (e^{−x²} − c e^{−x²/4})³ = Σ_k C(3,k)(−c)^k √(π/(6 − 3k/4))
    let h = |c: f64| (0..4).map(|k| [1.0, 3.0, 3.0, 1.0][k] * (-c).powi(k as i32) * (PI / (6.0 - 0.75 * k as f64)).sqrt()).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    while h(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Spectral::GaussianMix { terms: vec![(1.0, 1.0), (-0.5 * (lo + hi), 0.25)] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzParams {
    pub f: Spectral,
    pub g: Vec<Spectral>,
    pub horizon: f64,
    pub grid: usize,
    pub m: MultiIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzReport {
    /// T^{|m|/2−1} κ_m(G_T).
    pub scaled_trace: f64,
    pub limit_integral: f64,
    pub relative_gap: f64,
}

/// M[a][b] = ψ̂(t_a − t_b) ΔT on midpoint nodes of [0,T]; it depends only on
/// a − b.
pub fn toeplitz_matrix(psi: &Spectral, horizon: f64, grid: usize) -> DMatrix<f64> {
    let h = horizon / grid as f64;
    let col: Vec<f64> = (0..grid).map(|k| psi.fourier(k as f64 * h) * h).collect();
    DMatrix::from_fn(grid, grid, |a, b| col[a.abs_diff(b)])
}

fn check(p: &ToeplitzParams) -> Result<()> {
    if p.m.d() != p.g.len() {
        return Err(ChaosError::DimensionMismatch { expected: p.g.len(), found: p.m.d() });
    }
    if p.m.abs() < 2 {
        return Err(ChaosError::InvalidParameter(format!("Toeplitz cumulants need |m| >= 2, got {}", p.m.abs())));
    }
    if !(p.horizon > 0.0) || p.grid < 2 {
        return Err(ChaosError::InvalidParameter("need T > 0 and G >= 2".into()));
    }
    p.f.validate()?;
    p.g.iter().try_for_each(Spectral::validate)
}

/// Tr Π_i [B(f) B(g_{l_i})] on the grid.
fn alternating_trace(f: &DMatrix<f64>, gs: &[DMatrix<f64>], seq: &[usize]) -> f64 {
    let mut cache: Vec<Option<DMatrix<f64>>> = vec![None; gs.len()];
    for &l in seq {
        if cache[l].is_none() {
            cache[l] = Some(f * &gs[l]);
        }
    }
    let factor = |l: usize| cache[l].as_ref().unwrap();
    if seq.len() == 1 {
        return factor(seq[0]).trace();
    }
    let mut acc = factor(seq[0]).clone();
    for &l in &seq[1..seq.len() - 1] {
        acc = &acc * factor(l);
    }
    // Tr(XY) without forming XY
    acc.component_mul(&factor(seq[seq.len() - 1]).transpose()).sum()
}

/// 2^{k−1}(k−1)!(2π)^{2k−1} ∫ f^k Π g_{l_i} over ℝ.
pub fn toeplitz_limit(f: &Spectral, g: &[Spectral], m: &MultiIndex) -> Result<f64> {
    let seq = m.decomposition();
    let k = seq.len();
    let integral = integrate_line(|x| f.eval(x).powi(k as i32) * seq.iter().map(|&l| g[l].eval(x)).product::<f64>(), QUAD_TOL)?;
    Ok(2f64.powi(k as i32 - 1) * factorial(k - 1) * (2.0 * PI).powi(2 * k as i32 - 1) * integral)
}

pub fn toeplitz_cumulant(p: &ToeplitzParams) -> Result<ToeplitzReport> {
    check(p)?;
    let seq = p.m.decomposition();
    let k = seq.len();
    let fm = toeplitz_matrix(&p.f, p.horizon, p.grid);
    let gm: Vec<DMatrix<f64>> = p.g.iter().map(|g| toeplitz_matrix(g, p.horizon, p.grid)).collect();
    let tr = alternating_trace(&fm, &gm, &seq);
    // T^{k/2−1} · T^{−k/2} 2^{k−1}(k−1)! Tr
    let scaled_trace = 2f64.powi(k as i32 - 1) * factorial(k - 1) * tr / p.horizon;
    let limit_integral = toeplitz_limit(&p.f, &p.g, &p.m)?;
    let relative_gap = if limit_integral == 0.0 {
        if scaled_trace == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (scaled_trace - limit_integral).abs() / limit_integral.abs()
    };
    Ok(ToeplitzReport { scaled_trace, limit_integral, relative_gap })
}

/// Covariance of G_T on the grid next to the limiting matrix
/// 16π³ ∫₀^∞ f² g_i g_j.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCovariance {
    pub finite: DMatrix<f64>,
    pub limit: DMatrix<f64>,
}

pub fn toeplitz_covariance(f: &Spectral, g: &[Spectral], horizon: f64, grid: usize) -> Result<ToeplitzCovariance> {
    let d = g.len();
    if d == 0 {
        return Err(ChaosError::InvalidParameter("need at least one weight".into()));
    }
    let fm = toeplitz_matrix(f, horizon, grid);
    let gm: Vec<DMatrix<f64>> = g.iter().map(|x| toeplitz_matrix(x, horizon, grid)).collect();
    let mut finite = DMatrix::zeros(d, d);
    let mut limit = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let c = 2.0 * alternating_trace(&fm, &gm, &[i, j]) / horizon;
            let l = 16.0 * PI.powi(3) * integrate_half_line(|x| f.eval(x).powi(2) * g[i].eval(x) * g[j].eval(x), QUAD_TOL)?;
            finite[(i, j)] = c;
            finite[(j, i)] = c;
            limit[(i, j)] = l;
            limit[(j, i)] = l;
        }
    }
    Ok(ToeplitzCovariance { finite, limit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(f: Spectral, g: Spectral, m: usize, t: f64, grid: usize) -> ToeplitzParams {
        ToeplitzParams { f, g: vec![g], horizon: t, grid, m: MultiIndex::new(vec![m]) }
    }

    #[test]
    fn gaussian_second_order_limit() {
        let l = toeplitz_limit(&Spectral::gaussian(), &[Spectral::gaussian()], &MultiIndex::new(vec![2])).unwrap();
        assert!((l - (2.0 * PI).powi(3) * PI.sqrt()).abs() < 1e-9 * l);
    }

    #[test]
    fn zero_weight_gives_zero() {
        let r = toeplitz_cumulant(&params(Spectral::gaussian(), Spectral::Zero, 3, 10.0, 100)).unwrap();
        assert_eq!(r.scaled_trace, 0.0);
        assert_eq!(r.limit_integral, 0.0);
        assert_eq!(r.relative_gap, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(toeplitz_cumulant(&params(Spectral::gaussian(), Spectral::gaussian(), 1, 10.0, 100)).is_err());
        assert!(Spectral::from_name("lorentz").is_err());
        let mut p = params(Spectral::gaussian(), Spectral::gaussian(), 2, 10.0, 100);
        p.m = MultiIndex::new(vec![1, 1]);
        assert!(toeplitz_cumulant(&p).is_err());
    }

    #[test]
    fn fourier_pairs_match_quadrature() {
        for s in [Spectral::gaussian(), case_ii_weight().unwrap()] {
            for &t in &[0.0, 0.7, 2.5] {
                let q = integrate_line(|x| (t * x).cos() * s.eval(x), 1e-12).unwrap();
                assert!((q - s.fourier(t)).abs() < 1e-8, "{s:?} at {t}");
            }
        }
        // the Cauchy pair through the inverse transform, whose integrand decays exponentially
        for &x in &[0.0, 0.7, 2.5] {
            let q = integrate_line(|t| (t * x).cos() * Spectral::Cauchy.fourier(t), 1e-12).unwrap() / (2.0 * PI);
            assert!((q - Spectral::Cauchy.eval(x)).abs() < 1e-8, "cauchy at {x}");
        }
    }

    #[test]
    fn case_ii_candidate_properties() {
        let f = Spectral::gaussian();
        let g = case_ii_weight().unwrap();
        let third = integrate_line(|x| f.eval(x).powi(3) * g.eval(x).powi(3), 1e-14).unwrap();
        let fourth = integrate_line(|x| f.eval(x).powi(4) * g.eval(x).powi(4), 1e-14).unwrap();
        assert!(third.abs() < 1e-12);
        assert!(fourth > 1e-6);
    }

    #[test]
    fn gap_shrinks_with_grid() {
        let gap = |grid| toeplitz_cumulant(&params(Spectral::Cauchy, Spectral::gaussian(), 2, 20.0, grid)).unwrap().scaled_trace;
        let (a, b, c) = (gap(100), gap(200), gap(400));
        assert!((b - c).abs() < (a - b).abs());
    }

    #[test]
    fn alternating_trace_matches_naive() {
        let f = toeplitz_matrix(&Spectral::gaussian(), 5.0, 30);
        let g = vec![toeplitz_matrix(&Spectral::Cauchy, 5.0, 30), toeplitz_matrix(&Spectral::gaussian(), 5.0, 30)];
        let naive = (&f * &g[0] * &f * &g[1] * &f * &g[1]).trace();
        assert!((alternating_trace(&f, &g, &[0, 1, 1]) - naive).abs() < 1e-10 * naive.abs());
    }
}
