//! Smooth test-function family built from sin/cos waves, the distance proxy
//! D(F) against N(0, C), and log-log rate sweeps.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cumulant::{check_symmetric_psd, rate_m};
use crate::error::{ChaosError, Result};
use crate::gaussian::{quad, sample_vector, CharFn, GaussianCf, SecondChaosCf};
use crate::tensor::{covariance, ChaosVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveKind {
    Sin,
    Cos,
}

/// coef · sin⟨t,x⟩ or coef · cos⟨t,x⟩ with t ∈ {−1,0,1}^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub t: Vec<i8>,
    pub coef: f64,
    pub kind: WaveKind,
}

impl Wave {
    fn phase(&self, x: &[f64]) -> f64 {
        self.t.iter().zip(x).map(|(&t, &x)| t as f64 * x).sum()
    }

    fn t_f64(&self) -> Vec<f64> {
        self.t.iter().map(|&t| t as f64).collect()
    }

    /// E of the wave at X, given φ_X(t).
    fn expectation(&self, phi: Complex64) -> f64 {
        match self.kind {
            WaveKind::Sin => self.coef * phi.im,
            WaveKind::Cos => self.coef * phi.re,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub name: String,
    pub waves: Vec<Wave>,
}

impl Member {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.derivative(x, &vec![0; x.len()])
    }

    /// ∂^m of the member at x.
    pub fn derivative(&self, x: &[f64], m: &[usize]) -> f64 {
        let k: usize = m.iter().sum();
        self.waves
            .iter()
            .map(|w| {
                let tm: f64 = w.t.iter().zip(m).map(|(&t, &e)| (t as f64).powi(e as i32)).product();
                if tm == 0.0 {
                    return 0.0;
                }
                let shift = match w.kind {
                    WaveKind::Sin => 0.0,
                    WaveKind::Cos => std::f64::consts::FRAC_PI_2,
                };
                w.coef * tm * (w.phase(x) + shift + k as f64 * std::f64::consts::FRAC_PI_2).sin()
            })
            .sum()
    }
}

/// h_i, g_i, g_ij (i ≠ j) and g_ijk (i < j < k) for covariance C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionFamily {
    pub d: usize,
    pub a: f64,
    pub members: Vec<Member>,
}

/// Largest tᵀCt over t ∈ {−1,0,1}^d.
fn max_quad(c: &DMatrix<f64>) -> f64 {
    let d = c.nrows();
    let total = 3usize.pow(d as u32);
    let mut best: f64 = 0.0;
    let mut t = vec![0.0; d];
    for code in 0..total {
        let mut x = code;
        for slot in t.iter_mut() {
            *slot = (x % 3) as f64 - 1.0;
            x /= 3;
        }
        best = best.max(quad(c, &t));
    }
    best
}

impl TestFunctionFamily {
    pub fn new(c: &DMatrix<f64>) -> Result<Self> {
        check_symmetric_psd(c)?;
        let d = c.nrows();
        if d == 0 || d > 8 {
            return Err(ChaosError::InvalidParameter(format!("test family needs 1 <= d <= 8, got {d}")));
        }
        let a = (-0.5 * max_quad(c)).exp();
        let wave = |t: Vec<i8>, weight: f64, kind: WaveKind| {
            let tf: Vec<f64> = t.iter().map(|&x| x as f64).collect();
            Wave { coef: weight * a * (0.5 * quad(c, &tf)).exp(), t, kind }
        };
        let e = |terms: &[(usize, i8)]| {
            let mut t = vec![0i8; d];
            for &(i, s) in terms {
                t[i] += s;
            }
            t
        };
        let g_pair = |i: usize, j: usize, w: f64| {
            vec![
                wave(e(&[(i, 1), (j, -1)]), 0.25 * w, WaveKind::Sin),
                wave(e(&[(i, 1), (j, 1)]), -0.25 * w, WaveKind::Sin),
                wave(e(&[(j, 1)]), 0.5 * w, WaveKind::Sin),
            ]
        };
        let mut members = Vec::new();
        for i in 0..d {
            members.push(Member { name: format!("h_{}", i + 1), waves: vec![wave(e(&[(i, 1)]), 1.0, WaveKind::Cos)] });
        }
        for i in 0..d {
            members.push(Member { name: format!("g_{}", i + 1), waves: vec![wave(e(&[(i, 1)]), 1.0, WaveKind::Sin)] });
        }
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    members.push(Member { name: format!("g_{}{}", i + 1, j + 1), waves: g_pair(i, j, 1.0) });
                }
            }
        }
        for i in 0..d {
            for j in i + 1..d {
                for k in j + 1..d {
                    let s = 1.0 / 12.0;
                    let mut waves = vec![
                        wave(e(&[(i, 1), (j, 1), (k, -1)]), s, WaveKind::Sin),
                        wave(e(&[(i, 1), (j, 1), (k, 1)]), -s, WaveKind::Sin),
                        wave(e(&[(k, 1)]), 2.0 * s, WaveKind::Sin),
                    ];
                    waves.extend(g_pair(i, k, -4.0 * s));
                    waves.extend(g_pair(j, k, -4.0 * s));
                    members.push(Member { name: format!("g_{}{}{}", i + 1, j + 1, k + 1), waves });
                }
            }
        }
        Ok(Self { d, a, members })
    }

    /// 2d + d(d−1) + d(d−1)(d−2)/6.
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Member expectations under a law given by its characteristic function.
    pub fn expectations(&self, law: &dyn CharFn) -> Vec<f64> {
        let mut cache: HashMap<Vec<i8>, Complex64> = HashMap::new();
        self.members
            .iter()
            .map(|m| {
                m.waves
                    .iter()
                    .map(|w| {
                        let phi = *cache.entry(w.t.clone()).or_insert_with(|| law.cf(&w.t_f64()));
                        w.expectation(phi)
                    })
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DistanceMethod {
    ExactCf,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberGap {
    pub name: String,
    pub value_f: f64,
    pub value_z: f64,
    pub gap: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub method: DistanceMethod,
    pub a: f64,
    pub d_bar: usize,
    pub members: Vec<MemberGap>,
    /// (1/d̄) Σ |E φ(F) − E φ(Z)|.
    pub distance: f64,
}

fn assemble(family: &TestFunctionFamily, method: DistanceMethod, ef: Vec<f64>, ez: Vec<f64>, se: Option<Vec<f64>>) -> DistanceReport {
    let members: Vec<MemberGap> = family
        .members
        .iter()
        .enumerate()
        .map(|(k, m)| MemberGap {
            name: m.name.clone(),
            value_f: ef[k],
            value_z: ez[k],
            gap: (ef[k] - ez[k]).abs(),
            se: se.as_ref().map(|s| s[k]),
        })
        .collect();
    let distance = members.iter().map(|g| g.gap).sum::<f64>() / family.size() as f64;
    DistanceReport { method, a: family.a, d_bar: family.size(), members, distance }
}

/// D for an arbitrary law known through its characteristic function.
pub fn distance_proxy_cf(law: &dyn CharFn, c: &DMatrix<f64>) -> Result<DistanceReport> {
    if law.d() != c.nrows() {
        return Err(ChaosError::DimensionMismatch { expected: c.nrows(), found: law.d() });
    }
    let family = TestFunctionFamily::new(c)?;
    let ez = family.expectations(&GaussianCf::new(c.clone())?);
    let ef = family.expectations(law);
    Ok(assemble(&family, DistanceMethod::ExactCf, ef, ez, None))
}

pub fn distance_proxy(v: &ChaosVector, c: &DMatrix<f64>, method: DistanceMethod) -> Result<DistanceReport> {
    if v.d() != c.nrows() {
        return Err(ChaosError::DimensionMismatch { expected: c.nrows(), found: v.d() });
    }
    match method {
        DistanceMethod::ExactCf => distance_proxy_cf(&SecondChaosCf::new(v)?, c),
        DistanceMethod::MonteCarlo { samples, seed } => {
            let family = TestFunctionFamily::new(c)?;
            let ez = family.expectations(&GaussianCf::new(c.clone())?);
            let batch = sample_vector(v, samples, seed)?;
            let n = batch.n as f64;
            let mut ef = Vec::with_capacity(family.size());
            let mut se = Vec::with_capacity(family.size());
            for m in &family.members {
                let vals: Vec<f64> = (0..batch.n).map(|i| m.eval(batch.row(i))).collect();
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                ef.push(mean);
                se.push((var / n).sqrt());
            }
            Ok(assemble(&family, method, ef, ez, Some(se)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub third_sum: f64,
    pub fourth_sum: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_over_M")]
    pub d_over_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fit_d: LineFit,
    pub fit_m: LineFit,
    /// max(D/M) / min(D/M).
    pub band_d_over_m: f64,
}

impl SweepReport {
    /// max / min of D · param^power (e.g. power 1 for a 1/n family).
    pub fn band_scaled_d(&self, power: f64) -> f64 {
        band(self.rows.iter().map(|r| r.d * r.param.powf(power)))
    }
}

fn band(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi / lo
}

/// Least-squares line through (log x, log y).
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(ChaosError::DegenerateGrid("need at least two points".into()));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(ChaosError::InvalidParameter(format!("log-log fit needs positive finite values, got {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ChaosError::DegenerateGrid("fewer than 2 distinct parameters".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(LineFit { slope, intercept: my - slope * mx })
}

/// Evaluates M and D over a parameter grid and fits both against the
/// parameter on log-log axes. `target` fixes C; otherwise each member's own
/// covariance is used.
pub fn rate_sweep<G>(family: G, grid: &[f64], target: Option<&DMatrix<f64>>, method: DistanceMethod) -> Result<SweepReport>
where
    G: Fn(f64) -> Result<ChaosVector>,
{
    if grid.len() < 4 {
        return Err(ChaosError::DegenerateGrid(format!("grid has {} points, need at least 4", grid.len())));
    }
    let mut distinct = grid.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(ChaosError::DegenerateGrid("fewer than 2 distinct parameters".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &p in grid {
        let v = family(p)?;
        let rate = rate_m(&v)?;
        let c = target.cloned().unwrap_or_else(|| covariance(&v));
        let dist = distance_proxy(&v, &c, method)?;
        rows.push(SweepRow {
            param: p,
            m: rate.m,
            third_sum: rate.third_sum,
            fourth_sum: rate.fourth_sum,
            d: dist.distance,
            d_over_m: dist.distance / rate.m,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.param).collect();
    let fit_d = loglog_fit(&xs, &rows.iter().map(|r| r.d).collect::<Vec<_>>())?;
    let fit_m = loglog_fit(&xs, &rows.iter().map(|r| r.m).collect::<Vec<_>>())?;
    let band_d_over_m = band(rows.iter().map(|r| r.d_over_m));
    Ok(SweepReport { rows, fit_d, fit_m, band_d_over_m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn family_size_and_constant() {
        for d in 1..=4 {
            let f = TestFunctionFamily::new(&DMatrix::identity(d, d)).unwrap();
            assert_eq!(f.size(), 2 * d + d * (d - 1) + d * (d - 1) * d.saturating_sub(2) / 6);
            assert!((f.a - (-(d as f64) / 2.0).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_expectations_of_basic_members() {
        let c = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.7]);
        let f = TestFunctionFamily::new(&c).unwrap();
        let ez = f.expectations(&GaussianCf::new(c.clone()).unwrap());
        // h_i → a, g_i → 0
        assert!((ez[0] - f.a).abs() < 1e-12);
        assert!((ez[1] - f.a).abs() < 1e-12);
        assert!(ez[2].abs() < 1e-12 && ez[3].abs() < 1e-12);
    }

    #[test]
    fn members_and_derivatives_bounded_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let c = &raw * raw.transpose() + DMatrix::identity(d, d) * 0.1;
            let fam = TestFunctionFamily::new(&c).unwrap();
            let orders: Vec<Vec<usize>> =
                (0..=4).flat_map(|k| crate::MultiIndex::all_of_order(d, k)).map(|m| m.entries().to_vec()).collect();
            for _ in 0..10_000 / d {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
                for m in &fam.members {
                    for o in &orders {
                        assert!(m.derivative(&x, o).abs() <= 1.0 + 1e-12, "{} {:?}", m.name, o);
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_law_has_zero_distance() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let r = distance_proxy_cf(&GaussianCf::new(c.clone()).unwrap(), &c).unwrap();
        assert!(r.distance < 1e-12);
        assert_eq!(r.d_bar, 6);
    }

    #[test]
    fn chi_square_member_value() {
        // F = (ξ² − 1)/√2, C = [1]
        let k = Kernel::new(2, 1, vec![std::f64::consts::FRAC_1_SQRT_2]).unwrap();
        let v = ChaosVector::from_kernels(vec![k]).unwrap();
        let c = DMatrix::identity(1, 1);
        let r = distance_proxy(&v, &c, DistanceMethod::ExactCf).unwrap();
        let s2 = 2f64.sqrt();
        let phi = Complex64::new(1.0, -s2).powf(-0.5) * Complex64::from_polar(1.0, -1.0 / s2);
        let a = (-0.5f64).exp();
        let expect = (a * 0.5f64.exp() * phi.re - (-0.5f64).exp() * a * 0.5f64.exp()).abs();
        assert!((r.members[0].gap - expect).abs() < 1e-14);
    }

    #[test]
    fn fit_errors_and_constant_family() {
        assert!(matches!(loglog_fit(&[2.0, 2.0], &[1.0, 3.0]), Err(ChaosError::DegenerateGrid(_))));
        let k = Kernel::new(2, 2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let v = ChaosVector::from_kernels(vec![k]).unwrap();
        let rep = rate_sweep(|_| Ok(v.clone()), &[1.0, 2.0, 3.0, 4.0], None, DistanceMethod::ExactCf).unwrap();
        assert!(rep.fit_d.slope.abs() < 1e-12 && rep.fit_m.slope.abs() < 1e-12);
        assert!((rep.band_d_over_m - 1.0).abs() < 1e-12);
        assert!(matches!(
            rate_sweep(|_| Ok(v.clone()), &[1.0, 2.0, 3.0], None, DistanceMethod::ExactCf),
            Err(ChaosError::DegenerateGrid(_))
        ));
        assert!(matches!(
            rate_sweep(|_| Ok(v.clone()), &[2.0; 5], None, DistanceMethod::ExactCf),
            Err(ChaosError::DegenerateGrid(_))
        ));
    }
}
