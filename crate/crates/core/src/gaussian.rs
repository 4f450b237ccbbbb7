//! Pathwise evaluation, reproducible sampling, exact characteristic
//! functions of second-chaos vectors, and k-statistic cumulant estimates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{check_symmetric_psd, second_chaos_matrices};
use crate::error::{ChaosError, Result};
use crate::multiindex::MultiIndex;
use crate::tensor::{factorial, ChaosExpansion, ChaosVector, Kernel};

/// Samples per substream chunk.
pub const CHUNK: usize = 4096;

/// Probabilists' Hermite polynomials He_0..He_n at x.
pub fn hermite_table(n: usize, x: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(1.0);
    if n >= 1 {
        h.push(x);
    }
    for k in 2..=n {
        h.push(x * h[k - 1] - (k - 1) as f64 * h[k - 2]);
    }
    h
}

fn evaluate_kernel(k: &Kernel, xi: &[f64]) -> f64 {
    let q = k.order();
    match q {
        0 => return k.coeffs()[0],
        1 => return k.coeffs().iter().zip(xi).map(|(a, b)| a * b).sum(),
        _ => {}
    }
    let n = k.dim();
    let herm: Vec<Vec<f64>> = xi.iter().map(|&x| hermite_table(q, x)).collect();
    let qf = factorial(q);
    // Walk sorted tuples i_1 <= ... <= i_q.
    fn rec(k: &Kernel, herm: &[Vec<f64>], qf: f64, tuple: &mut Vec<usize>, start: usize, acc: &mut f64) {
        let (q, n) = (k.order(), k.dim());
        if tuple.len() == q {
            let mut value = qf * k.get(tuple);
            let mut i = 0;
            while i < q {
                let mut j = i;
                while j < q && tuple[j] == tuple[i] {
                    j += 1;
                }
                let a = j - i;
                value *= herm[tuple[i]][a] / factorial(a);
                i = j;
            }
            *acc += value;
            return;
        }
        for idx in start..n {
            tuple.push(idx);
            rec(k, herm, qf, tuple, idx, acc);
            tuple.pop();
        }
    }
    let mut acc = 0.0;
    rec(k, &herm, qf, &mut Vec::with_capacity(q), 0, &mut acc);
    let _ = n;
    acc
}

/// Pathwise value of a chaos expansion at the Gaussian point ξ.
pub fn evaluate_chaos(e: &ChaosExpansion, xi: &[f64]) -> Result<f64> {
    if xi.len() != e.dim() {
        return Err(ChaosError::DimensionMismatch { expected: e.dim(), found: xi.len() });
    }
    Ok(e.terms().values().map(|k| evaluate_kernel(k, xi)).sum())
}

/// ξᵀBξ − Tr B.
pub fn quadratic_form(b: &DMatrix<f64>, xi: &[f64]) -> f64 {
    let n = b.nrows();
    let mut s = 0.0;
    for j in 0..n {
        let col = b.column(j);
        let mut inner = 0.0;
        for i in 0..n {
            inner += col[i] * xi[i];
        }
        s += (inner * xi[j]) - col[j];
    }
    s
}

/// Documented generator layout: ChaCha8 seeded from a u64, one stream per
/// chunk, Box–Muller with two 53-bit uniforms per pair of normals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLayout {
    pub generator: String,
    pub transform: String,
    pub chunk_size: usize,
}

impl Default for SampleLayout {
    fn default() -> Self {
        Self { generator: "chacha8-stream-per-chunk".into(), transform: "box-muller-53bit".into(), chunk_size: CHUNK }
    }
}

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fills `out` with standard normals, always consuming two u64 per pair.
pub fn fill_normals<R: RngCore>(rng: &mut R, out: &mut [f64]) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let mut chunks = out.chunks_mut(2);
    for pair in &mut chunks {
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        pair[0] = r * c;
        if pair.len() > 1 {
            pair[1] = r * s;
        }
    }
}

/// n joint draws stored row-major (n × d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub layout: SampleLayout,
    pub values: Vec<f64>,
}

/// Metadata written next to a binary sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub layout: SampleLayout,
    pub encoding: String,
}

impl SampleBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.d + j]).collect()
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn sidecar(&self) -> SampleSidecar {
        SampleSidecar {
            n: self.n,
            d: self.d,
            seed: self.seed,
            layout: self.layout.clone(),
            encoding: "f64-le-row-major".into(),
        }
    }

    pub fn from_le_bytes(sidecar: &SampleSidecar, bytes: &[u8]) -> Result<Self> {
        let expected = sidecar.n * sidecar.d * 8;
        if bytes.len() != expected {
            return Err(ChaosError::DimensionMismatch { expected, found: bytes.len() });
        }
        let values = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Self { n: sidecar.n, d: sidecar.d, seed: sidecar.seed, layout: sidecar.layout.clone(), values })
    }
}

/// Draws `n` rows of `d` values; `row_fn` receives the normals of one sample
/// (length `dim`) and writes one row. Chunk `c` uses substream `c`.
pub fn sample_rows<F>(n: usize, d: usize, dim: usize, seed: u64, row_fn: F) -> SampleBatch
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let rows = CHUNK.min(n - c * CHUNK);
            let mut out = vec![0.0; rows * d];
            let mut xi = vec![0.0; dim];
            for r in 0..rows {
                fill_normals(&mut rng, &mut xi);
                row_fn(&xi, &mut out[r * d..(r + 1) * d]);
            }
            out
        })
        .collect();
    SampleBatch { n, d, seed, layout: SampleLayout::default(), values: parts.concat() }
}

/// Joint samples of (F_1, ..., F_d) sharing one Gaussian point per draw.
pub fn sample_vector(v: &ChaosVector, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(ChaosError::InvalidParameter("n must be at least 1".into()));
    }
    enum Eval<'a> {
        Quadratic(DMatrix<f64>),
        General(&'a ChaosExpansion),
    }
    let evals: Vec<Eval> = v
        .components()
        .iter()
        .map(|c| match (c.pure_order(), c.term(2)) {
            (Some(2), Some(k)) => Eval::Quadratic(k.to_matrix().unwrap()),
            _ => Eval::General(c),
        })
        .collect();
    Ok(sample_rows(n, v.d(), v.dim(), seed, |xi, row| {
        for (slot, e) in row.iter_mut().zip(&evals) {
            *slot = match e {
                Eval::Quadratic(b) => quadratic_form(b, xi),
                Eval::General(c) => evaluate_chaos(c, xi).unwrap(),
            };
        }
    }))
}

/// Exact characteristic function t ↦ E exp(i⟨t, X⟩).
pub trait CharFn {
    fn d(&self) -> usize;
    fn cf(&self, t: &[f64]) -> Complex64;
}

/// Characteristic function of a pure second-chaos vector.
#[derive(Debug, Clone)]
pub struct SecondChaosCf {
    mats: Vec<DMatrix<f64>>,
    traces: Vec<f64>,
}

impl SecondChaosCf {
    pub fn new(v: &ChaosVector) -> Result<Self> {
        let mats = second_chaos_matrices(v)?;
        let traces = mats.iter().map(|m| m.trace()).collect();
        Ok(Self { mats, traces })
    }
}

impl CharFn for SecondChaosCf {
    fn d(&self) -> usize {
        self.mats.len()
    }

    fn cf(&self, t: &[f64]) -> Complex64 {
        let n = self.mats[0].nrows();
        let mut s = DMatrix::zeros(n, n);
        let mut shift = 0.0;
        for ((m, tr), &tj) in self.mats.iter().zip(&self.traces).zip(t) {
            if tj != 0.0 {
                s += m * tj;
                shift += tj * tr;
            }
        }
        let mut value = Complex64::from_polar(1.0, -shift);
        if s.iter().all(|&x| x == 0.0) {
            return value;
        }
        for mu in SymmetricEigen::new(s).eigenvalues.iter() {
            // principal root per factor
            value /= Complex64::new(1.0, -2.0 * mu).sqrt();
        }
        value
    }
}

/// Characteristic function of N(0, C).
#[derive(Debug, Clone)]
pub struct GaussianCf {
    cov: DMatrix<f64>,
}

impl GaussianCf {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        check_symmetric_psd(&cov)?;
        Ok(Self { cov })
    }
}

impl CharFn for GaussianCf {
    fn d(&self) -> usize {
        self.cov.nrows()
    }

    fn cf(&self, t: &[f64]) -> Complex64 {
        Complex64::new((-0.5 * quad(&self.cov, t)).exp(), 0.0)
    }
}

pub(crate) fn quad(c: &DMatrix<f64>, t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..t.len() {
        for j in 0..t.len() {
            s += t[i] * c[(i, j)] * t[j];
        }
    }
    s
}

/// E exp(i⟨t, F⟩) for a pure second-chaos vector.
pub fn char_fn_q2(v: &ChaosVector, t: &[f64]) -> Result<Complex64> {
    if t.len() != v.d() {
        return Err(ChaosError::DimensionMismatch { expected: v.d(), found: t.len() });
    }
    Ok(SecondChaosCf::new(v)?.cf(t))
}

/// Estimate and bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCumulants {
    pub d: usize,
    pub n: usize,
    pub entries: BTreeMap<MultiIndex, Estimate>,
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, k: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, k, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, k, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

/// k-statistic coefficient for a partition with the given sorted block
/// sizes, and the common denominator.
fn kstat_coefficient(sizes: &[usize], n: f64) -> f64 {
    match sizes {
        [2] => n,
        [1, 1] => -1.0,
        [3] => n * n,
        [1, 2] => -n,
        [1, 1, 1] => 2.0,
        [4] => n * n * (n + 1.0),
        [1, 3] => -n * (n + 1.0),
        [2, 2] => -n * (n - 1.0),
        [1, 1, 2] => 2.0 * n,
        [1, 1, 1, 1] => -6.0,
        _ => unreachable!("k-statistics are implemented up to order 4"),
    }
}

fn kstat_denominator(k: usize, n: f64) -> f64 {
    (0..k).map(|i| n - i as f64).product()
}

/// Multivariate k-statistics from power sums of centered data.
struct KStatPlan {
    monomials: Vec<MultiIndex>,
    /// per target m: list of (coefficient-type sizes, monomial slots)
    targets: Vec<(MultiIndex, Vec<(Vec<usize>, Vec<usize>)>)>,
}

impl KStatPlan {
    fn new(d: usize, max_order: usize) -> Self {
        let monomials: Vec<MultiIndex> = (1..=max_order).flat_map(|k| MultiIndex::all_of_order(d, k)).collect();
        let slot = |m: &MultiIndex| monomials.iter().position(|x| x == m).unwrap();
        let mut targets = Vec::new();
        for k in 2..=max_order {
            let parts = set_partitions(k);
            for m in MultiIndex::all_of_order(d, k) {
                let seq = m.decomposition();
                let terms = parts
                    .iter()
                    .map(|p| {
                        let mut sizes: Vec<usize> = p.iter().map(|b| b.len()).collect();
                        sizes.sort_unstable();
                        let slots = p
                            .iter()
                            .map(|b| {
                                let idx: Vec<usize> = b.iter().map(|&j| seq[j]).collect();
                                slot(&MultiIndex::from_elementary(d, &idx).unwrap())
                            })
                            .collect();
                        (sizes, slots)
                    })
                    .collect();
                targets.push((m, terms));
            }
        }
        Self { monomials, targets }
    }

    fn power_sums<I: Iterator<Item = usize>>(&self, centered: &[f64], d: usize, rows: I) -> Vec<f64> {
        let mut sums = vec![0.0; self.monomials.len()];
        let max_pow = self.monomials.last().map_or(1, |m| m.abs());
        let mut pows = vec![0.0; d * (max_pow + 1)];
        for r in rows {
            let x = &centered[r * d..(r + 1) * d];
            for j in 0..d {
                let mut p = 1.0;
                for e in 0..=max_pow {
                    pows[j * (max_pow + 1) + e] = p;
                    p *= x[j];
                }
            }
            for (s, m) in sums.iter_mut().zip(&self.monomials) {
                let mut v = 1.0;
                for (j, &e) in m.entries().iter().enumerate() {
                    if e > 0 {
                        v *= pows[j * (max_pow + 1) + e];
                    }
                }
                *s += v;
            }
        }
        sums
    }

    fn kstats(&self, sums: &[f64], n: f64) -> Vec<f64> {
        self.targets
            .iter()
            .map(|(m, terms)| {
                let num: f64 = terms
                    .iter()
                    .map(|(sizes, slots)| kstat_coefficient(sizes, n) * slots.iter().map(|&s| sums[s]).product::<f64>())
                    .sum();
                num / kstat_denominator(m.abs(), n)
            })
            .collect()
    }
}

/// k-statistic estimates of every κ_m with |m| ≤ max_order, with bootstrap
/// standard errors from 200 resamples.
pub fn empirical_cumulants(batch: &SampleBatch, max_order: usize) -> Result<EmpiricalCumulants> {
    if !(1..=4).contains(&max_order) {
        return Err(ChaosError::InvalidParameter(format!("max_order must be in 1..=4, got {max_order}")));
    }
    let (n, d) = (batch.n, batch.d);
    let needed = 10 * d.pow(4);
    if n < needed.max(5) {
        return Err(ChaosError::InsufficientSamples { needed: needed.max(5), found: n });
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| batch.values[i * d + j]).sum::<f64>() / n as f64).collect();
    let centered: Vec<f64> = batch.values.iter().enumerate().map(|(k, v)| v - mean[k % d]).collect();
    let plan = KStatPlan::new(d, max_order);
    let nf = n as f64;
    let point = plan.kstats(&plan.power_sums(&centered, d, 0..n), nf);

    let boot_seed = batch.seed ^ 0x6b73_7461_745f_6273;
    let reps: Vec<(Vec<f64>, Vec<f64>)> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(boot_seed, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let means: Vec<f64> = (0..d).map(|j| idx.iter().map(|&i| centered[i * d + j]).sum::<f64>() / nf).collect();
            (plan.kstats(&plan.power_sums(&centered, d, idx.into_iter()), nf), means)
        })
        .collect();

    let sd = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let mut entries = BTreeMap::new();
    for j in 0..d {
        let se = sd(&mut reps.iter().map(|r| r.1[j]));
        entries.insert(MultiIndex::unit(d, j), Estimate { value: mean[j], se });
    }
    for (t, (m, _)) in plan.targets.iter().enumerate() {
        let se = sd(&mut reps.iter().map(|r| r.0[t]));
        entries.insert(m.clone(), Estimate { value: point[t], se });
    }
    Ok(EmpiricalCumulants { d, n, entries })
}
