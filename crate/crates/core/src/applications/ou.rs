//! F_T = T^{−1/2} ∫₀ᵀ Z̄_t dζ_t for dZ_t = −γZ_t dt + dζ_t, Z₀ = 0, with ζ a
//! standard complex Brownian motion (E|ζ_t|² = t).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{ComplexMomentReport, GridKernel, C64};
use crate::error::{ChaosError, Result};
use crate::gaussian::{fill_normals, substream, Estimate, BOOTSTRAP_RESAMPLES};

const PATH_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub gamma: C64,
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
}

impl OUParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.re > 0.0) {
            return Err(ChaosError::InvalidParameter(format!("Re gamma must be positive, got {}", self.gamma.re)));
        }
        if !(self.horizon > 0.0) {
            return Err(ChaosError::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0) || self.dt > self.horizon / 100.0 * (1.0 + 1e-12) {
            return Err(ChaosError::InvalidParameter(format!(
                "dt = {} is too coarse: need 0 < dt <= T/100 = {}",
                self.dt,
                self.horizon / 100.0
            )));
        }
        if self.paths == 0 {
            return Err(ChaosError::InvalidParameter("path count must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// Per-path F_T from the exact joint transition of (Z, ζ) and the
/// left-endpoint Itô sum. Paths are split into fixed chunks with their own
/// substreams, so output does not depend on the thread count.
pub fn ou_simulate(p: &OUParams) -> Result<Vec<C64>> {
    p.validate()?;
    let steps = p.steps();
    let dt = p.horizon / steps as f64;
    let lambda = p.gamma.re;
    let decay = (-p.gamma * dt).exp();
    let c = (C64::new(1.0, 0.0) - decay) / p.gamma;
    let var_eta = (1.0 - (-2.0 * lambda * dt).exp()) / (2.0 * lambda);
    let s = (var_eta - c.norm_sqr() / dt).max(0.0).sqrt();
    let sqrt_dt = dt.sqrt();
    let c_over = c / sqrt_dt;
    let scale = p.horizon.sqrt().recip();
    let chunks = p.paths.div_ceil(PATH_CHUNK);
    let out: Vec<Vec<C64>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = substream(p.seed, ci as u64);
            let count = PATH_CHUNK.min(p.paths - ci * PATH_CHUNK);
            let mut buf = vec![0.0; 4 * steps];
            let h = std::f64::consts::FRAC_1_SQRT_2;
            (0..count)
                .map(|_| {
                    fill_normals(&mut rng, &mut buf);
                    let mut z = C64::new(0.0, 0.0);
                    let mut acc = C64::new(0.0, 0.0);
                    for w in buf.chunks_exact(4) {
                        let w1 = C64::new(w[0] * h, w[1] * h);
                        let w2 = C64::new(w[2] * h, w[3] * h);
                        acc += z.conj() * w1 * sqrt_dt;
                        z = decay * z + c_over * w1 + w2 * s;
                    }
                    acc * scale
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// The ψ kernel f(t,s) = T^{−1/2} e^{−γ̄(t−s)} 1{s<t} on a G-point grid.
pub fn ou_grid_kernel(gamma: C64, horizon: f64, points: usize) -> Result<GridKernel> {
    if !(gamma.re > 0.0) {
        return Err(ChaosError::InvalidParameter(format!("Re gamma must be positive, got {}", gamma.re)));
    }
    let a = horizon.sqrt().recip();
    GridKernel::from_fn(
        horizon,
        points,
        |t, s| if s < t { (-gamma.conj() * (t - s)).exp() * a } else { C64::new(0.0, 0.0) },
        |_| C64::new(a, 0.0),
        |_| C64::new(0.0, 0.0),
    )
}

/// Closed-form moments. EF²F̄ uses the coefficient 1/(2λ²√T) on the last
/// term, which the grid and simulation both confirm; `paper_literal_ef2fbar`
/// gives the variant with 1/(4λ²√T).
pub fn ou_closed_forms(gamma: C64, horizon: f64) -> Result<ComplexMomentReport> {
    let l = gamma.re;
    let t = horizon;
    if !(l > 0.0) || !(t > 0.0) {
        return Err(ChaosError::InvalidParameter(format!("need Re gamma > 0 and T > 0, got {l}, {t}")));
    }
    let e = (-2.0 * l * t).exp();
    let lt = l * t;
    let e_abs2 = 1.0 / (2.0 * l) + (e - 1.0) / (4.0 * l * l * t);
    let ef2fb = ef2fbar_head(l, t) + 1.0 / (2.0 * l * l * t.sqrt());
    let n1 = e / (2.0 * l * l) * (0.5 + 1.0 / lt + 3.0 / (4.0 * lt * lt)) - 3.0 / (8.0 * l.powi(4) * t * t)
        + 1.0 / (4.0 * l.powi(3) * t);
    let n3 = e / (4.0 * l * l) * (2.0 + 8.0 / lt + 5.0 / (lt * lt) + e / (2.0 * lt * lt))
        - 11.0 / (8.0 * l.powi(4) * t * t)
        + 1.0 / (l.powi(3) * t);
    Ok(ComplexMomentReport {
        e_f3: C64::new(0.0, 0.0),
        e_f2_fbar: C64::new(ef2fb, 0.0),
        q4: 2.0 * n1 + n3,
        e_abs2,
        e_f2: C64::new(0.0, 0.0),
    })
}

fn ef2fbar_head(l: f64, t: f64) -> f64 {
    (-2.0 * l * t).exp() * (1.0 + 1.0 / (l * t)) / (2.0 * l * l * t.sqrt()) - 1.0 / (2.0 * l.powi(3) * t.powf(1.5))
}

pub fn paper_literal_ef2fbar(gamma: C64, horizon: f64) -> f64 {
    let l = gamma.re;
    ef2fbar_head(l, horizon) + 1.0 / (4.0 * l * l * horizon.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: Estimate,
    pub im: Estimate,
}

/// Sample moments of F_T with bootstrap standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUSampleMoments {
    pub n: usize,
    pub e_abs2: Estimate,
    pub e_f2: ComplexEstimate,
    pub e_f3: ComplexEstimate,
    pub e_f2_fbar: ComplexEstimate,
    pub q4: Estimate,
}

// [E|F|², EF², EF³, EF²F̄ (re/im interleaved), Q₄]
fn plug_in<I: Iterator<Item = C64>>(it: I) -> [f64; 8] {
    let (mut n, mut a2, mut a4) = (0.0, 0.0, 0.0);
    let (mut f2, mut f3, mut f2fb) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for f in it {
        let sq = f * f;
        let ab = f.norm_sqr();
        n += 1.0;
        a2 += ab;
        a4 += ab * ab;
        f2 += sq;
        f3 += sq * f;
        f2fb += sq * f.conj();
    }
    let (a2, a4, f2, f3, f2fb) = (a2 / n, a4 / n, f2 / n, f3 / n, f2fb / n);
    [a2, f2.re, f2.im, f3.re, f3.im, f2fb.re, f2fb.im, a4 - 2.0 * a2 * a2 - f2.norm_sqr()]
}

pub fn ou_sample_moments(samples: &[C64], seed: u64) -> Result<OUSampleMoments> {
    let n = samples.len();
    if n < 2 {
        return Err(ChaosError::InsufficientSamples { needed: 2, found: n });
    }
    let point = plug_in(samples.iter().copied());
    let reps: Vec<[f64; 8]> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed ^ 0x6f75_626f_6f74, b as u64);
            plug_in((0..n).map(|_| samples[rng.random_range(0..n)]))
        })
        .collect();
    let est = |k: usize| {
        let mean = reps.iter().map(|r| r[k]).sum::<f64>() / reps.len() as f64;
        let var = reps.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
        Estimate { value: point[k], se: var.sqrt() }
    };
    let cest = |k: usize| ComplexEstimate { re: est(k), im: est(k + 1) };
    Ok(OUSampleMoments { n, e_abs2: est(0), e_f2: cest(1), e_f3: cest(3), e_f2_fbar: cest(5), q4: est(7) })
}
