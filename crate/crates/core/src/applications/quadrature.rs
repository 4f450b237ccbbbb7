#![allow(clippy::excessive_precision)]

//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and infinite ranges.

use crate::error::{ChaosError, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let x = h * XGK[k];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// ∫_a^b f with absolute-or-relative tolerance, by global bisection of the
/// interval with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 2000;
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    loop {
        let (val, err): (f64, f64) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.2 .0, acc.1 + p.2 .1));
        if !val.is_finite() {
            return Err(ChaosError::Domain("non-finite integrand".into()));
        }
        if err <= tol.max(tol * val.abs()) {
            return Ok(val);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(ChaosError::Domain(format!("quadrature did not converge: estimate {val:e}, error {err:e}")));
        }
        let worst = (0..parts.len()).max_by(|&i, &j| parts[i].2 .1.total_cmp(&parts[j].2 .1)).unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
}

/// ∫_{−∞}^{∞} f via x = t/(1 − t²).
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    integrate(
        |t| {
            let u = 1.0 - t * t;
            if u <= 0.0 {
                return 0.0;
            }
            f(t / u) * (1.0 + t * t) / (u * u)
        },
        -1.0,
        1.0,
        tol,
    )
}

/// ∫_0^∞ f via x = t/(1 − t).
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    integrate(
        |t| {
            let u = 1.0 - t;
            if u <= 0.0 {
                return 0.0;
            }
            f(t / u) / (u * u)
        },
        0.0,
        1.0,
        tol,
    )
}
