use std::path::Path;

use chaos_core::applications::ou::paper_literal_ef2fbar;
use chaos_core::applications::{
    ou_closed_forms, ou_grid_kernel, ou_sample_moments, ou_simulate, step_family, toeplitz_covariance, toeplitz_cumulant, OUParams, Spectral,
    ToeplitzParams,
};
use chaos_core::complex::{complex_moments, ComplexKernel, C64};
use chaos_core::cumulant::{cumulant, cumulant_q2_trace, rate_m};
use chaos_core::gaussian::{empirical_cumulants, sample_vector};
use chaos_core::io::{parse_complex, parse_vector};
use chaos_core::stein::{distance_proxy, rate_sweep, DistanceMethod};
use chaos_core::tensor::covariance;
use chaos_core::{ChaosVector, MultiIndex};
use serde_json::{json, Value};

use crate::config::{parse_range, Command, CumulantPath, Method, RunConfig};
use crate::error::CliError;
use crate::report::{Cell, Report, Table};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_vector(path: &Path) -> Result<ChaosVector, CliError> {
    Ok(parse_vector(&read(path)?)?)
}

fn method(m: Method, samples: usize, seed: u64) -> DistanceMethod {
    match m {
        Method::ExactCf => DistanceMethod::ExactCf,
        Method::MonteCarlo => DistanceMethod::MonteCarlo { samples, seed },
    }
}

fn matrix_json(m: &nalgebra::DMatrix<f64>) -> Value {
    json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn c64_json(z: C64) -> Value {
    json!({"re": z.re, "im": z.im})
}

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    match &cfg.command {
        Command::KernelValidate { kernels } => validate(kernels),
        Command::Cumulant { kernels, max_order, path } => cumulants(kernels, *max_order, *path),
        Command::Rate { kernels } => {
            let r = rate_m(&load_vector(kernels)?)?;
            Ok(Report { result: serde_json::to_value(r).expect("serializable"), table: None })
        }
        Command::Distance { kernels, method: m, samples } => {
            let v = load_vector(kernels)?;
            let c = covariance(&v);
            let r = distance_proxy(&v, &c, method(*m, *samples, cfg.seed))?;
            let mut t = Table::new(&["member", "value_f", "value_z", "gap", "se"]);
            for g in &r.members {
                t.push(vec![Cell::Text(g.name.clone()), Cell::Num(g.value_f), Cell::Num(g.value_z), Cell::Num(g.gap), g.se.map_or(Cell::Text(String::new()), Cell::Num)]);
            }
            Ok(Report { result: serde_json::to_value(r).expect("serializable"), table: Some(t) })
        }
        Command::Simulate { kernels, samples, out, max_order } => simulate(kernels, *samples, out, *max_order, cfg.seed),
        Command::Sweep { family, n, method: m, samples } => sweep(family, n, *m, *samples, cfg.seed),
        Command::ExampleStep { n } => example_step(*n),
        Command::ExampleOu { lambda, omega, horizon, dt, paths, grid } => {
            example_ou(C64::new(*lambda, *omega), *horizon, dt.unwrap_or(horizon / 2000.0), *paths, *grid, cfg.seed)
        }
        Command::ExampleToeplitz { f, g, horizon, grid, max_order } => example_toeplitz(f, g, *horizon, *grid, *max_order),
    }
}

fn validate(path: &Path) -> Result<Report, CliError> {
    let text = read(path)?;
    let is_complex = serde_json::from_str::<Value>(&text).ok().and_then(|v| v.get("complex").and_then(Value::as_bool)) == Some(true);
    if is_complex {
        let ks = parse_complex(&text)?;
        let bidegrees: Vec<_> = ks.iter().map(|k| k.bidegree()).collect();
        return Ok(Report { result: json!({"valid": true, "complex": true, "basis_dim": ks[0].dim(), "d": ks.len(), "bidegrees": bidegrees}), table: None });
    }
    let v = parse_vector(&text)?;
    let orders: Vec<Vec<usize>> = v.components().iter().map(|c| c.terms().keys().copied().collect()).collect();
    Ok(Report {
        result: json!({"valid": true, "complex": false, "basis_dim": v.dim(), "d": v.d(), "orders": orders, "covariance": matrix_json(&covariance(&v))}),
        table: None,
    })
}

fn cumulants(path: &Path, max_order: usize, how: CumulantPath) -> Result<Report, CliError> {
    if max_order == 0 {
        return Err(CliError::invalid("max_order must be at least 1"));
    }
    let v = load_vector(path)?;
    let mut t = Table::new(&["m", "order", "kappa"]);
    for k in 1..=max_order {
        for m in MultiIndex::all_of_order(v.d(), k) {
            let kappa = match how {
                CumulantPath::General => cumulant(&v, &m)?,
                CumulantPath::Trace => cumulant_q2_trace(&v, &m)?,
            };
            t.push(vec![Cell::Text(m.to_string()), Cell::Int(k as i64), Cell::Num(kappa)]);
        }
    }
    Ok(Report { result: json!({"d": v.d(), "cumulants": t.to_json()}), table: Some(t) })
}

fn simulate(path: &Path, samples: usize, out: &Path, max_order: usize, seed: u64) -> Result<Report, CliError> {
    if out.extension().is_some_and(|e| e == "json") {
        return Err(CliError::invalid("--out must not end in .json; that name is reserved for the sidecar"));
    }
    let v = load_vector(path)?;
    let batch = sample_vector(&v, samples, seed)?;
    std::fs::write(out, batch.to_le_bytes()).map_err(|e| CliError::io(out, e))?;
    let sidecar_path = out.with_extension("json");
    let sidecar = serde_json::to_string_pretty(&batch.sidecar()).expect("serializable") + "\n";
    std::fs::write(&sidecar_path, sidecar).map_err(|e| CliError::io(&sidecar_path, e))?;
    let mut result = json!({"samples": out, "sidecar": sidecar_path, "layout": batch.sidecar()});
    let mut table = None;
    if max_order > 0 {
        let emp = empirical_cumulants(&batch, max_order)?;
        let mut t = Table::new(&["m", "estimate", "se", "exact"]);
        for (m, e) in &emp.entries {
            t.push(vec![Cell::Text(m.to_string()), Cell::Num(e.value), Cell::Num(e.se), Cell::Num(cumulant(&v, m)?)]);
        }
        result["cumulants"] = t.to_json();
        table = Some(t);
    }
    Ok(Report { result, table })
}

fn sweep(family: &str, range: &str, m: Method, samples: usize, seed: u64) -> Result<Report, CliError> {
    if family != "step" {
        return Err(CliError::invalid(format!("unknown sweep family {family:?}; available: step")));
    }
    let grid: Vec<f64> = parse_range(range)?.into_iter().map(|n| n as f64).collect();
    let r = rate_sweep(|n| step_family(n as usize), &grid, None, method(m, samples, seed))?;
    let mut t = Table::new(&["n", "M", "third_sum", "fourth_sum", "D", "D_over_M"]);
    for row in &r.rows {
        t.push(vec![Cell::Int(row.param as i64), Cell::Num(row.m), Cell::Num(row.third_sum), Cell::Num(row.fourth_sum), Cell::Num(row.d), Cell::Num(row.d_over_m)]);
    }
    let result = json!({
        "rows": t.to_json(),
        "fit_d": r.fit_d,
        "fit_m": r.fit_m,
        "band_d_over_m": r.band_d_over_m,
        "band_d_times_n": r.band_scaled_d(1.0),
    });
    Ok(Report { result, table: Some(t) })
}

fn example_step(n: usize) -> Result<Report, CliError> {
    let v = step_family(n)?;
    let nf = n as f64;
    let odd = if n % 2 == 1 { 1.0 } else { 0.0 };
    let closed = [
        ([2, 0], 4.0 / 9.0),
        ([1, 1], 0.0),
        ([0, 2], 2.0 / 9.0),
        ([0, 3], 8.0 / (27.0 * nf.powf(1.5)) * odd),
        ([4, 0], 32.0 / (27.0 * nf)),
        ([0, 4], 16.0 / (27.0 * nf)),
    ];
    let mut t = Table::new(&["m", "kappa_general", "kappa_trace", "closed_form", "abs_error"]);
    for (m, want) in closed {
        let m = MultiIndex::new(m.to_vec());
        let g = cumulant(&v, &m)?;
        let tr = cumulant_q2_trace(&v, &m)?;
        t.push(vec![Cell::Text(m.to_string()), Cell::Num(g), Cell::Num(tr), Cell::Num(want), Cell::Num((g - want).abs().max((tr - want).abs()))]);
    }
    let rate = rate_m(&v)?;
    Ok(Report { result: json!({"n": n, "basis_dim": 3 * n, "cumulants": t.to_json(), "rate": rate}), table: Some(t) })
}

fn example_ou(gamma: C64, horizon: f64, dt: f64, paths: usize, grid: usize, seed: u64) -> Result<Report, CliError> {
    let cf = ou_closed_forms(gamma, horizon)?;
    let gm = complex_moments(&ComplexKernel::Grid(ou_grid_kernel(gamma, horizon, grid)?))?;
    let samples = ou_simulate(&OUParams { gamma, horizon, dt, paths, seed })?;
    let mc = ou_sample_moments(&samples, seed)?;
    let mut t = Table::new(&["quantity", "closed_form", "grid", "mc", "mc_se", "z"]);
    let rows = [
        ("E|F|^2", cf.e_abs2, gm.e_abs2, mc.e_abs2),
        ("Re EF^2", cf.e_f2.re, gm.e_f2.re, mc.e_f2.re),
        ("Im EF^2", cf.e_f2.im, gm.e_f2.im, mc.e_f2.im),
        ("Re EF^3", cf.e_f3.re, gm.e_f3.re, mc.e_f3.re),
        ("Im EF^3", cf.e_f3.im, gm.e_f3.im, mc.e_f3.im),
        ("Re EF^2Fbar", cf.e_f2_fbar.re, gm.e_f2_fbar.re, mc.e_f2_fbar.re),
        ("Im EF^2Fbar", cf.e_f2_fbar.im, gm.e_f2_fbar.im, mc.e_f2_fbar.im),
        ("Q4", cf.q4, gm.q4, mc.q4),
    ];
    for (name, c, g, e) in rows {
        t.push(vec![Cell::Text(name.into()), Cell::Num(c), Cell::Num(g), Cell::Num(e.value), Cell::Num(e.se), Cell::Num((e.value - c) / e.se)]);
    }
    let result = json!({
        "gamma": c64_json(gamma),
        "horizon": horizon,
        "dt": dt,
        "paths": paths,
        "grid": grid,
        "comparisons": t.to_json(),
        "m_prime_closed_form": cf.m_prime(),
        "m_prime_grid": gm.m_prime(),
        "ef2fbar_paper_literal": paper_literal_ef2fbar(gamma, horizon),
    });
    Ok(Report { result, table: Some(t) })
}

fn example_toeplitz(f: &str, g: &[String], horizon: f64, grid: usize, max_order: usize) -> Result<Report, CliError> {
    if max_order < 2 {
        return Err(CliError::invalid("max_order must be at least 2"));
    }
    let fs = Spectral::from_name(f)?;
    let gs = g.iter().map(|x| Spectral::from_name(x)).collect::<Result<Vec<_>, _>>()?;
    if gs.is_empty() {
        return Err(CliError::invalid("need at least one weight g"));
    }
    let mut t = Table::new(&["m", "scaled_trace", "limit", "relative_gap"]);
    for k in 2..=max_order {
        for m in MultiIndex::all_of_order(gs.len(), k) {
            let r = toeplitz_cumulant(&ToeplitzParams { f: fs.clone(), g: gs.clone(), horizon, grid, m: m.clone() })?;
            t.push(vec![Cell::Text(m.to_string()), Cell::Num(r.scaled_trace), Cell::Num(r.limit_integral), Cell::Num(r.relative_gap)]);
        }
    }
    let cov = toeplitz_covariance(&fs, &gs, horizon, grid)?;
    let result = json!({
        "f": f,
        "g": g,
        "horizon": horizon,
        "grid": grid,
        "cumulants": t.to_json(),
        "covariance_finite": matrix_json(&cov.finite),
        "covariance_half_line_limit": matrix_json(&cov.limit),
    });
    Ok(Report { result, table: Some(t) })
}
