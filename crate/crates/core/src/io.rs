//! Kernel files (UTF-8 JSON).
//!
//! Real vectors:
//! `{"basis_dim": N, "components": [{"order": q, "storage": S, "coeffs": [...]}]}`
//! with `S` one of `dense` (N^q row-major entries, flat or nested),
//! `matrix` (order 2, orthonormal coordinates) or `step-matrix` (order 2,
//! step-function A-matrix, divided by N on load).
//!
//! Complex kernels add `"complex": true`; components carry
//! `"bidegree": [p, q]` instead of `order`, and each coefficient is a
//! `[re, im]` pair.

use serde_json::{json, Value};

use crate::complex::{BasisKernel, C64};
use crate::error::{ChaosError, Result};
use crate::tensor::{storage_len, ChaosExpansion, ChaosVector, Kernel};

fn schema(path: &str, message: impl Into<String>) -> ChaosError {
    ChaosError::Schema { path: path.to_string(), message: message.into() }
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| schema(&format!("{path}.{key}"), "missing field"))
}

fn usize_field(obj: &Value, key: &str, path: &str) -> Result<usize> {
    field(obj, key, path)?
        .as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a non-negative integer"))
}

/// Flattens nested arrays of numbers in row-major order.
fn flatten_numbers(v: &Value, path: &str, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Number(n) => {
            out.push(n.as_f64().ok_or_else(|| schema(path, "number out of range"))?);
            Ok(())
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten_numbers(item, &format!("{path}[{i}]"), out)?;
            }
            Ok(())
        }
        _ => Err(schema(path, "expected a number or an array of numbers")),
    }
}

fn storage_of(comp: &Value, path: &str) -> Result<String> {
    match comp.get("storage") {
        None => Ok("dense".into()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(schema(&format!("{path}.storage"), "expected a string")),
    }
}

fn root(text: &str) -> Result<(Value, usize, Vec<Value>)> {
    let doc: Value = serde_json::from_str(text).map_err(|e| schema("$", format!("invalid JSON: {e}")))?;
    if !doc.is_object() {
        return Err(schema("$", "expected an object"));
    }
    let n = usize_field(&doc, "basis_dim", "$")?;
    if n == 0 {
        return Err(schema("$.basis_dim", "must be at least 1"));
    }
    let comps = field(&doc, "components", "$")?
        .as_array()
        .ok_or_else(|| schema("$.components", "expected an array"))?
        .clone();
    if comps.is_empty() {
        return Err(schema("$.components", "expected at least one component"));
    }
    Ok((doc, n, comps))
}

fn with_path(e: ChaosError, path: &str) -> ChaosError {
    match e {
        ChaosError::Schema { .. } | ChaosError::AsymmetricKernel { .. } => e,
        ChaosError::NotSymmetric { index, partner, violation } => ChaosError::AsymmetricKernel { path: path.to_string(), index, partner, violation },
        other => schema(path, other.to_string()),
    }
}

/// Parses and validates a real kernel vector. Symmetry and shape errors are
/// reported with the JSON path of the offending component.
pub fn parse_vector(text: &str) -> Result<ChaosVector> {
    let (doc, n, comps) = root(text)?;
    if doc.get("complex").and_then(Value::as_bool) == Some(true) {
        return Err(schema("$.complex", "complex kernel file where a real vector was expected"));
    }
    let mut kernels = Vec::with_capacity(comps.len());
    for (i, comp) in comps.iter().enumerate() {
        let path = format!("$.components[{i}]");
        let order = usize_field(comp, "order", &path)?;
        let storage = storage_of(comp, &path)?;
        let mut coeffs = Vec::new();
        flatten_numbers(field(comp, "coeffs", &path)?, &format!("{path}.coeffs"), &mut coeffs)?;
        let expected = storage_len(order, n).map_err(|e| with_path(e, &path))?;
        if coeffs.len() != expected {
            return Err(schema(&format!("{path}.coeffs"), format!("expected {expected} entries (N^q with N = {n}, q = {order}), found {}", coeffs.len())));
        }
        match storage.as_str() {
            "dense" | "matrix" => {}
            "step-matrix" => coeffs.iter_mut().for_each(|c| *c /= n as f64),
            other => return Err(schema(&format!("{path}.storage"), format!("unknown storage {other:?}"))),
        }
        if storage != "dense" && order != 2 {
            return Err(schema(&format!("{path}.order"), format!("storage {storage:?} requires order 2")));
        }
        kernels.push(Kernel::new(order, n, coeffs).map_err(|e| with_path(e, &path))?);
    }
    ChaosVector::from_kernels(kernels).map_err(|e| with_path(e, "$.components"))
}

/// Parses a complex kernel file into basis kernels.
pub fn parse_complex(text: &str) -> Result<Vec<BasisKernel>> {
    let (doc, n, comps) = root(text)?;
    if doc.get("complex").and_then(Value::as_bool) != Some(true) {
        return Err(schema("$.complex", "expected \"complex\": true"));
    }
    let mut out = Vec::with_capacity(comps.len());
    for (i, comp) in comps.iter().enumerate() {
        let path = format!("$.components[{i}]");
        let bd = field(comp, "bidegree", &path)?
            .as_array()
            .filter(|a| a.len() == 2 && a.iter().all(Value::is_u64))
            .ok_or_else(|| schema(&format!("{path}.bidegree"), "expected [p, q]"))?;
        let (p, q) = (bd[0].as_u64().unwrap() as usize, bd[1].as_u64().unwrap() as usize);
        let storage = storage_of(comp, &path)?;
        if storage != "dense" && !(storage == "matrix" && (p, q) == (1, 1)) {
            return Err(schema(&format!("{path}.storage"), format!("storage {storage:?} not valid for bidegree ({p},{q})")));
        }
        let mut flat = Vec::new();
        flatten_numbers(field(comp, "coeffs", &path)?, &format!("{path}.coeffs"), &mut flat)?;
        let expected = storage_len(p + q, n).map_err(|e| with_path(e, &path))?;
        if flat.len() != 2 * expected {
            return Err(schema(&format!("{path}.coeffs"), format!("expected {expected} [re, im] pairs, found {} numbers", flat.len())));
        }
        let coeffs: Vec<C64> = flat.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        out.push(BasisKernel::new(p, q, n, coeffs).map_err(|e| with_path(e, &path))?);
    }
    Ok(out)
}

/// Serializes a vector whose components are each of a single order. Order-2 components use
/// nested `matrix` storage, others flat `dense` storage.
pub fn vector_to_json(v: &ChaosVector) -> Result<Value> {
    let kernels: Vec<&Kernel> = v.components().iter().map(pure_kernel).collect::<Result<_>>()?;
    let comps: Vec<Value> = kernels
        .iter()
        .map(|k| match k.to_matrix() {
            Some(m) => {
                let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
                json!({"order": 2, "storage": "matrix", "coeffs": rows})
            }
            None => json!({"order": k.order(), "storage": "dense", "coeffs": k.coeffs()}),
        })
        .collect();
    Ok(json!({"basis_dim": v.dim(), "components": comps}))
}

fn pure_kernel(c: &ChaosExpansion) -> Result<&Kernel> {
    let order = c.pure_order().ok_or(ChaosError::MixedOrders)?;
    c.term(order).ok_or(ChaosError::MixedOrders)
}

pub fn complex_to_json(kernels: &[BasisKernel]) -> Result<Value> {
    let n = kernels.first().map(BasisKernel::dim).ok_or_else(|| ChaosError::InvalidParameter("no kernels".into()))?;
    let comps: Vec<Value> = kernels
        .iter()
        .map(|k| {
            let (p, q) = k.bidegree();
            let pairs: Vec<[f64; 2]> = k.coeffs().iter().map(|c| [c.re, c.im]).collect();
            json!({"bidegree": [p, q], "storage": "dense", "coeffs": pairs})
        })
        .collect();
    Ok(json!({"basis_dim": n, "complex": true, "components": comps}))
}
