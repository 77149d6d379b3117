//! CSV tables and versioned JSON documents shared by the library and CLI.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::coeffs::{AncestorTable, CoefficientVector};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng;

pub const SCHEMA_VERSION: &str = "1";

impl CoefficientVector {
    /// Columns `n,a` for `n = 0..N-1`.
    pub fn to_csv(&self) -> String {
        column_csv("n,a", &self.a)
    }
}

impl AncestorTable {
    /// Columns `k,h` for `k = 0..=N`.
    pub fn to_csv(&self) -> String {
        column_csv("k,h", &self.h)
    }
}

fn column_csv(header: &str, values: &[f64]) -> String {
    let mut out = String::new();
    writeln!(out, "{header}").unwrap();
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v}").unwrap();
    }
    out
}

/// `{schema_version, params, values}`.
pub fn document<T: Serialize>(params: &ModelParams, values: &T) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "params": params,
        "values": values,
    })
}

/// Same as [`document`] with the random stream scheme and master seed.
pub fn seeded_document<T: Serialize>(params: &ModelParams, seed: u64, values: &T) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "rng": rng::SCHEME,
        "seed": seed,
        "params": params,
        "values": values,
    })
}

/// Monte Carlo result in its external form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McReport {
    pub params: ModelParams,
    pub k: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub replicas: u64,
    pub horizon: Option<f64>,
}

/// Reads the parameters back from a document written by [`document`] or
/// [`seeded_document`], or from a bare parameter object.
pub fn params_from_json(text: &str) -> Result<ModelParams> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("unreadable JSON: {e}")))?;
    if let Some(version) = v.get("schema_version") {
        if version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported schema_version {version}"
            )));
        }
    }
    let p = v.get("params").unwrap_or(&v);
    serde_json::from_value(p.clone()).map_err(|e| Error::InvalidParams(e.to_string()))
}
