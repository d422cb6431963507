//! The machine-readable report and its text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cgl_core::analysis::{Check, DimReport, TheoremReport};
use cgl_core::geometry::Signature;
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA: &str = "conformal-gap-lab/1";
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Serialize)]
pub struct MetricInfo {
    pub label: String,
    pub n: usize,
    pub signature: Signature,
    pub params: BTreeMap<String, f64>,
    pub coordinates: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogueEntry {
    pub name: String,
    pub description: String,
}

/// Curvature invariants at one point.
#[derive(Debug, Clone, Serialize)]
pub struct PointInvariants {
    pub point: Vec<f64>,
    pub scalar: f64,
    pub ricci_norm: f64,
    pub weyl_norm: f64,
    pub cotton_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kerw_dim: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub kerw_basis: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kerw_bound: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kerw_marginal: Option<bool>,
    /// `Y_ars ε^rs_b`, row-major, for n = 3.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cotton_dual: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub tool_version: &'static str,
    pub command: Vec<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricInfo>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub catalogue: Vec<CatalogueEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointInvariants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<DimReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &[String], seed: u64) -> Report {
        Report {
            schema: SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_vec(),
            seed,
            metric: None,
            catalogue: Vec::new(),
            points: Vec::new(),
            dims: None,
            theorem: None,
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn finish(&mut self) {
        let theorem_ok = self.theorem.as_ref().is_none_or(|t| t.passed);
        self.passed = theorem_ok && self.checks.iter().all(|c| c.passed);
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut text = serde_json::to_string_pretty(&round_floats(value)).expect("json");
        text.push('\n');
        text
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if !self.catalogue.is_empty() {
            for entry in &self.catalogue {
                let _ = writeln!(out, "{:<26} {}", entry.name, entry.description);
            }
            return out;
        }
        if let Some(m) = &self.metric {
            let _ = writeln!(out, "metric: {} (n = {}, signature {})", m.label, m.n, m.signature);
            if !m.params.is_empty() {
                let params: Vec<String> = m.params.iter().map(|(k, v)| format!("{k} = {}", num(*v))).collect();
                let _ = writeln!(out, "params: {}", params.join(", "));
            }
        }
        for p in &self.points {
            let coords: Vec<String> = p.point.iter().map(|v| num(*v)).collect();
            let _ = writeln!(out, "point ({})", coords.join(", "));
            let _ = writeln!(out, "  Sc      = {}", num(p.scalar));
            let _ = writeln!(out, "  |Ric|   = {}", num(p.ricci_norm));
            let _ = writeln!(out, "  |W|     = {}", num(p.weyl_norm));
            let _ = writeln!(out, "  |Y|     = {}", num(p.cotton_norm));
            if let Some(d) = p.kerw_dim {
                let bound = p.kerw_bound.map(|b| format!(" (bound {b})")).unwrap_or_default();
                let _ = writeln!(out, "  dim ker W = {d}{bound}");
                for v in &p.kerw_basis {
                    let v: Vec<String> = v.iter().map(|x| num(*x)).collect();
                    let _ = writeln!(out, "    ({})", v.join(", "));
                }
            }
            if let Some(y) = &p.cotton_dual {
                let n = (y.len() as f64).sqrt() as usize;
                let _ = writeln!(out, "  dual Cotton tensor:");
                for row in y.chunks(n) {
                    let row: Vec<String> = row.iter().map(|x| num(*x)).collect();
                    let _ = writeln!(out, "    {}", row.join("  "));
                }
            }
        }
        if let Some(d) = &self.dims {
            let _ = writeln!(out, "d_aE  in [{}, {}]{}", d.d_ae_lower, d.d_ae_upper, if d.exact_ae { " (exact)" } else { "" });
            let _ = writeln!(out, "d_ncK in [{}, {}]{}", d.d_nck_lower, d.d_nck_upper, if d.exact_nck { " (exact)" } else { "" });
            let _ = writeln!(
                out,
                "rank tolerance {} (marginal: {}), {} curvature blocks, {} transported points, {} loops, seed {}",
                num(d.tol),
                d.marginal,
                d.curvature_blocks,
                d.transported_points.len(),
                d.loops,
                d.seed
            );
            for w in &d.scale_witnesses {
                let _ = writeln!(out, "  scale {}: residual {}", w.sigma, num(w.max_residual));
            }
            for w in &d.nck_witnesses {
                let _ = writeln!(out, "  wedge ({}, {}): ck residual {}", w.pair.0, w.pair.1, num(w.max_ck_residual));
            }
            if let Some(b) = &d.bounds {
                let _ = writeln!(
                    out,
                    "bounds ({:?}): d_aE <= {}, d_ncK <= {}, dim ker W = {} <= {}",
                    b.class, b.d_ae_bound, b.d_nck_bound, b.kerw_dim, b.kerw_bound
                );
            }
            for note in &d.discrepancies {
                let _ = writeln!(out, "discrepancy: {note}");
            }
        }
        if let Some(t) = &self.theorem {
            let dim = match (t.family_dim, t.claimed_dim) {
                (Some(d), _) => format!(": d_aE = {d}"),
                _ => String::new(),
            };
            let _ = writeln!(out, "{}: {}{}", if t.passed { "PASS" } else { "FAIL" }, t.theorem, dim);
            let _ = writeln!(out, "metric: {} (n = {}, signature {})", t.metric, t.n, t.signature);
            render_checks(&mut out, &t.checks);
        }
        render_checks(&mut out, &self.checks);
        let _ = writeln!(out, "result: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}

fn render_checks(out: &mut String, checks: &[Check]) {
    for c in checks {
        let _ = write!(
            out,
            "  {} {}: {} (tolerance {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            num(c.value),
            num(c.tolerance)
        );
        match &c.witness {
            Some(w) if !c.passed => {
                let _ = writeln!(out, " at {w}");
            }
            _ => out.push('\n'),
        }
    }
}

/// Round to [`SIGNIFICANT_DIGITS`]; non-finite values stay as they are.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    let r = round_sig(x);
    if r == 0.0 || (1e-4..1e12).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}
