//! The `conformal-metric v1` text format.
//!
//! ```text
//! conformal-metric v1
//! # Euclidean Taub-NUT
//! dim = 4
//! signature = 0,4
//! param m = 1
//! g 1 1 : 1 + m/x1
//! g 3 4 : m*cos(x2)/(1 + m/x1)
//! domain : x1
//! ```
//!
//! Component indices are 1-based; `g i j` also sets `g j i`, unlisted
//! components are zero. Each `domain` line is an expression that must be
//! positive. Optional `label = ...` and `claim ...` lines carry metadata that
//! the analysis front end checks (`claim einstein`, `claim ricci_flat`,
//! `claim scalar = <value>`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::{parse, ExprAst, ExprError};

pub const FORMAT_TAG: &str = "conformal-metric v1";

#[derive(Debug, Clone, PartialEq)]
pub enum Claim {
    Einstein,
    RicciFlat,
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricFile {
    pub label: Option<String>,
    pub dim: usize,
    /// `(negative, positive)` eigenvalue counts.
    pub signature: (usize, usize),
    pub params: BTreeMap<String, f64>,
    /// Upper-triangular entries `(i, j, expr)` with `i <= j`, 0-based.
    pub components: Vec<(usize, usize, ExprAst)>,
    pub domain: Vec<ExprAst>,
    pub claims: Vec<Claim>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricFileError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}, column {column}: {source}")]
    Expr {
        line: usize,
        column: usize,
        source: ExprError,
    },
    #[error("missing `{0}` header")]
    MissingHeader(&'static str),
}

fn syntax(line: usize, message: impl Into<String>) -> MetricFileError {
    MetricFileError::Syntax {
        line,
        message: message.into(),
    }
}

fn split_key_value(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    Some((k.trim(), v.trim()))
}

pub fn parse_metric_file(text: &str) -> Result<MetricFile, MetricFileError> {
    let mut label = None;
    let mut dim = None;
    let mut signature = None;
    let mut params = BTreeMap::new();
    let mut claims = Vec::new();
    // (line number, column of expression, indices, source)
    let mut pending: Vec<(usize, usize, Option<(usize, usize)>, String)> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == FORMAT_TAG {
            continue;
        }
        let column_of = |needle: &str| raw_line.find(needle).map(|c| c + needle.len()).unwrap_or(0);
        if let Some(rest) = trimmed.strip_prefix("claim ") {
            let rest = rest.trim();
            let claim = match rest {
                "einstein" => Claim::Einstein,
                "ricci_flat" => Claim::RicciFlat,
                _ => match split_key_value(rest) {
                    Some(("scalar", v)) => Claim::Scalar(
                        v.parse()
                            .map_err(|_| syntax(line_no, format!("bad scalar claim `{v}`")))?,
                    ),
                    _ => return Err(syntax(line_no, format!("unknown claim `{rest}`"))),
                },
            };
            claims.push(claim);
        } else if let Some(rest) = trimmed.strip_prefix("param ") {
            let (name, value) =
                split_key_value(rest).ok_or_else(|| syntax(line_no, "expected `param NAME = value`"))?;
            let valid = name
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(syntax(line_no, format!("invalid parameter name `{name}`")));
            }
            let value: f64 = value
                .parse()
                .map_err(|_| syntax(line_no, format!("parameter value `{value}` is not a number")))?;
            params.insert(name.to_string(), value);
        } else if let Some(rest) = trimmed.strip_prefix("domain") {
            let expr = rest
                .trim_start()
                .strip_prefix(':')
                .ok_or_else(|| syntax(line_no, "expected `domain : <expr>`"))?;
            pending.push((line_no, column_of(":"), None, expr.to_string()));
        } else if let Some(rest) = trimmed.strip_prefix("g ") {
            let (idx_part, expr) = rest
                .split_once(':')
                .ok_or_else(|| syntax(line_no, "expected `g i j : <expr>`"))?;
            let nums: Vec<&str> = idx_part.split_whitespace().collect();
            if nums.len() != 2 {
                return Err(syntax(line_no, "component line needs two indices"));
            }
            let parse_idx = |s: &str| -> Result<usize, MetricFileError> {
                s.parse::<usize>()
                    .ok()
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| syntax(line_no, format!("bad index `{s}`")))
            };
            let (i, j) = (parse_idx(nums[0])?, parse_idx(nums[1])?);
            pending.push((line_no, column_of(":"), Some((i - 1, j - 1)), expr.to_string()));
        } else if let Some((key, value)) = split_key_value(trimmed) {
            match key {
                "dim" => {
                    let d: usize = value
                        .parse()
                        .map_err(|_| syntax(line_no, format!("bad dimension `{value}`")))?;
                    if d == 0 {
                        return Err(syntax(line_no, "dimension must be positive"));
                    }
                    dim = Some(d);
                }
                "signature" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.parse().ok()).collect();
                    match parsed.as_deref() {
                        Some([p, q]) => signature = Some((*p, *q)),
                        _ => return Err(syntax(line_no, format!("bad signature `{value}`"))),
                    }
                }
                "label" => label = Some(value.to_string()),
                other => return Err(syntax(line_no, format!("unknown header `{other}`"))),
            }
        } else {
            return Err(syntax(line_no, format!("unrecognized line `{trimmed}`")));
        }
    }

    let dim = dim.ok_or(MetricFileError::MissingHeader("dim"))?;
    let signature = signature.ok_or(MetricFileError::MissingHeader("signature"))?;
    if signature.0 + signature.1 != dim {
        return Err(syntax(0, format!("signature {:?} does not add up to dim {dim}", signature)));
    }
    let names: BTreeSet<String> = params.keys().cloned().collect();
    let mut components: Vec<(usize, usize, ExprAst)> = Vec::new();
    let mut domain = Vec::new();
    for (line, column, indices, source) in pending {
        let expr = parse(&source, dim, &names).map_err(|e| MetricFileError::Expr {
            line,
            column: column + e.offset().unwrap_or(0),
            source: e,
        })?;
        match indices {
            None => domain.push(expr),
            Some((i, j)) => {
                if i >= dim || j >= dim {
                    return Err(syntax(line, format!("index out of range for dim {dim}")));
                }
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                if components.iter().any(|(x, y, _)| (*x, *y) == (a, b)) {
                    return Err(syntax(line, format!("component g {} {} given twice", a + 1, b + 1)));
                }
                components.push((a, b, expr));
            }
        }
    }
    components.sort_by_key(|(a, b, _)| (*a, *b));
    Ok(MetricFile {
        label,
        dim,
        signature,
        params,
        components,
        domain,
        claims,
    })
}

pub fn render_metric_file(file: &MetricFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_TAG}");
    if let Some(label) = &file.label {
        let _ = writeln!(out, "label = {label}");
    }
    let _ = writeln!(out, "dim = {}", file.dim);
    let _ = writeln!(out, "signature = {},{}", file.signature.0, file.signature.1);
    for (name, value) in &file.params {
        let _ = writeln!(out, "param {name} = {value:?}");
    }
    for (i, j, expr) in &file.components {
        let _ = writeln!(out, "g {} {} : {expr}", i + 1, j + 1);
    }
    for expr in &file.domain {
        let _ = writeln!(out, "domain : {expr}");
    }
    for claim in &file.claims {
        let _ = match claim {
            Claim::Einstein => writeln!(out, "claim einstein"),
            Claim::RicciFlat => writeln!(out, "claim ricci_flat"),
            Claim::Scalar(v) => writeln!(out, "claim scalar = {v:?}"),
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAUB_NUT: &str = "\
conformal-metric v1
# Euclidean Taub-NUT
dim = 4
signature = 0,4
param m = 1
g 1 1 : 1 + m/x1
g 2 2 : (1 + m/x1)*x1^2
g 3 3 : (1 + m/x1)*x1^2*sin(x2)^2 + m^2*cos(x2)^2/(1 + m/x1)
g 4 3 : m*cos(x2)/(1 + m/x1)
g 4 4 : 1/(1 + m/x1)
domain : x1
domain : sin(x2)
claim ricci_flat
";

    #[test]
    fn parses_and_symmetrizes() {
        let file = parse_metric_file(TAUB_NUT).unwrap();
        assert_eq!(file.dim, 4);
        assert_eq!(file.signature, (0, 4));
        assert_eq!(file.params["m"], 1.0);
        assert_eq!(file.components.len(), 5);
        assert!(file.components.iter().any(|(i, j, _)| (*i, *j) == (2, 3)));
        assert_eq!(file.domain.len(), 2);
        assert_eq!(file.claims, vec![Claim::RicciFlat]);
    }

    #[test]
    fn render_round_trips() {
        let file = parse_metric_file(TAUB_NUT).unwrap();
        let again = parse_metric_file(&render_metric_file(&file)).unwrap();
        assert_eq!(file, again);
    }

    #[test]
    fn reports_expression_errors_with_line() {
        let text = "dim = 2\nsignature = 0,2\ng 1 1 : 1 + q\n";
        match parse_metric_file(text) {
            Err(MetricFileError::Expr { line: 3, source, .. }) => {
                assert!(matches!(source, ExprError::UnknownIdentifier { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_headers() {
        assert_eq!(
            parse_metric_file("signature = 0,2\n"),
            Err(MetricFileError::MissingHeader("dim"))
        );
        assert!(parse_metric_file("dim = 2\nsignature = 1,2\n").is_err());
        assert!(parse_metric_file("dim = 2\nsignature = 0,2\ng 1 3 : 1\n").is_err());
        assert!(parse_metric_file("dim = 2\nsignature = 0,2\nwhat\n").is_err());
    }
}
