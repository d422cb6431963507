//! Metric specifications: the example catalogue, pseudo-Euclidean factories,
//! warped products and jet evaluation of a metric and its inverse at a point.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::metric_file::{Claim, MetricFile};
use crate::expr::{parse, parse_plain, EvalEnv, ExprAst, ExprError};
use crate::jets::{seed_jets, Jet, JetError};

/// Points must satisfy every domain predicate by at least this much.
pub const DOMAIN_MARGIN: f64 = 1e-3;
/// Metrics whose smallest to largest `|eigenvalue|` ratio falls below this at
/// a point are rejected as degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-10;
/// Warped products keep `|f|` above this.
pub const WARP_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point {point:?} violates domain predicate `{predicate}` (value {value:e})")]
    OutsideDomain {
        point: Vec<f64>,
        predicate: String,
        value: f64,
    },
    #[error("metric is degenerate at {point:?} (eigenvalue ratio {ratio:e})")]
    Degenerate { point: Vec<f64>, ratio: f64 },
    #[error("declared signature {declared} but found {found} at {point:?}")]
    SignatureMismatch {
        declared: Signature,
        found: Signature,
        point: Vec<f64>,
    },
    #[error("point has {got} coordinates, metric dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("warped product needs a 4-dimensional fiber and a pseudo-Euclidean base: {0}")]
    BadWarp(String),
    #[error("could not sample {wanted} admissible points (found {found})")]
    Sampling { wanted: usize, found: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Eigenvalue sign counts `(negative, positive)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Signature {
    pub negative: usize,
    pub positive: usize,
}

impl Signature {
    pub fn new(negative: usize, positive: usize) -> Self {
        Signature { negative, positive }
    }

    pub fn dim(&self) -> usize {
        self.negative + self.positive
    }

    pub fn class(&self) -> SignatureClass {
        match self.negative.min(self.positive) {
            0 => SignatureClass::Riemannian,
            1 => SignatureClass::Lorentzian,
            _ => SignatureClass::General,
        }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.negative, self.positive)
    }
}

/// Definite, Lorentzian or `2 <= min(p,q)` signature; the submaximal bounds
/// depend only on this and the dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureClass {
    Riemannian,
    Lorentzian,
    General,
}

impl SignatureClass {
    fn shift(self) -> usize {
        match self {
            SignatureClass::Riemannian => 3,
            SignatureClass::Lorentzian => 2,
            SignatureClass::General => 1,
        }
    }

    /// Largest `dim ker W` at a point where `W != 0`.
    pub fn ker_w_bound(self, n: usize) -> usize {
        n.saturating_sub(self.shift() + 1)
    }

    /// Submaximal number of almost Einstein scales (conformally non-flat, n >= 4).
    pub fn d_ae_bound(self, n: usize) -> usize {
        n.saturating_sub(self.shift())
    }

    /// Submaximal number of normal conformal Killing fields (n >= 4).
    pub fn d_nck_bound(self, n: usize) -> usize {
        let m = self.d_ae_bound(n);
        m * m.saturating_sub(1) / 2
    }
}

/// Stated values attached to catalogue metrics, compared against what the
/// numerics find.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Claims {
    pub einstein: bool,
    pub ricci_flat: bool,
    pub scalar: Option<f64>,
    pub d_ae: Option<usize>,
    pub d_nck: Option<usize>,
    pub conformally_flat: bool,
}

/// A metric in one coordinate chart.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub label: String,
    pub n: usize,
    pub signature: Signature,
    /// Row-major `n x n`, symmetric.
    pub components: Vec<ExprAst>,
    pub params: BTreeMap<String, f64>,
    /// Each predicate must evaluate positive.
    pub domain: Vec<ExprAst>,
    /// Coordinate box for sampling.
    pub sample_box: Vec<(f64, f64)>,
    pub default_point: Vec<f64>,
    pub coordinate_names: Vec<String>,
    /// Known almost Einstein scales, as functions in this chart.
    pub scale_basis: Vec<(String, ExprAst)>,
    pub claims: Claims,
}

impl MetricSpec {
    pub fn component(&self, i: usize, j: usize) -> &ExprAst {
        &self.components[i * self.n + j]
    }

    pub fn from_metric_file(file: &MetricFile, label: &str) -> Result<MetricSpec, GeometryError> {
        let n = file.dim;
        let mut components = vec![ExprAst::Const(0.0); n * n];
        for (i, j, e) in &file.components {
            components[i * n + j] = e.clone();
            components[j * n + i] = e.clone();
        }
        let mut claims = Claims::default();
        for claim in &file.claims {
            match claim {
                Claim::Einstein => claims.einstein = true,
                Claim::RicciFlat => {
                    claims.einstein = true;
                    claims.ricci_flat = true;
                }
                Claim::Scalar(v) => claims.scalar = Some(*v),
            }
        }
        let default_point = vec![0.5; n];
        Ok(MetricSpec {
            label: file.label.clone().unwrap_or_else(|| label.to_string()),
            n,
            signature: Signature::new(file.signature.0, file.signature.1),
            components,
            params: file.params.clone(),
            domain: file.domain.clone(),
            sample_box: vec![(-1.0, 1.0); n],
            default_point,
            coordinate_names: (1..=n).map(|i| format!("x{i}")).collect(),
            scale_basis: Vec::new(),
            claims,
        })
    }

    pub fn to_metric_file(&self) -> MetricFile {
        let mut components = Vec::new();
        for i in 0..self.n {
            for j in i..self.n {
                let c = self.component(i, j);
                if !c.is_const(0.0) {
                    components.push((i, j, c.clone()));
                }
            }
        }
        let mut claims = Vec::new();
        if self.claims.ricci_flat {
            claims.push(Claim::RicciFlat);
        } else if self.claims.einstein {
            claims.push(Claim::Einstein);
        }
        if let Some(s) = self.claims.scalar {
            claims.push(Claim::Scalar(s));
        }
        MetricFile {
            label: Some(self.label.clone()),
            dim: self.n,
            signature: (self.signature.negative, self.signature.positive),
            params: self.params.clone(),
            components,
            domain: self.domain.clone(),
            claims,
        }
    }

    /// Smallest domain-predicate value at `point` (`+inf` without predicates).
    pub fn domain_value(&self, point: &[f64]) -> Result<f64, GeometryError> {
        let mut min = f64::INFINITY;
        for pred in &self.domain {
            min = min.min(pred.eval_f64(point, &self.params)?);
        }
        Ok(min)
    }

    pub fn check_point(&self, point: &[f64], margin: f64) -> Result<(), GeometryError> {
        if point.len() != self.n {
            return Err(GeometryError::DimensionMismatch {
                expected: self.n,
                got: point.len(),
            });
        }
        for pred in &self.domain {
            let value = pred
                .eval_f64(point, &self.params)
                .unwrap_or(f64::NEG_INFINITY);
            if !(value > margin) {
                return Err(GeometryError::OutsideDomain {
                    point: point.to_vec(),
                    predicate: pred.to_string(),
                    value,
                });
            }
        }
        Ok(())
    }

    /// Metric values at a point.
    pub fn metric_values(&self, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.component(i, j).eval_f64(point, &self.params)?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Seeded, domain-respecting sample points.
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, GeometryError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < 200 * count.max(1) {
            attempts += 1;
            let p: Vec<f64> = self
                .sample_box
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect();
            if self.check_point(&p, DOMAIN_MARGIN).is_ok() {
                out.push(p);
            }
        }
        if out.len() < count {
            return Err(GeometryError::Sampling {
                wanted: count,
                found: out.len(),
            });
        }
        Ok(out)
    }

    pub fn param_names(&self) -> BTreeSet<String> {
        self.params.keys().cloned().collect()
    }

    /// Parse an expression over this metric's coordinates and parameters.
    pub fn parse_expr(&self, source: &str) -> Result<ExprAst, GeometryError> {
        Ok(parse(source, self.n, &self.param_names())?)
    }
}

fn expr(source: &str, n: usize) -> ExprAst {
    parse_plain(source, n).unwrap_or_else(|e| panic!("catalogue expression `{source}`: {e}"))
}

fn expr_with(source: &str, n: usize, params: &[&str]) -> ExprAst {
    let names = params.iter().map(|s| s.to_string()).collect();
    parse(source, n, &names).unwrap_or_else(|e| panic!("catalogue expression `{source}`: {e}"))
}

fn symmetric(n: usize, entries: &[(usize, usize, ExprAst)]) -> Vec<ExprAst> {
    let mut out = vec![ExprAst::Const(0.0); n * n];
    for (i, j, e) in entries {
        out[i * n + j] = e.clone();
        out[j * n + i] = e.clone();
    }
    out
}

/// `diag(-1 (p times), +1 (q times))`.
pub fn pseudo_euclidean(p: usize, q: usize) -> Result<MetricSpec, GeometryError> {
    let n = p + q;
    if n == 0 {
        return Err(GeometryError::InvalidParameter(
            "pseudo-Euclidean metric needs p + q >= 1".into(),
        ));
    }
    let entries: Vec<_> = (0..n)
        .map(|i| (i, i, ExprAst::Const(if i < p { -1.0 } else { 1.0 })))
        .collect();
    let norm = pseudo_norm_squared(&(0..n).map(|i| (i, i < p)).collect::<Vec<_>>());
    let mut scale_basis = vec![("1".to_string(), ExprAst::Const(1.0))];
    for i in 0..n {
        scale_basis.push((format!("x{}", i + 1), ExprAst::Var(i)));
    }
    scale_basis.push(("|x|^2".to_string(), norm));
    Ok(MetricSpec {
        label: format!("pseudo_euclidean({p},{q})"),
        n,
        signature: Signature::new(p, q),
        components: symmetric(n, &entries),
        params: BTreeMap::new(),
        domain: Vec::new(),
        sample_box: vec![(-1.0, 1.0); n],
        default_point: (0..n).map(|i| 0.1 + 0.07 * i as f64).collect(),
        coordinate_names: (1..=n).map(|i| format!("x{i}")).collect(),
        scale_basis,
        claims: Claims {
            einstein: true,
            ricci_flat: true,
            scalar: Some(0.0),
            d_ae: Some(n + 2),
            d_nck: Some((n + 1) * (n + 2) / 2),
            conformally_flat: true,
        },
    })
}

/// `Σ ±x_i^2` over `(coordinate, negative)` pairs.
fn pseudo_norm_squared(coords: &[(usize, bool)]) -> ExprAst {
    let mut acc = ExprAst::Const(0.0);
    for &(i, negative) in coords {
        let sq = ExprAst::pow(ExprAst::Var(i), 2);
        acc = if negative {
            ExprAst::sub(acc, sq)
        } else {
            ExprAst::add(acc, sq)
        };
    }
    acc
}

/// Catalogue entries: `(name, description)`.
pub fn catalogue() -> Vec<(&'static str, &'static str)> {
    vec![
        ("fubini_study", "Fubini-Study on CP^2, Riemannian, Einstein with Sc = 48"),
        ("fubini_study_hyperbolic", "noncompact dual of Fubini-Study, Einstein with Sc = -48"),
        ("taub_nut", "Euclidean Taub-NUT (param m > 0, default 1), Ricci-flat"),
        ("pp_wave", "Lorentzian pp-wave in coordinates (t,x,y,z), Ricci-flat, d_aE = 2"),
        ("pp_split", "split-signature pp-wave in (t,x,y,z), Ricci-flat, d_aE = 3"),
        ("lorentz3d", "3-dim Lorentzian metric in (x,y,t) with potential x^3 + h(y) x (param h, an expression in x2)"),
        ("euclidean", "pseudo-Euclidean space (params p, q; default 0, 4)"),
        ("riem_warped", "Riemannian warped product R^(n-4) x_f fiber (params n, sc in {48,-48,0})"),
        ("lorentz_product", "Euclidean R^(n-4) times the pp-wave (param n)"),
        ("split_product", "pseudo-Euclidean R^(p-2,n-p-2) times the split pp-wave (params n, p)"),
    ]
}

/// Raw textual parameters for [`builtin_metric`].
pub type MetricParams = BTreeMap<String, String>;

fn numeric_param(params: &MetricParams, key: &str, default: f64) -> Result<f64, GeometryError> {
    match params.get(key) {
        None => Ok(default),
        Some(text) => text
            .trim()
            .parse()
            .map_err(|_| GeometryError::InvalidParameter(format!("{key} = `{text}` is not a number"))),
    }
}

fn integer_param(params: &MetricParams, key: &str, default: usize) -> Result<usize, GeometryError> {
    let v = numeric_param(params, key, default as f64)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(GeometryError::InvalidParameter(format!("{key} must be a non-negative integer")));
    }
    Ok(v as usize)
}

fn reject_unknown(params: &MetricParams, allowed: &[&str]) -> Result<(), GeometryError> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(GeometryError::InvalidParameter(format!("unexpected parameter `{key}`")));
        }
    }
    Ok(())
}

pub fn builtin_metric(name: &str, params: &MetricParams) -> Result<MetricSpec, GeometryError> {
    match name {
        "fubini_study" => {
            reject_unknown(params, &[])?;
            Ok(fubini_study(false))
        }
        "fubini_study_hyperbolic" => {
            reject_unknown(params, &[])?;
            Ok(fubini_study(true))
        }
        "taub_nut" => {
            reject_unknown(params, &["m"])?;
            let m = numeric_param(params, "m", 1.0)?;
            if !(m > 0.0) {
                return Err(GeometryError::InvalidParameter(format!("taub_nut needs m > 0, got {m}")));
            }
            Ok(taub_nut(m))
        }
        "pp_wave" => {
            reject_unknown(params, &[])?;
            Ok(pp_wave())
        }
        "pp_split" => {
            reject_unknown(params, &[])?;
            Ok(pp_split())
        }
        "lorentz3d" => {
            reject_unknown(params, &["h"])?;
            let h = match params.get("h") {
                None => ExprAst::Const(0.0),
                Some(src) => {
                    let h = parse_plain(src, 3)?;
                    if h.variables().iter().any(|&v| v != 1) {
                        return Err(GeometryError::InvalidParameter(format!(
                            "h must depend on y = x2 only, got `{src}`"
                        )));
                    }
                    h
                }
            };
            Ok(lorentz3d(h))
        }
        "euclidean" => {
            reject_unknown(params, &["p", "q"])?;
            pseudo_euclidean(integer_param(params, "p", 0)?, integer_param(params, "q", 4)?)
        }
        "riem_warped" => {
            reject_unknown(params, &["n", "sc"])?;
            let n = integer_param(params, "n", 5)?;
            let sc = numeric_param(params, "sc", 48.0)?;
            let case = RiemCase::from_scalar(sc)?;
            riemannian_family(case, n)
        }
        "lorentz_product" => {
            reject_unknown(params, &["n"])?;
            lorentzian_family(integer_param(params, "n", 6)?)
        }
        "split_product" => {
            reject_unknown(params, &["n", "p"])?;
            general_family(integer_param(params, "n", 6)?, integer_param(params, "p", 2)?)
        }
        other => Err(GeometryError::UnknownMetric(other.to_string())),
    }
}

fn fubini_study(hyperbolic: bool) -> MetricSpec {
    let n = 4;
    let (c, s, sign) = if hyperbolic {
        ("cosh", "sinh", "")
    } else {
        ("cos", "sin", "-")
    };
    let g22 = format!("1/2*{c}(x1)^2*{s}(x1)^2");
    let g24 = format!("{sign}1/2*{c}(x1)^2*{s}(x1)^2*{s}(x3)^2");
    let g33 = format!("1/2*{c}(x1)^2");
    let g44 = format!("1/2*{c}(x1)^2*({s}(x1)^2*{s}(x3)^4 + {c}(x3)^2*{s}(x3)^2)");
    let components = symmetric(
        n,
        &[
            (0, 0, ExprAst::Const(0.5)),
            (1, 1, expr(&g22, n)),
            (1, 3, expr(&g24, n)),
            (2, 2, expr(&g33, n)),
            (3, 3, expr(&g44, n)),
        ],
    );
    let (label, domain, sample_box, default_point, scalar) = if hyperbolic {
        (
            "fubini_study_hyperbolic",
            vec![expr("x1", n), expr("x3", n)],
            vec![(0.2, 1.2), (-1.5, 1.5), (0.2, 1.2), (-1.5, 1.5)],
            vec![0.6, 0.3, 0.7, 0.2],
            -48.0,
        )
    } else {
        let lo = 0.1;
        let hi = PI / 2.0 - 0.1;
        (
            "fubini_study",
            vec![expr("sin(x1)*cos(x1)", n), expr("sin(x3)*cos(x3)", n)],
            vec![(lo, hi), (-1.5, 1.5), (lo, hi), (-1.5, 1.5)],
            vec![0.6, 0.3, 0.7, 0.2],
            48.0,
        )
    };
    MetricSpec {
        label: label.into(),
        n,
        signature: Signature::new(0, 4),
        components,
        params: BTreeMap::new(),
        domain,
        sample_box,
        default_point,
        coordinate_names: (1..=4).map(|i| format!("x{i}")).collect(),
        scale_basis: vec![("1".into(), ExprAst::Const(1.0))],
        claims: Claims {
            einstein: true,
            scalar: Some(scalar),
            d_ae: Some(1),
            d_nck: Some(0),
            ..Claims::default()
        },
    }
}

fn taub_nut(m: f64) -> MetricSpec {
    let n = 4;
    let p = ["m"];
    let v = "(1 + m/x1)";
    let components = symmetric(
        n,
        &[
            (0, 0, expr_with(v, n, &p)),
            (1, 1, expr_with(&format!("{v}*x1^2"), n, &p)),
            (
                2,
                2,
                expr_with(&format!("{v}*x1^2*sin(x2)^2 + m^2*cos(x2)^2/{v}"), n, &p),
            ),
            (2, 3, expr_with(&format!("m*cos(x2)/{v}"), n, &p)),
            (3, 3, expr_with(&format!("1/{v}"), n, &p)),
        ],
    );
    MetricSpec {
        label: "taub_nut".into(),
        n,
        signature: Signature::new(0, 4),
        components,
        params: BTreeMap::from([("m".to_string(), m)]),
        domain: vec![expr("x1", n), expr("sin(x2)", n)],
        sample_box: vec![(0.5, 3.0), (0.3, PI - 0.3), (-1.5, 1.5), (-1.5, 1.5)],
        default_point: vec![1.3, 0.9, 0.5, 0.2],
        coordinate_names: (1..=4).map(|i| format!("x{i}")).collect(),
        scale_basis: vec![("1".into(), ExprAst::Const(1.0))],
        claims: Claims {
            einstein: true,
            ricci_flat: true,
            scalar: Some(0.0),
            d_ae: Some(1),
            d_nck: Some(0),
            ..Claims::default()
        },
    }
}

fn pp_names() -> Vec<String> {
    ["t", "x", "y", "z"].iter().map(|s| s.to_string()).collect()
}

fn pp_wave() -> MetricSpec {
    let n = 4;
    let e = "exp(-sqrt(2)*x1)";
    let components = symmetric(
        n,
        &[
            (0, 0, expr(&format!("x2^2*{e}"), n)),
            (0, 3, expr(e, n)),
            (1, 1, expr(e, n)),
            (2, 2, expr(e, n)),
        ],
    );
    MetricSpec {
        label: "pp_wave".into(),
        n,
        signature: Signature::new(1, 3),
        components,
        params: BTreeMap::new(),
        domain: Vec::new(),
        sample_box: vec![(-1.0, 1.0); 4],
        default_point: vec![0.0, 1.0, 0.0, 0.0],
        coordinate_names: pp_names(),
        scale_basis: vec![
            ("1".into(), ExprAst::Const(1.0)),
            ("exp(-sqrt(2) t)".into(), expr(e, n)),
        ],
        claims: Claims {
            einstein: true,
            ricci_flat: true,
            scalar: Some(0.0),
            d_ae: Some(2),
            d_nck: Some(1),
            ..Claims::default()
        },
    }
}

fn pp_split() -> MetricSpec {
    let n = 4;
    let components = symmetric(
        n,
        &[
            (0, 0, expr("x2^2", n)),
            (0, 3, ExprAst::Const(1.0)),
            (1, 2, ExprAst::Const(1.0)),
        ],
    );
    MetricSpec {
        label: "pp_split".into(),
        n,
        signature: Signature::new(2, 2),
        components,
        params: BTreeMap::new(),
        domain: Vec::new(),
        sample_box: vec![(-1.0, 1.0); 4],
        default_point: vec![0.2, 0.8, -0.3, 0.1],
        coordinate_names: pp_names(),
        scale_basis: vec![
            ("1".into(), ExprAst::Const(1.0)),
            ("t".into(), ExprAst::Var(0)),
            ("x".into(), ExprAst::Var(1)),
        ],
        claims: Claims {
            einstein: true,
            ricci_flat: true,
            scalar: Some(0.0),
            d_ae: Some(3),
            // stated value; the computed dimension is 3 and gets flagged
            d_nck: Some(2),
            ..Claims::default()
        },
    }
}

fn lorentz3d(h: ExprAst) -> MetricSpec {
    let n = 3;
    let potential = ExprAst::add(
        ExprAst::pow(ExprAst::Var(0), 3),
        ExprAst::mul(h, ExprAst::Var(0)),
    );
    let components = symmetric(
        n,
        &[
            (0, 0, ExprAst::Const(1.0)),
            (1, 1, potential),
            (1, 2, ExprAst::Const(0.5)),
        ],
    );
    MetricSpec {
        label: "lorentz3d".into(),
        n,
        signature: Signature::new(1, 2),
        components,
        params: BTreeMap::new(),
        domain: Vec::new(),
        sample_box: vec![(-1.0, 1.0); 3],
        default_point: vec![0.7, 0.4, 0.1],
        coordinate_names: ["x", "y", "t"].iter().map(|s| s.to_string()).collect(),
        scale_basis: Vec::new(),
        claims: Claims {
            d_ae: Some(0),
            d_nck: Some(1),
            ..Claims::default()
        },
    }
}

// ---------------------------------------------------------------- warped products

/// Ingredients of `g = base ⊕ f² fiber` with `f = a + b|x|²`.
#[derive(Debug, Clone)]
pub struct WarpedSpec {
    pub base: MetricSpec,
    pub fiber: MetricSpec,
    pub a: f64,
    pub b: f64,
    /// Select the `f < 0` region instead of `f > 0`.
    pub negative_branch: bool,
}

/// Signs of a constant diagonal ±1 metric, or `None`.
pub fn pseudo_euclidean_signs(spec: &MetricSpec) -> Option<Vec<bool>> {
    let mut signs = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        for j in 0..spec.n {
            let c = spec.component(i, j);
            if i == j {
                match c {
                    ExprAst::Const(v) if *v == 1.0 => signs.push(false),
                    ExprAst::Const(v) if *v == -1.0 => signs.push(true),
                    _ => return None,
                }
            } else if !c.is_const(0.0) {
                return None;
            }
        }
    }
    Some(signs)
}

impl WarpedSpec {
    /// `f = a + b|x|²` over the base coordinates.
    pub fn warp_expr(&self) -> ExprAst {
        let signs = pseudo_euclidean_signs(&self.base).unwrap_or_default();
        let coords: Vec<(usize, bool)> = signs.iter().copied().enumerate().collect();
        ExprAst::add(
            ExprAst::Const(self.a),
            ExprAst::mul(ExprAst::Const(self.b), pseudo_norm_squared(&coords)),
        )
    }
}

pub fn warped_product(ws: &WarpedSpec) -> Result<MetricSpec, GeometryError> {
    if ws.fiber.n != 4 {
        return Err(GeometryError::BadWarp(format!("fiber has dimension {}", ws.fiber.n)));
    }
    let signs = pseudo_euclidean_signs(&ws.base)
        .ok_or_else(|| GeometryError::BadWarp(format!("base `{}` is not pseudo-Euclidean", ws.base.label)))?;
    if ws.a == 0.0 && ws.b == 0.0 {
        return Err(GeometryError::BadWarp("degenerate warp a = b = 0".into()));
    }
    let nb = ws.base.n;
    let n = nb + 4;
    let f = ws.warp_expr().fold_constants();
    let f_sq = ExprAst::pow(f.clone(), 2).fold_constants();
    let shift = |i: usize| i + nb;
    let mut components = vec![ExprAst::Const(0.0); n * n];
    for i in 0..nb {
        components[i * n + i] = ExprAst::Const(if signs[i] { -1.0 } else { 1.0 });
    }
    for i in 0..4 {
        for j in 0..4 {
            let c = ws.fiber.component(i, j);
            if c.is_const(0.0) {
                continue;
            }
            components[(i + nb) * n + (j + nb)] = ExprAst::mul(f_sq.clone(), c.remap_vars(&shift));
        }
    }
    let mut domain: Vec<ExprAst> = ws.fiber.domain.iter().map(|d| d.remap_vars(&shift)).collect();
    let is_constant_warp = ws.b == 0.0;
    if !is_constant_warp {
        let oriented = if ws.negative_branch {
            ExprAst::neg(f.clone())
        } else {
            f.clone()
        };
        domain.push(ExprAst::sub(oriented, ExprAst::Const(WARP_MARGIN)));
    } else if (ws.a > 0.0) == ws.negative_branch || ws.a.abs() <= WARP_MARGIN {
        return Err(GeometryError::BadWarp(format!("constant warp f = {} has no admissible region", ws.a)));
    }
    let mut sample_box: Vec<(f64, f64)> = vec![(-0.5, 0.5); nb];
    sample_box.extend(ws.fiber.sample_box.iter().copied());
    let mut default_point: Vec<f64> = (0..nb).map(|i| 0.1 + 0.05 * i as f64).collect();
    default_point.extend(ws.fiber.default_point.iter().copied());
    let mut coordinate_names: Vec<String> = (1..=nb).map(|i| format!("u{i}")).collect();
    coordinate_names.extend(ws.fiber.coordinate_names.iter().cloned());
    Ok(MetricSpec {
        label: format!("warped({}; f = {}; {})", ws.base.label, f, ws.fiber.label),
        n,
        signature: Signature::new(
            ws.base.signature.negative + ws.fiber.signature.negative,
            ws.base.signature.positive + ws.fiber.signature.positive,
        ),
        components,
        params: ws.fiber.params.clone(),
        domain,
        sample_box,
        default_point,
        coordinate_names,
        scale_basis: Vec::new(),
        claims: Claims::default(),
    })
}

/// The three Riemannian warped families, keyed by the fiber scalar curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiemCase {
    /// Fubini-Study fiber, `f = 1 - |x|²`.
    A,
    /// Hyperbolic Fubini-Study fiber, `f = 1 + |x|²`.
    B,
    /// Taub-NUT fiber, `f = 1`.
    C,
}

impl RiemCase {
    pub fn from_scalar(sc: f64) -> Result<RiemCase, GeometryError> {
        if sc == 48.0 {
            Ok(RiemCase::A)
        } else if sc == -48.0 {
            Ok(RiemCase::B)
        } else if sc == 0.0 {
            Ok(RiemCase::C)
        } else {
            Err(GeometryError::InvalidParameter(format!("fiber scalar curvature must be 48, -48 or 0, got {sc}")))
        }
    }

    pub fn from_letter(letter: &str) -> Result<RiemCase, GeometryError> {
        match letter {
            "a" => Ok(RiemCase::A),
            "b" => Ok(RiemCase::B),
            "c" => Ok(RiemCase::C),
            other => Err(GeometryError::InvalidParameter(format!("unknown case `{other}`"))),
        }
    }

    pub fn fiber_scalar(self) -> f64 {
        match self {
            RiemCase::A => 48.0,
            RiemCase::B => -48.0,
            RiemCase::C => 0.0,
        }
    }

    /// `(a, b)` of the warp `f = a + b|x|²`.
    pub fn warp(self) -> (f64, f64) {
        match self {
            RiemCase::A => (1.0, -1.0),
            RiemCase::B => (1.0, 1.0),
            RiemCase::C => (1.0, 0.0),
        }
    }

    /// `(A, B)` per unit `c⁰` in `σ = A + B|x|² + Σ cⁱxᵢ`.
    pub fn scale_quadratic(self) -> (f64, f64) {
        match self {
            RiemCase::A => (1.0, 1.0),
            RiemCase::B => (1.0, -1.0),
            RiemCase::C => (1.0, 0.0),
        }
    }

    pub fn fiber(self) -> MetricSpec {
        match self {
            RiemCase::A => fubini_study(false),
            RiemCase::B => fubini_study(true),
            RiemCase::C => taub_nut(1.0),
        }
    }
}

fn check_family_dim(n: usize) -> Result<(), GeometryError> {
    if !(5..=8).contains(&n) {
        return Err(GeometryError::InvalidParameter(format!("family dimension must be 5..=8, got {n}")));
    }
    Ok(())
}

fn base_quadratic(nb: usize, signs: &[bool]) -> ExprAst {
    pseudo_norm_squared(&(0..nb).map(|i| (i, signs[i])).collect::<Vec<_>>())
}

/// Riemannian warped product over Euclidean `R^(n-4)` with the case's fiber.
pub fn riemannian_family(case: RiemCase, n: usize) -> Result<MetricSpec, GeometryError> {
    check_family_dim(n)?;
    let nb = n - 4;
    let (a, b) = case.warp();
    let ws = WarpedSpec {
        base: pseudo_euclidean(0, nb)?,
        fiber: case.fiber(),
        a,
        b,
        negative_branch: false,
    };
    let mut spec = warped_product(&ws)?;
    let (qa, qb) = case.scale_quadratic();
    let quad = base_quadratic(nb, &vec![false; nb]);
    let lead = ExprAst::add(ExprAst::Const(qa), ExprAst::mul(ExprAst::Const(qb), quad)).fold_constants();
    let mut basis = vec![(format!("{lead}"), lead)];
    for i in 0..nb {
        basis.push((format!("x{}", i + 1), ExprAst::Var(i)));
    }
    spec.label = format!("riem_warped(case {:?}, n = {n})", case).to_lowercase();
    spec.scale_basis = basis;
    spec.claims = Claims {
        d_ae: Some(n - 3),
        d_nck: Some((n - 3) * (n - 4) / 2),
        ..Claims::default()
    };
    Ok(spec)
}

/// Euclidean `R^(n-4)` times the pp-wave.
pub fn lorentzian_family(n: usize) -> Result<MetricSpec, GeometryError> {
    check_family_dim(n)?;
    let nb = n - 4;
    let ws = WarpedSpec {
        base: pseudo_euclidean(0, nb)?,
        fiber: pp_wave(),
        a: 1.0,
        b: 0.0,
        negative_branch: false,
    };
    let mut spec = warped_product(&ws)?;
    let tau = ws.fiber.scale_basis[1].1.remap_vars(&|i| i + nb);
    let mut basis = vec![("1".to_string(), ExprAst::Const(1.0)), ("tau".to_string(), tau)];
    for i in 0..nb {
        basis.push((format!("x{}", i + 1), ExprAst::Var(i)));
    }
    spec.label = format!("lorentz_product(n = {n})");
    spec.scale_basis = basis;
    spec.claims = Claims {
        einstein: true,
        ricci_flat: true,
        scalar: Some(0.0),
        d_ae: Some(n - 2),
        d_nck: Some((n - 2) * (n - 3) / 2),
        ..Claims::default()
    };
    Ok(spec)
}

/// Pseudo-Euclidean `R^(p-2, n-p-2)` times the split pp-wave.
pub fn general_family(n: usize, p: usize) -> Result<MetricSpec, GeometryError> {
    check_family_dim(n)?;
    if p < 2 || p > n - p {
        return Err(GeometryError::InvalidParameter(format!(
            "general signature needs 2 <= p <= n - p, got n = {n}, p = {p}"
        )));
    }
    let nb = n - 4;
    let ws = WarpedSpec {
        base: pseudo_euclidean(p - 2, n - p - 2)?,
        fiber: pp_split(),
        a: 1.0,
        b: 0.0,
        negative_branch: false,
    };
    let mut spec = warped_product(&ws)?;
    let shift = |i: usize| i + nb;
    let mut basis = vec![
        ("1".to_string(), ExprAst::Const(1.0)),
        ("tau'".to_string(), ws.fiber.scale_basis[1].1.remap_vars(&shift)),
        ("tau''".to_string(), ws.fiber.scale_basis[2].1.remap_vars(&shift)),
    ];
    for i in 0..nb {
        basis.push((format!("x{}", i + 1), ExprAst::Var(i)));
    }
    spec.label = format!("split_product(n = {n}, p = {p})");
    spec.scale_basis = basis;
    spec.claims = Claims {
        einstein: true,
        ricci_flat: true,
        scalar: Some(0.0),
        d_ae: Some(n - 1),
        d_nck: Some((n - 1) * (n - 2) / 2),
        ..Claims::default()
    };
    Ok(spec)
}

// ---------------------------------------------------------------- frames

/// Metric and inverse metric as jets at one point.
#[derive(Debug, Clone)]
pub struct MetricFrame {
    pub point: Vec<f64>,
    pub n: usize,
    pub order: usize,
    /// Row-major `g_ij`.
    pub g: Vec<Jet>,
    /// Row-major `g^ij`.
    pub g_inv: Vec<Jet>,
    pub signature: Signature,
    pub det: f64,
}

impl MetricFrame {
    pub fn g_value(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j].value()
    }

    pub fn g_inv_value(&self, i: usize, j: usize) -> f64 {
        self.g_inv[i * self.n + j].value()
    }
}

/// Signature from eigenvalue signs.
/// `min |λ| / max |λ|` of a symmetric matrix; NaN entries give NaN.
pub fn eigenvalue_ratio(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    let eig = SymmetricEigen::new(m.clone());
    let abs = eig.eigenvalues.iter().map(|v| v.abs());
    let max = abs.clone().fold(0.0, f64::max);
    let min = abs.fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

pub fn signature_of(m: &DMatrix<f64>) -> Signature {
    let eig = SymmetricEigen::new(m.clone());
    let negative = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
    Signature::new(negative, m.nrows() - negative)
}

/// Gauss-Jordan inverse over the jet ring, pivoting on the value part.
pub fn invert_jet_matrix(m: &[Jet], n: usize) -> Result<Vec<Jet>, GeometryError> {
    let space = m[0].space().clone();
    let mut a: Vec<Jet> = m.to_vec();
    let mut inv: Vec<Jet> = (0..n * n)
        .map(|k| Jet::constant(&space, if k / n == k % n { 1.0 } else { 0.0 }))
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| {
                a[r * n + col]
                    .value()
                    .abs()
                    .total_cmp(&a[s * n + col].value().abs())
            })
            .unwrap_or(col);
        if a[pivot * n + col].value().abs() <= 1e-300 {
            return Err(GeometryError::Degenerate {
                point: Vec::new(),
                ratio: 0.0,
            });
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        let p_inv = a[col * n + col].recip()?;
        for k in 0..n {
            if !a[col * n + k].is_zero() {
                a[col * n + k] = a[col * n + k].mul_jet(&p_inv);
            }
            if !inv[col * n + k].is_zero() {
                inv[col * n + k] = inv[col * n + k].mul_jet(&p_inv);
            }
        }
        for r in 0..n {
            if r == col || a[r * n + col].is_zero() {
                continue;
            }
            let factor = a[r * n + col].clone();
            for k in 0..n {
                if !a[col * n + k].is_zero() {
                    let src = a[col * n + k].clone();
                    a[r * n + k].add_product(&factor, &src, -1.0);
                }
                if !inv[col * n + k].is_zero() {
                    let src = inv[col * n + k].clone();
                    inv[r * n + k].add_product(&factor, &src, -1.0);
                }
            }
        }
    }
    Ok(inv)
}

/// Evaluate `g` and `g⁻¹` as jets of the given order at `point`.
pub fn metric_frame_at(spec: &MetricSpec, point: &[f64], order: usize) -> Result<MetricFrame, GeometryError> {
    spec.check_point(point, DOMAIN_MARGIN)?;
    let n = spec.n;
    let vars = seed_jets(point, order.max(1))?;
    let vars = if order == 0 {
        vars.iter().map(|v| v.truncate(0)).collect::<Result<Vec<_>, _>>()?
    } else {
        vars
    };
    let env = EvalEnv {
        vars: &vars,
        params: &spec.params,
    };
    let space = vars[0].space().clone();
    let mut g = vec![Jet::zero(&space); n * n];
    for i in 0..n {
        for j in i..n {
            let c = spec.component(i, j);
            if c.is_const(0.0) {
                continue;
            }
            let v = c.evaluate(&env)?;
            g[i * n + j] = v.clone();
            g[j * n + i] = v;
        }
    }
    let values = DMatrix::from_fn(n, n, |i, j| g[i * n + j].value());
    let ratio = eigenvalue_ratio(&values);
    if !(ratio >= DEGENERACY_RATIO) {
        return Err(GeometryError::Degenerate {
            point: point.to_vec(),
            ratio,
        });
    }
    let signature = signature_of(&values);
    if signature != spec.signature {
        return Err(GeometryError::SignatureMismatch {
            declared: spec.signature,
            found: signature,
            point: point.to_vec(),
        });
    }
    let g_inv = invert_jet_matrix(&g, n).map_err(|e| match e {
        GeometryError::Degenerate { .. } => GeometryError::Degenerate {
            point: point.to_vec(),
            ratio,
        },
        other => other,
    })?;
    Ok(MetricFrame {
        point: point.to_vec(),
        n,
        order,
        g,
        g_inv,
        signature,
        det: values.determinant(),
    })
}
