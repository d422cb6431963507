//! Executable checks: kernels of the Weyl tensor, almost Einstein and
//! conformal Killing residuals, dimension estimates for parallel tractors and
//! verifiers for the warped-product families.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::curvature::{curvature_jets, frobenius, CurvatureError, CurvatureJets};
use crate::expr::{EvalEnv, ExprAst, ExprError};
use crate::geometry::{
    general_family, lorentzian_family, pseudo_euclidean, pseudo_euclidean_signs, riemannian_family, warped_product,
    GeometryError, MetricSpec, RiemCase, Signature, SignatureClass, WarpedSpec, DOMAIN_MARGIN,
};
use crate::jets::{seed_jets, Jet, JetError};
use crate::tractor::{
    einstein_tractor, einstein_tractor_derivative, lambda2_algebra, lambda2_group_minus_identity, path_transport,
    rectangle_loop, segment_transport, tractor_curvature_from_jets, wedge, TractorError, TransportConfig,
};

/// Relative pivot threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-7;
/// Almost Einstein scales must have residual below this to count as verified.
pub const AE_TOL: f64 = 1e-7;
/// Conformal Killing and normality residuals for wedge witnesses.
pub const CK_TOL: f64 = 1e-7;
/// `‖W‖` above which the metric counts as conformally non-flat at a point.
pub const NONFLAT_WEYL: f64 = 1e-4;
/// Bounds on `dim ker W` are asserted once `‖W‖` exceeds this.
pub const WEYL_ASSERT: f64 = 1e-6;
/// Scalar curvature of `σ^{-2} g` is only compared where `|σ|` exceeds this.
pub const SIGMA_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Tractor(#[from] TractorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("kernel of an empty matrix")]
    EmptyMatrix,
    #[error("{what} needs n >= {needed}, got {n}")]
    Dimension { what: &'static str, n: usize, needed: usize },
    #[error("dim ker W = {dim} exceeds the {class:?} bound {bound} at {point:?} (|W| = {weyl_norm:e})")]
    BoundViolation {
        dim: usize,
        bound: usize,
        class: SignatureClass,
        point: Vec<f64>,
        weyl_norm: f64,
    },
    #[error("`{sigma}` is not an almost Einstein scale (residual {residual:e} at {point:?})")]
    NotAlmostEinstein { sigma: String, residual: f64, point: Vec<f64> },
    #[error("vector field has {got} components, metric dimension is {expected}")]
    FieldShape { expected: usize, got: usize },
    #[error("invalid theorem parameters: {0}")]
    InvalidParameters(String),
}

// ---------------------------------------------------------------- kernels

/// Orthonormal basis of a null space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subspace {
    pub basis: Vec<Vec<f64>>,
    pub ambient_dim: usize,
    pub tol: f64,
    /// Rank changes when the tolerance is scaled by 10 or 1/10.
    pub marginal: bool,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn full(ambient_dim: usize, tol: f64) -> Subspace {
        let basis = (0..ambient_dim)
            .map(|i| (0..ambient_dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Subspace {
            basis,
            ambient_dim,
            tol,
            marginal: false,
        }
    }
}

/// Gauss-Jordan elimination with complete pivoting. Returns the reduced
/// matrix, the column permutation and the rank.
fn reduce(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, Vec<usize>, usize) {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let threshold = tol * m.amax();
    let mut rank = 0;
    while rank < rows.min(cols) {
        let mut best = (rank, rank, 0.0);
        for i in rank..rows {
            for j in rank..cols {
                let v = a[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if !(best.2 > threshold) || best.2 == 0.0 {
            break;
        }
        a.swap_rows(rank, best.0);
        a.swap_columns(rank, best.1);
        perm.swap(rank, best.1);
        let pivot = a[(rank, rank)];
        for j in rank..cols {
            a[(rank, j)] /= pivot;
        }
        for i in 0..rows {
            if i == rank {
                continue;
            }
            let factor = a[(i, rank)];
            if factor == 0.0 {
                continue;
            }
            for j in rank..cols {
                let v = a[(rank, j)];
                a[(i, j)] -= factor * v;
            }
        }
        rank += 1;
    }
    (a, perm, rank)
}

/// Rank with pivot threshold `tol · max|entry|`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    reduce(m, tol).2
}

fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut v = DVector::from_vec(v);
        for _ in 0..2 {
            for u in &out {
                let c = u.dot(&v);
                v -= u * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-300 {
            out.push(v / norm);
        }
    }
    out.into_iter().map(|v| v.iter().copied().collect()).collect()
}

/// Null space by row reduction; `marginal` is set when the rank at `10·tol`
/// or `tol/10` differs.
pub fn kernel(m: &DMatrix<f64>, tol: f64) -> Result<Subspace, AnalysisError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(AnalysisError::EmptyMatrix);
    }
    let cols = m.ncols();
    let (a, perm, r) = reduce(m, tol);
    let mut raw = Vec::with_capacity(cols - r);
    for f in r..cols {
        let mut x = vec![0.0; cols];
        x[perm[f]] = 1.0;
        for i in 0..r {
            x[perm[i]] = -a[(i, f)];
        }
        raw.push(x);
    }
    let marginal = rank(m, tol * 10.0) != r || rank(m, tol / 10.0) != r;
    Ok(Subspace {
        basis: orthonormalize(raw),
        ambient_dim: cols,
        tol,
        marginal,
    })
}

/// Ranks at `tol/10`, `tol` and `10·tol`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCheck {
    pub what: String,
    pub rank_fine: usize,
    pub rank: usize,
    pub rank_coarse: usize,
    pub tol: f64,
}

impl RankCheck {
    pub fn of(what: &str, m: &DMatrix<f64>, tol: f64) -> RankCheck {
        RankCheck {
            what: what.to_string(),
            rank_fine: rank(m, tol / 10.0),
            rank: rank(m, tol),
            rank_coarse: rank(m, tol * 10.0),
            tol,
        }
    }

    pub fn stable(&self) -> bool {
        self.rank_fine == self.rank && self.rank == self.rank_coarse
    }
}

// ---------------------------------------------------------------- ker W

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylKernel {
    pub subspace: Subspace,
    pub weyl_norm: f64,
    /// Signature bound when it applies (`‖W‖` above the assertion threshold).
    pub bound: Option<usize>,
}

fn weyl_kernel_from(weyl: &[f64], n: usize, point: &[f64], signature: Signature) -> Result<WeylKernel, AnalysisError> {
    let weyl_norm = frobenius(weyl);
    let rows = n * n * n;
    let m = DMatrix::from_fn(rows, n, |row, r| weyl[row * n + r]);
    let subspace = if weyl_norm == 0.0 {
        Subspace::full(n, RANK_TOL)
    } else {
        kernel(&m, RANK_TOL)?
    };
    let class = signature.class();
    let bound = (weyl_norm > WEYL_ASSERT).then(|| class.ker_w_bound(n));
    if let Some(b) = bound {
        if subspace.dim() > b {
            return Err(AnalysisError::BoundViolation {
                dim: subspace.dim(),
                bound: b,
                class,
                point: point.to_vec(),
                weyl_norm,
            });
        }
    }
    Ok(WeylKernel {
        subspace,
        weyl_norm,
        bound,
    })
}

/// `{v : W_abcr v^r = 0}` with the signature bound asserted.
pub fn kernel_of_weyl(spec: &MetricSpec, point: &[f64]) -> Result<WeylKernel, AnalysisError> {
    if spec.n < 4 {
        return Err(AnalysisError::Dimension {
            what: "ker W",
            n: spec.n,
            needed: 4,
        });
    }
    let cj = curvature_jets(spec, point, 2)?;
    let weyl: Vec<f64> = cj.weyl().iter().map(Jet::value).collect();
    weyl_kernel_from(&weyl, spec.n, point, spec.signature)
}

// ---------------------------------------------------------------- scales

fn sigma_jets(spec: &MetricSpec, sigma: &ExprAst, point: &[f64], order: usize) -> Result<Jet, AnalysisError> {
    let vars = seed_jets(point, order)?;
    let env = EvalEnv {
        vars: &vars,
        params: &spec.params,
    };
    Ok(sigma.evaluate(&env)?)
}

fn ae_from_jets(cj: &CurvatureJets, s: &Jet) -> Result<Vec<f64>, AnalysisError> {
    let n = cj.n;
    let grad = s.gradient();
    let mut t = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut v = s.second(a, b);
            for c in 0..n {
                v -= cj.christoffel[c * n * n + a * n + b].value() * grad[c];
            }
            t[a * n + b] = v + cj.schouten[a * n + b].value() * s.value();
        }
    }
    let trace: f64 = (0..n * n).map(|ab| cj.frame.g_inv_value(ab / n, ab % n) * t[ab]).sum();
    for a in 0..n {
        for b in 0..n {
            t[a * n + b] -= trace / n as f64 * cj.frame.g_value(a, b);
        }
    }
    Ok(t)
}

/// Trace-free part of `∇_a∇_b σ + P_ab σ`, row-major.
pub fn ae_tensor(spec: &MetricSpec, sigma: &ExprAst, point: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let cj = curvature_jets(spec, point, 2)?;
    let s = sigma_jets(spec, sigma, point, 2)?;
    ae_from_jets(&cj, &s)
}

pub fn ae_residual(spec: &MetricSpec, sigma: &ExprAst, point: &[f64]) -> Result<f64, AnalysisError> {
    Ok(frobenius(&ae_tensor(spec, sigma, point)?))
}

/// `J^σ = -n/2 ⟨I^σ, I^σ⟩`, the trace of the Schouten tensor of `σ^{-2} g`
/// expressed in the trivialization of `g`.
pub fn j_sigma(spec: &MetricSpec, sigma: &ExprAst, point: &[f64]) -> Result<f64, AnalysisError> {
    let i = einstein_tractor(spec, sigma, point)?;
    let g = spec.metric_values(point)?;
    Ok(-(spec.n as f64) / 2.0 * i.pair(&i, &g))
}

/// `σ^{-2} g` as a metric in its own right.
pub fn einstein_rescale(spec: &MetricSpec, sigma: &ExprAst) -> MetricSpec {
    let factor = ExprAst::pow(sigma.clone(), -2);
    let components = spec
        .components
        .iter()
        .map(|c| if c.is_const(0.0) { c.clone() } else { ExprAst::mul(factor.clone(), c.clone()) })
        .collect();
    let mut domain = spec.domain.clone();
    domain.push(ExprAst::sub(ExprAst::pow(sigma.clone(), 2), ExprAst::Const(SIGMA_MARGIN * SIGMA_MARGIN)));
    MetricSpec {
        label: format!("({sigma})^-2 * {}", spec.label),
        components,
        domain,
        scale_basis: Vec::new(),
        claims: Default::default(),
        ..spec.clone()
    }
}

/// A function offered as an almost Einstein scale, with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleCandidate {
    pub label: String,
    #[serde(serialize_with = "serialize_display")]
    pub sigma: ExprAst,
    pub coefficients: BTreeMap<String, f64>,
}

fn serialize_display<S: serde::Serializer>(e: &ExprAst, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

/// Known scales of the metric followed by generic probes `1`, `x_i`, `Σ ±x_i²`.
pub fn candidate_scales(spec: &MetricSpec) -> Vec<ScaleCandidate> {
    let mut out: Vec<ScaleCandidate> = spec
        .scale_basis
        .iter()
        .map(|(label, sigma)| ScaleCandidate {
            label: label.clone(),
            sigma: sigma.clone(),
            coefficients: BTreeMap::new(),
        })
        .collect();
    let mut probes = vec![("1".to_string(), ExprAst::Const(1.0))];
    for i in 0..spec.n {
        probes.push((format!("x{}", i + 1), ExprAst::Var(i)));
    }
    let signs = pseudo_euclidean_signs(spec).unwrap_or_else(|| vec![false; spec.n]);
    let mut square = ExprAst::Const(0.0);
    for (i, negative) in signs.iter().enumerate() {
        let sq = ExprAst::pow(ExprAst::Var(i), 2);
        square = if *negative { ExprAst::sub(square, sq) } else { ExprAst::add(square, sq) };
    }
    probes.push(("sum of squares".to_string(), square));
    for (label, sigma) in probes {
        let text = sigma.to_string();
        if out.iter().all(|c| c.sigma.to_string() != text) {
            out.push(ScaleCandidate {
                label,
                sigma,
                coefficients: BTreeMap::new(),
            });
        }
    }
    out
}

// ---------------------------------------------------------------- vector fields

/// A vector field by its components `k^a`, or by its metric dual `k_a`.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    Vector(Vec<ExprAst>),
    Covector(Vec<ExprAst>),
}

impl VectorField {
    fn len(&self) -> usize {
        match self {
            VectorField::Vector(v) | VectorField::Covector(v) => v.len(),
        }
    }

    pub fn describe(&self) -> String {
        let (kind, parts) = match self {
            VectorField::Vector(v) => ("k^a", v),
            VectorField::Covector(v) => ("k_a", v),
        };
        let items: Vec<String> = parts.iter().map(|e| e.to_string()).collect();
        format!("{kind} = ({})", items.join(", "))
    }
}

/// `(k^a, k_a)` as jets of order 1.
fn field_jets(spec: &MetricSpec, field: &VectorField, cj: &CurvatureJets) -> Result<(Vec<Jet>, Vec<Jet>), AnalysisError> {
    let n = spec.n;
    if field.len() != n {
        return Err(AnalysisError::FieldShape {
            expected: n,
            got: field.len(),
        });
    }
    let vars = seed_jets(&cj.frame.point, 1)?;
    let env = EvalEnv {
        vars: &vars,
        params: &spec.params,
    };
    let tr = |j: &Jet| j.truncate(1).expect("truncate");
    let (given, metric): (&Vec<ExprAst>, Vec<Jet>) = match field {
        VectorField::Vector(v) => (v, cj.frame.g.iter().map(tr).collect()),
        VectorField::Covector(v) => (v, cj.frame.g_inv.iter().map(tr).collect()),
    };
    let given: Vec<Jet> = given.iter().map(|e| e.evaluate(&env)).collect::<Result<_, _>>()?;
    let mut other = Vec::with_capacity(n);
    for a in 0..n {
        let mut acc = Jet::zero(given[0].space());
        for b in 0..n {
            if !metric[a * n + b].is_zero() {
                acc.add_product(&metric[a * n + b], &given[b], 1.0);
            }
        }
        other.push(acc);
    }
    Ok(match field {
        VectorField::Vector(_) => (given, other),
        VectorField::Covector(_) => (other, given),
    })
}

/// Residuals of a candidate normal conformal Killing field at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CkReport {
    /// `‖∇_(a k_b) - (1/n) ∇^r k_r g_ab‖`.
    pub ck_res: f64,
    /// `‖W_abcr k^r‖` for n >= 4, `‖Y_car k^r‖` for n = 3.
    pub normal_res: f64,
    /// `‖Y_rab k^r‖` for n = 3.
    pub normal_alt: Option<f64>,
    /// `‖∇_a k_b‖`.
    pub parallel_res: f64,
    /// `|g(k, k)|`.
    pub null_res: f64,
    /// `‖k^a‖` (raw components).
    pub magnitude: f64,
}

pub fn ck_and_normality(spec: &MetricSpec, field: &VectorField, point: &[f64]) -> Result<CkReport, AnalysisError> {
    let n = spec.n;
    let order = if n == 3 { 3 } else { 2 };
    let cj = curvature_jets(spec, point, order)?;
    let (up, down) = field_jets(spec, field, &cj)?;
    let up_v: Vec<f64> = up.iter().map(Jet::value).collect();
    let down_v: Vec<f64> = down.iter().map(Jet::value).collect();
    let mut nabla = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut v = down[b].first(a);
            for c in 0..n {
                v -= cj.christoffel[c * n * n + a * n + b].value() * down_v[c];
            }
            nabla[a * n + b] = v;
        }
    }
    let div: f64 = (0..n * n).map(|ab| cj.frame.g_inv_value(ab / n, ab % n) * nabla[ab]).sum();
    let mut ck = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            ck[a * n + b] = 0.5 * (nabla[a * n + b] + nabla[b * n + a]) - div / n as f64 * cj.frame.g_value(a, b);
        }
    }
    let (normal_res, normal_alt) = if n >= 4 {
        let w = cj.weyl();
        let mut out = vec![0.0; n * n * n];
        for (abc, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|r| w[abc * n + r].value() * up_v[r]).sum();
        }
        (frobenius(&out), None)
    } else {
        let y = cj.cotton()?;
        let mut last = vec![0.0; n * n];
        let mut first = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                last[a * n + b] = (0..n).map(|r| y[(a * n + b) * n + r].value() * up_v[r]).sum();
                first[a * n + b] = (0..n).map(|r| y[(r * n + a) * n + b].value() * up_v[r]).sum();
            }
        }
        (frobenius(&last), Some(frobenius(&first)))
    };
    let null: f64 = (0..n).map(|a| up_v[a] * down_v[a]).sum();
    Ok(CkReport {
        ck_res: frobenius(&ck),
        normal_res,
        normal_alt,
        parallel_res: frobenius(&nabla),
        null_res: null.abs(),
        magnitude: frobenius(&up_v),
    })
}

/// `k_a = σ ∇_a σ̄ - σ̄ ∇_a σ` for two verified almost Einstein scales.
pub fn wedge_nckf(spec: &MetricSpec, sigma: &ExprAst, sigma_bar: &ExprAst) -> Result<VectorField, AnalysisError> {
    let mut points = vec![spec.default_point.clone()];
    points.extend(spec.sample_points(4, 0)?);
    for s in [sigma, sigma_bar] {
        for p in &points {
            let residual = ae_residual(spec, s, p)?;
            if !(residual < AE_TOL) {
                return Err(AnalysisError::NotAlmostEinstein {
                    sigma: s.to_string(),
                    residual,
                    point: p.clone(),
                });
            }
        }
    }
    Ok(wedge_covector(sigma, sigma_bar, spec.n))
}

/// The wedge covector without verification.
pub fn wedge_covector(sigma: &ExprAst, sigma_bar: &ExprAst, n: usize) -> VectorField {
    VectorField::Covector(
        (0..n)
            .map(|a| {
                ExprAst::sub(
                    ExprAst::mul(sigma.clone(), sigma_bar.diff(a)),
                    ExprAst::mul(sigma_bar.clone(), sigma.diff(a)),
                )
                .fold_constants()
            })
            .collect(),
    )
}

/// Values of `[k1, k2]^a = k1^b ∂_b k2^a - k2^b ∂_b k1^a`.
pub fn lie_bracket(spec: &MetricSpec, k1: &VectorField, k2: &VectorField, point: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let cj = curvature_jets(spec, point, 2)?;
    let (u, _) = field_jets(spec, k1, &cj)?;
    let (v, _) = field_jets(spec, k2, &cj)?;
    let n = spec.n;
    Ok((0..n)
        .map(|a| (0..n).map(|b| u[b].value() * v[a].first(b) - v[b].value() * u[a].first(b)).sum())
        .collect())
}

pub fn field_values(spec: &MetricSpec, field: &VectorField, point: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let cj = curvature_jets(spec, point, 2)?;
    let (up, _) = field_jets(spec, field, &cj)?;
    Ok(up.iter().map(Jet::value).collect())
}

/// Largest relative least-squares residual of a pairwise bracket against the
/// constant-coefficient span of `fields`, sampled jointly at `points`.
pub fn bracket_closure(spec: &MetricSpec, fields: &[VectorField], points: &[Vec<f64>]) -> Result<f64, AnalysisError> {
    let n = spec.n;
    let m = fields.len();
    if m < 2 {
        return Ok(0.0);
    }
    let rows = n * points.len();
    let mut basis = DMatrix::zeros(rows, m);
    for (p, point) in points.iter().enumerate() {
        for (j, f) in fields.iter().enumerate() {
            for (a, v) in field_values(spec, f, point)?.into_iter().enumerate() {
                basis[(p * n + a, j)] = v;
            }
        }
    }
    let svd = basis.clone().svd(true, true);
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let mut target = DVector::zeros(rows);
            for (p, point) in points.iter().enumerate() {
                for (a, v) in lie_bracket(spec, &fields[i], &fields[j], point)?.into_iter().enumerate() {
                    target[p * n + a] = v;
                }
            }
            let norm = target.norm();
            if norm < 1e-12 {
                continue;
            }
            let coeffs = svd.solve(&target, 1e-10 * svd.singular_values.max()).map_err(|e| {
                AnalysisError::InvalidParameters(format!("least squares failed: {e}"))
            })?;
            let residual = (&basis * coeffs - &target).norm() / norm;
            worst = worst.max(residual);
        }
    }
    Ok(worst)
}

/// Rank of the Gram matrix of normalized `(value, gradient)` samples.
pub fn gram_rank(spec: &MetricSpec, family: &[ExprAst], points: &[Vec<f64>]) -> Result<usize, AnalysisError> {
    let n = spec.n;
    let width = points.len() * (n + 1);
    let mut features = DMatrix::zeros(family.len(), width);
    for (i, sigma) in family.iter().enumerate() {
        for (p, point) in points.iter().enumerate() {
            let s = sigma_jets(spec, sigma, point, 1)?;
            features[(i, p * (n + 1))] = s.value();
            for (a, g) in s.gradient().into_iter().enumerate() {
                features[(i, p * (n + 1) + 1 + a)] = g;
            }
        }
        let norm = features.row(i).norm();
        if norm > 0.0 {
            features.row_mut(i).scale_mut(1.0 / norm);
        }
    }
    let gram = &features * features.transpose();
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.amax();
    Ok(eig.eigenvalues.iter().filter(|&&v| v > RANK_TOL * RANK_TOL * max.max(1e-300) && v > 0.0).count())
}

// ---------------------------------------------------------------- dimension estimates

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimConfig {
    pub num_points: usize,
    pub num_loops: usize,
    pub seed: u64,
    pub tol: f64,
    /// Displacement box half-width for transported points and loop anchors.
    pub radius: f64,
    pub loop_side: f64,
    /// Sample points used to verify lower-bound witnesses.
    pub verify_points: usize,
    pub transport: TransportConfig,
}

impl Default for DimConfig {
    fn default() -> Self {
        DimConfig {
            num_points: 8,
            num_loops: 12,
            seed: 0,
            tol: RANK_TOL,
            radius: 0.3,
            loop_side: 0.2,
            verify_points: 10,
            transport: TransportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleWitness {
    pub label: String,
    pub sigma: String,
    pub max_residual: f64,
    pub parallel_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NckWitness {
    pub pair: (String, String),
    pub max_ck_residual: f64,
    pub max_normal_residual: f64,
    pub max_null_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub class: SignatureClass,
    pub weyl_norm: f64,
    pub kerw_dim: usize,
    pub kerw_bound: usize,
    pub d_ae_bound: usize,
    pub d_nck_bound: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimReport {
    pub label: String,
    pub n: usize,
    pub signature: Signature,
    pub basepoint: Vec<f64>,
    pub seed: u64,
    pub tol: f64,
    pub d_ae_lower: usize,
    pub d_ae_upper: usize,
    pub d_nck_lower: usize,
    pub d_nck_upper: usize,
    pub exact_ae: bool,
    pub exact_nck: bool,
    pub marginal: bool,
    pub rank_checks: Vec<RankCheck>,
    pub curvature_blocks: usize,
    pub transported_points: Vec<Vec<f64>>,
    pub loops: usize,
    pub scale_witnesses: Vec<ScaleWitness>,
    pub nck_witnesses: Vec<NckWitness>,
    pub bounds: Option<BoundCheck>,
    pub discrepancies: Vec<String>,
}

impl DimReport {
    pub fn lower_le_upper(&self) -> bool {
        self.d_ae_lower <= self.d_ae_upper && self.d_nck_lower <= self.d_nck_upper
    }
}

fn stack_blocks(blocks: &[DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let floor: f64 = 1e-8;
    let max = blocks.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let kept: Vec<DMatrix<f64>> = blocks
        .iter()
        .filter(|b| b.norm() > floor.max(1e-6 * max))
        .map(|b| b / b.norm())
        .collect();
    let rows: usize = kept.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in kept {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(&b);
        r += b.nrows();
    }
    out
}

fn kernel_dim(stack: &DMatrix<f64>, cols: usize, tol: f64, what: &str, checks: &mut Vec<RankCheck>) -> usize {
    let check = RankCheck::of(what, stack, tol);
    let dim = cols - check.rank;
    checks.push(check);
    dim
}

fn random_offset(rng: &mut ChaCha8Rng, x0: &[f64], radius: f64) -> Vec<f64> {
    x0.iter().map(|x| x + rng.random_range(-radius..radius)).collect()
}

/// Upper and lower bounds for the dimensions of almost Einstein scales and
/// normal conformal Killing fields near `basepoint`.
pub fn estimate_parallel_dims(spec: &MetricSpec, basepoint: &[f64], cfg: &DimConfig) -> Result<DimReport, AnalysisError> {
    let n = spec.n;
    let big = n + 2;
    let l2 = big * (big - 1) / 2;
    spec.check_point(basepoint, DOMAIN_MARGIN)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // upper bounds
    let cj = curvature_jets(spec, basepoint, 3)?;
    let mut endo_blocks: Vec<DMatrix<f64>> = tractor_curvature_from_jets(&cj)?.into_iter().map(|e| e.matrix).collect();
    let mut group_blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut transported = Vec::new();
    let mut attempts = 0;
    while transported.len() < cfg.num_points && attempts < 20 * cfg.num_points.max(1) {
        attempts += 1;
        let y = random_offset(&mut rng, basepoint, cfg.radius);
        if spec.check_point(&y, DOMAIN_MARGIN).is_err() {
            continue;
        }
        let Ok(p) = segment_transport(spec, basepoint, &y, &cfg.transport) else {
            continue;
        };
        let Some(p_inv) = p.clone().try_inverse() else {
            continue;
        };
        let cjy = curvature_jets(spec, &y, 3)?;
        for omega in tractor_curvature_from_jets(&cjy)? {
            endo_blocks.push(&p_inv * omega.matrix * &p);
        }
        transported.push(y);
    }
    let mut loops = 0;
    attempts = 0;
    while loops < cfg.num_loops && attempts < 20 * cfg.num_loops.max(1) {
        attempts += 1;
        let anchor = if loops == 0 { basepoint.to_vec() } else { random_offset(&mut rng, basepoint, cfg.radius) };
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let side = if rng.random_bool(0.5) { cfg.loop_side } else { -cfg.loop_side };
        let rect = rectangle_loop(&anchor, a.min(b), a.max(b), side);
        if rect.iter().any(|p| spec.check_point(p, DOMAIN_MARGIN).is_err()) {
            continue;
        }
        let Ok(hol) = path_transport(spec, &rect, &cfg.transport) else {
            continue;
        };
        let (p, p_inv) = if anchor == basepoint {
            (DMatrix::identity(big, big), DMatrix::identity(big, big))
        } else {
            let Ok(p) = segment_transport(spec, basepoint, &anchor, &cfg.transport) else {
                continue;
            };
            let Some(p_inv) = p.clone().try_inverse() else {
                continue;
            };
            (p, p_inv)
        };
        group_blocks.push(p_inv * hol * p);
        loops += 1;
    }
    let mut standard: Vec<DMatrix<f64>> = endo_blocks.clone();
    standard.extend(group_blocks.iter().map(|h| h - DMatrix::identity(big, big)));
    let mut adjoint: Vec<DMatrix<f64>> = endo_blocks.iter().map(lambda2_algebra).collect();
    adjoint.extend(group_blocks.iter().map(lambda2_group_minus_identity));
    let standard_stack = stack_blocks(&standard, big);
    let adjoint_stack = stack_blocks(&adjoint, l2);
    let mut rank_checks = Vec::new();
    let d_ae_upper = kernel_dim(&standard_stack, big, cfg.tol, "standard tractor constraints", &mut rank_checks);
    let d_nck_upper = kernel_dim(&adjoint_stack, l2, cfg.tol, "adjoint tractor constraints", &mut rank_checks);

    // lower bounds
    let mut verify_at = vec![basepoint.to_vec()];
    verify_at.extend(spec.sample_points(cfg.verify_points, cfg.seed)?);
    let mut scale_witnesses = Vec::new();
    let mut witness_scales: Vec<(String, ExprAst, DVector<f64>)> = Vec::new();
    for cand in candidate_scales(spec) {
        let mut max_residual: f64 = 0.0;
        for p in &verify_at {
            max_residual = max_residual.max(ae_residual(spec, &cand.sigma, p)?);
            if !(max_residual < AE_TOL) {
                break;
            }
        }
        if !(max_residual < AE_TOL) {
            continue;
        }
        let parallel_residual = einstein_tractor_derivative(spec, &cand.sigma, basepoint)?
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        if !(parallel_residual < AE_TOL) {
            continue;
        }
        let i = einstein_tractor(spec, &cand.sigma, basepoint)?.to_column();
        let mut trial: Vec<DVector<f64>> = witness_scales.iter().map(|w| w.2.clone()).collect();
        trial.push(i.normalize());
        if rank_of_columns(&trial, cfg.tol) == trial.len() {
            scale_witnesses.push(ScaleWitness {
                label: cand.label.clone(),
                sigma: cand.sigma.to_string(),
                max_residual,
                parallel_residual,
            });
            witness_scales.push((cand.label, cand.sigma, i.normalize()));
        }
    }
    let ae_vectors: Vec<DVector<f64>> = witness_scales.iter().map(|w| w.2.clone()).collect();
    rank_checks.push(RankCheck::of("scale witnesses", &columns(&ae_vectors, big), cfg.tol));
    let d_ae_lower = witness_scales.len();

    let mut nck_witnesses = Vec::new();
    let mut wedges: Vec<DVector<f64>> = Vec::new();
    let check_points: Vec<Vec<f64>> = verify_at.iter().take(4).cloned().collect();
    for i in 0..witness_scales.len() {
        for j in (i + 1)..witness_scales.len() {
            let field = wedge_covector(&witness_scales[i].1, &witness_scales[j].1, n);
            let (mut ck, mut normal, mut null): (f64, f64, f64) = (0.0, 0.0, 0.0);
            for p in &check_points {
                let r = ck_and_normality(spec, &field, p)?;
                let scale = r.magnitude.max(1.0);
                ck = ck.max(r.ck_res / scale);
                normal = normal.max(r.normal_res / scale);
                null = null.max(r.null_res / (scale * scale));
            }
            if !(ck < CK_TOL && normal < CK_TOL) {
                continue;
            }
            let w = wedge(&witness_scales[i].2, &witness_scales[j].2);
            let w_norm = w.norm();
            if w_norm == 0.0 {
                continue;
            }
            let mut trial = wedges.clone();
            trial.push(w / w_norm);
            if rank_of_columns(&trial, cfg.tol) == trial.len() {
                wedges = trial;
                nck_witnesses.push(NckWitness {
                    pair: (witness_scales[i].0.clone(), witness_scales[j].0.clone()),
                    max_ck_residual: ck,
                    max_normal_residual: normal,
                    max_null_residual: null,
                });
            }
        }
    }
    rank_checks.push(RankCheck::of("wedge witnesses", &columns(&wedges, l2), cfg.tol));
    let d_nck_lower = wedges.len();

    let bounds = if n >= 4 {
        let weyl: Vec<f64> = cj.weyl().iter().map(Jet::value).collect();
        let wk = weyl_kernel_from(&weyl, n, basepoint, spec.signature)?;
        (wk.weyl_norm > NONFLAT_WEYL).then(|| {
            let class = spec.signature.class();
            let d_ae_bound = class.d_ae_bound(n);
            let d_nck_bound = class.d_nck_bound(n);
            let kerw_bound = class.ker_w_bound(n);
            BoundCheck {
                class,
                weyl_norm: wk.weyl_norm,
                kerw_dim: wk.subspace.dim(),
                kerw_bound,
                d_ae_bound,
                d_nck_bound,
                ok: d_ae_upper <= d_ae_bound && d_nck_upper <= d_nck_bound && wk.subspace.dim() <= kerw_bound,
            }
        })
    } else {
        None
    };

    let exact_ae = d_ae_lower == d_ae_upper;
    let exact_nck = d_nck_lower == d_nck_upper;
    let mut discrepancies = Vec::new();
    if let Some(stated) = spec.claims.d_ae {
        if exact_ae && stated != d_ae_upper {
            discrepancies.push(format!("stated d_aE = {stated}, computed {d_ae_upper}"));
        }
    }
    if let Some(stated) = spec.claims.d_nck {
        if exact_nck && stated != d_nck_upper {
            discrepancies.push(format!("stated d_ncK = {stated}, computed {d_nck_upper}"));
        }
    }
    if d_nck_lower < d_ae_lower * d_ae_lower.saturating_sub(1) / 2 {
        discrepancies.push(format!(
            "only {d_nck_lower} independent wedges from {d_ae_lower} independent scales"
        ));
    }
    let marginal = rank_checks.iter().any(|c| !c.stable());
    Ok(DimReport {
        label: spec.label.clone(),
        n,
        signature: spec.signature,
        basepoint: basepoint.to_vec(),
        seed: cfg.seed,
        tol: cfg.tol,
        d_ae_lower,
        d_ae_upper,
        d_nck_lower,
        d_nck_upper,
        exact_ae,
        exact_nck,
        marginal,
        rank_checks,
        curvature_blocks: standard_stack.nrows() / big,
        transported_points: transported,
        loops,
        scale_witnesses,
        nck_witnesses,
        bounds,
        discrepancies,
    })
}

fn columns(vs: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    if vs.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    DMatrix::from_columns(vs)
}

fn rank_of_columns(vs: &[DVector<f64>], tol: f64) -> usize {
    if vs.is_empty() {
        return 0;
    }
    rank(&DMatrix::from_columns(vs).transpose(), tol)
}

// ---------------------------------------------------------------- theorem verifiers

#[derive(Debug, Clone, PartialEq)]
pub enum TheoremId {
    /// General warped solution with explicit constants; `base_negative` minus signs in the base.
    WarpedSol {
        n: usize,
        base_negative: usize,
        a: f64,
        b: f64,
        big_a: f64,
        big_b: f64,
        c: Vec<f64>,
    },
    TRiem { case: RiemCase, n: usize },
    TLorentz { n: usize },
    TGen { n: usize, p: usize },
    RFlat(Box<MetricSpec>),
    Bounds(Box<MetricSpec>),
}

impl TheoremId {
    pub fn name(&self) -> String {
        match self {
            TheoremId::WarpedSol { n, .. } => format!("warped_sol(n = {n})"),
            TheoremId::TRiem { case, n } => format!("t_riem(case {}, n = {n})", format!("{case:?}").to_lowercase()),
            TheoremId::TLorentz { n } => format!("t_lorentz(n = {n})"),
            TheoremId::TGen { n, p } => format!("t_gen(n = {n}, p = {p})"),
            TheoremId::RFlat(spec) => format!("rflat({})", spec.label),
            TheoremId::Bounds(spec) => format!("bounds({})", spec.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub witness: Option<String>,
}

impl Check {
    /// Passes when `value < tolerance`.
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64, witness: Option<String>) -> Check {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
            witness,
        }
    }

    /// Passes when `value > tolerance`.
    pub fn above(name: impl Into<String>, value: f64, tolerance: f64, witness: Option<String>) -> Check {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value > tolerance,
            witness,
        }
    }

    pub fn equal(name: impl Into<String>, value: usize, expected: usize) -> Check {
        Check {
            name: name.into(),
            value: value as f64,
            tolerance: expected as f64,
            passed: value == expected,
            witness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub metric: String,
    pub n: usize,
    pub signature: Signature,
    pub family_dim: Option<usize>,
    pub claimed_dim: Option<usize>,
    pub dims: Option<DimReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn finish(theorem: String, spec: &MetricSpec, family_dim: Option<usize>, claimed_dim: Option<usize>, dims: Option<DimReport>, checks: Vec<Check>) -> TheoremReport {
    let passed = checks.iter().all(|c| c.passed);
    TheoremReport {
        theorem,
        metric: spec.label.clone(),
        n: spec.n,
        signature: spec.signature,
        family_dim,
        claimed_dim,
        dims,
        checks,
        passed,
    }
}

/// `Σ ±c_i²` with the base signs.
fn signed_square(c: &[f64], signs: &[bool]) -> f64 {
    c.iter().zip(signs).map(|(v, neg)| if *neg { -v * v } else { v * v }).sum()
}

fn linear_combination(terms: &[(f64, ExprAst)]) -> ExprAst {
    let mut acc = ExprAst::Const(0.0);
    for (c, e) in terms {
        acc = ExprAst::add(acc, ExprAst::mul(ExprAst::Const(*c), e.clone()));
    }
    acc.fold_constants()
}

/// Sample points of `spec` where `|σ|` is large enough for the rescaled metric.
fn sigma_points(spec: &MetricSpec, sigma: &ExprAst, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let pool = spec.sample_points(count * 4, seed)?;
    let mut out = Vec::new();
    for p in pool {
        if sigma.eval_f64(&p, &spec.params)?.abs() > 2.0 * SIGMA_MARGIN {
            out.push(p);
            if out.len() == count {
                break;
            }
        }
    }
    Ok(out)
}

/// Checks shared by the warped families: every member an almost Einstein
/// scale, Gram rank, scalar curvature law, non-flatness and bounds.
struct FamilyCheck<'a> {
    spec: &'a MetricSpec,
    basis: Vec<ExprAst>,
    claimed: usize,
    /// Expected `Sc^σ` for coefficients of `basis`.
    sc_law: &'a dyn Fn(&[f64]) -> f64,
    /// Named closed forms of `Sc^σ` checked with the leading coefficient fixed to 1.
    case_law: Option<(&'a str, &'a dyn Fn(&[f64]) -> f64)>,
    seed: u64,
}

fn family_checks(fc: &FamilyCheck<'_>, checks: &mut Vec<Check>) -> Result<usize, AnalysisError> {
    let spec = fc.spec;
    let n = spec.n;
    let points = spec.sample_points(10, fc.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(fc.seed ^ 0x5eed);
    let k = fc.basis.len();
    let mut members: Vec<(String, ExprAst, Vec<f64>)> = Vec::new();
    for (i, e) in fc.basis.iter().enumerate() {
        let mut coeffs = vec![0.0; k];
        coeffs[i] = 1.0;
        members.push((e.to_string(), e.clone(), coeffs));
    }
    for _ in 0..3 {
        let coeffs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let terms: Vec<(f64, ExprAst)> = coeffs.iter().copied().zip(fc.basis.iter().cloned()).collect();
        let sigma = linear_combination(&terms);
        members.push((sigma.to_string(), sigma, coeffs));
    }
    let mut worst: (f64, Option<String>) = (0.0, None);
    for (label, sigma, _) in &members {
        for p in &points {
            let r = ae_residual(spec, sigma, p)?;
            if r > worst.0 || !(r == r) {
                worst = (r, Some(format!("σ = {label} at {p:?}")));
            }
        }
    }
    checks.push(Check::below("ae residual (family members, 10 points)", worst.0, AE_TOL, worst.1));
    let family_dim = gram_rank(spec, &fc.basis, &points)?;
    checks.push(Check::equal("family dimension (Gram rank)", family_dim, fc.claimed));

    let mut jsi_worst: (f64, Option<String>) = (0.0, None);
    let mut ad_worst: (f64, Option<String>) = (0.0, None);
    for (_, sigma, coeffs) in members.iter().skip(k) {
        let expected = (fc.sc_law)(coeffs);
        let rescaled = einstein_rescale(spec, sigma);
        for p in sigma_points(spec, sigma, 4, fc.seed)? {
            let sc_jsi = 2.0 * (n as f64 - 1.0) * j_sigma(spec, sigma, &p)?;
            let rel = (sc_jsi - expected).abs() / expected.abs().max(1.0);
            if rel > jsi_worst.0 {
                jsi_worst = (rel, Some(format!("σ = {sigma} at {p:?}: {sc_jsi} vs {expected}")));
            }
            let sc_ad = curvature_jets(&rescaled, &p, 2)?.scalar.value();
            let rel = (sc_ad - expected).abs() / expected.abs().max(1.0);
            if rel > ad_worst.0 {
                ad_worst = (rel, Some(format!("σ = {sigma} at {p:?}: {sc_ad} vs {expected}")));
            }
        }
    }
    checks.push(Check::below("Sc^σ law via ⟨I,I⟩ (relative)", jsi_worst.0, 1e-7, jsi_worst.1));
    checks.push(Check::below("Sc^σ law via rescaled metric (relative)", ad_worst.0, 1e-7, ad_worst.1));

    if let Some((name, law)) = fc.case_law {
        let mut worst: (f64, Option<String>) = (0.0, None);
        for _ in 0..3 {
            let mut coeffs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            coeffs[0] = 1.0;
            let terms: Vec<(f64, ExprAst)> = coeffs.iter().copied().zip(fc.basis.iter().cloned()).collect();
            let sigma = linear_combination(&terms);
            let expected = law(&coeffs);
            for p in sigma_points(spec, &sigma, 3, fc.seed + 1)? {
                let sc = 2.0 * (n as f64 - 1.0) * j_sigma(spec, &sigma, &p)?;
                let rel = (sc - expected).abs() / expected.abs().max(1.0);
                if rel > worst.0 {
                    worst = (rel, Some(format!("σ = {sigma} at {p:?}: {sc} vs {expected}")));
                }
            }
        }
        checks.push(Check::below(format!("Sc^σ = {name} (relative)"), worst.0, 1e-7, worst.1));
    }

    let mut min_weyl = f64::INFINITY;
    let mut at = None;
    for p in &points {
        let wk = kernel_of_weyl(spec, p)?;
        if wk.weyl_norm < min_weyl {
            min_weyl = wk.weyl_norm;
            at = Some(format!("{p:?}"));
        }
    }
    checks.push(Check::above("conformal non-flatness min ‖W‖", min_weyl, NONFLAT_WEYL, at));
    let class = spec.signature.class();
    let bound = class.d_ae_bound(n);
    checks.push(Check::equal(format!("family dimension equals the {class:?} bound"), family_dim, bound));
    Ok(family_dim)
}

/// Ricci-flat pp-type properties: `Δτ = 0`, `g(dτ,dτ) = 0`, `J^σ = 0`.
fn rflat_checks(spec: &MetricSpec, taus: &[(String, ExprAst)], checks: &mut Vec<Check>, seed: u64) -> Result<(), AnalysisError> {
    let points = spec.sample_points(10, seed)?;
    let mut lap: (f64, Option<String>) = (0.0, None);
    let mut null: (f64, Option<String>) = (0.0, None);
    let mut jsig: (f64, Option<String>) = (0.0, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (label, tau) in taus {
        for p in &points {
            let i = einstein_tractor(spec, tau, p)?;
            // ρ = -(Δτ + Jτ)/n with J = 0 on Ricci-flat metrics
            let cj = curvature_jets(spec, p, 2)?;
            let laplacian = -(spec.n as f64) * i.rho - cj.j.value() * i.sigma;
            if laplacian.abs() > lap.0 {
                lap = (laplacian.abs(), Some(format!("τ = {label} at {p:?}")));
            }
            let g = spec.metric_values(p)?;
            let grad_sq: f64 = (0..spec.n)
                .map(|a| (0..spec.n).map(|b| g[(a, b)] * i.mu[a] * i.mu[b]).sum::<f64>())
                .sum();
            if grad_sq.abs() > null.0 {
                null = (grad_sq.abs(), Some(format!("τ = {label} at {p:?}")));
            }
        }
    }
    let mut family: Vec<ExprAst> = vec![ExprAst::Const(1.0)];
    family.extend(taus.iter().map(|t| t.1.clone()));
    for _ in 0..3 {
        let terms: Vec<(f64, ExprAst)> = family.iter().map(|e| (rng.random_range(-1.0..1.0), e.clone())).collect();
        let sigma = linear_combination(&terms);
        for p in &points {
            let j = j_sigma(spec, &sigma, p)?;
            if j.abs() > jsig.0 {
                jsig = (j.abs(), Some(format!("σ = {sigma} at {p:?}")));
            }
        }
    }
    checks.push(Check::below("Δτ = 0", lap.0, 1e-8, lap.1));
    checks.push(Check::below("g(dτ, dτ) = 0", null.0, 1e-8, null.1));
    checks.push(Check::below("J^σ = 0", jsig.0, 1e-8, jsig.1));
    Ok(())
}

pub fn verify_theorem(id: &TheoremId, seed: u64) -> Result<TheoremReport, AnalysisError> {
    let name = id.name();
    let mut checks = Vec::new();
    match id {
        TheoremId::WarpedSol {
            n,
            base_negative,
            a,
            b,
            big_a,
            big_b,
            c,
        } => {
            let (n, a, b, big_a, big_b) = (*n, *a, *b, *big_a, *big_b);
            if !(5..=8).contains(&n) || c.len() != n - 4 || *base_negative > n - 4 {
                return Err(AnalysisError::InvalidParameters(format!(
                    "need 5 <= n <= 8, {} linear coefficients and at most n - 4 negative base directions",
                    n.saturating_sub(4)
                )));
            }
            if (a * big_b + b * big_a).abs() > 1e-12 {
                return Err(AnalysisError::InvalidParameters(format!("aB = -bA fails: a = {a}, b = {b}, A = {big_a}, B = {big_b}")));
            }
            let fiber_sc = -48.0 * a * b;
            let case = RiemCase::from_scalar(fiber_sc)
                .map_err(|_| AnalysisError::InvalidParameters(format!("no catalogue fiber with scalar curvature {fiber_sc}")))?;
            let ws = WarpedSpec {
                base: pseudo_euclidean(*base_negative, n - 4 - base_negative)?,
                fiber: case.fiber(),
                a,
                b,
                negative_branch: a < 0.0,
            };
            let spec = warped_product(&ws)?;
            let signs = pseudo_euclidean_signs(&ws.base).unwrap_or_default();
            let mut quad = ExprAst::Const(0.0);
            for (i, neg) in signs.iter().enumerate() {
                let sq = ExprAst::pow(ExprAst::Var(i), 2);
                quad = if *neg { ExprAst::sub(quad, sq) } else { ExprAst::add(quad, sq) };
            }
            let mut terms = vec![(big_a, ExprAst::Const(1.0)), (big_b, quad)];
            for (i, ci) in c.iter().enumerate() {
                terms.push((*ci, ExprAst::Var(i)));
            }
            let sigma = linear_combination(&terms);
            let points = spec.sample_points(10, seed)?;
            let mut worst: (f64, Option<String>) = (0.0, None);
            for p in &points {
                let r = ae_residual(&spec, &sigma, p)?;
                if r >= worst.0 {
                    worst = (r, Some(format!("{p:?}")));
                }
            }
            checks.push(Check::below("ae residual (10 points)", worst.0, AE_TOL, worst.1));
            let expected = n as f64 * (n as f64 - 1.0) * (4.0 * big_a * big_b - signed_square(c, &signs));
            let rescaled = einstein_rescale(&spec, &sigma);
            let mut jsi: (f64, Option<String>) = (0.0, None);
            let mut ad: (f64, Option<String>) = (0.0, None);
            for p in sigma_points(&spec, &sigma, 5, seed)? {
                let sc = 2.0 * (n as f64 - 1.0) * j_sigma(&spec, &sigma, &p)?;
                let rel = (sc - expected).abs() / expected.abs().max(1.0);
                if rel >= jsi.0 {
                    jsi = (rel, Some(format!("{p:?}: {sc} vs {expected}")));
                }
                let sc = curvature_jets(&rescaled, &p, 2)?.scalar.value();
                let rel = (sc - expected).abs() / expected.abs().max(1.0);
                if rel >= ad.0 {
                    ad = (rel, Some(format!("{p:?}: {sc} vs {expected}")));
                }
            }
            checks.push(Check::below("Sc^σ = n(n-1)(4AB - |c|²) via ⟨I,I⟩ (relative)", jsi.0, 1e-7, jsi.1));
            checks.push(Check::below("Sc^σ = n(n-1)(4AB - |c|²) via rescaled metric (relative)", ad.0, 1e-7, ad.1));
            Ok(finish(name, &spec, None, None, None, checks))
        }
        TheoremId::TRiem { case, n } => {
            let spec = riemannian_family(*case, *n)?;
            let nb = n - 4;
            let basis: Vec<ExprAst> = spec.scale_basis.iter().map(|s| s.1.clone()).collect();
            let nn = (*n as f64) * (*n as f64 - 1.0);
            let (qa, qb) = case.scale_quadratic();
            let sc_law = move |c: &[f64]| nn * (4.0 * (c[0] * qa) * (c[0] * qb) - c[1..].iter().map(|v| v * v).sum::<f64>());
            let case_law: (&str, Box<dyn Fn(&[f64]) -> f64>) = match case {
                RiemCase::A => ("n(n-1)(4 - |c|²)", Box::new(move |c: &[f64]| nn * (4.0 - c[1..].iter().map(|v| v * v).sum::<f64>()))),
                RiemCase::B => ("-n(n-1)(4 + |c|²)", Box::new(move |c: &[f64]| -nn * (4.0 + c[1..].iter().map(|v| v * v).sum::<f64>()))),
                RiemCase::C => ("-n(n-1)|c|²", Box::new(move |c: &[f64]| -nn * c[1..].iter().map(|v| v * v).sum::<f64>())),
            };
            debug_assert_eq!(basis.len(), nb + 1);
            let fc = FamilyCheck {
                spec: &spec,
                basis,
                claimed: n - 3,
                sc_law: &sc_law,
                case_law: Some((case_law.0, case_law.1.as_ref())),
                seed,
            };
            let dim = family_checks(&fc, &mut checks)?;
            Ok(finish(name, &spec, Some(dim), Some(n - 3), None, checks))
        }
        TheoremId::TLorentz { n } => {
            let spec = lorentzian_family(*n)?;
            let basis: Vec<ExprAst> = spec.scale_basis.iter().map(|s| s.1.clone()).collect();
            let nn = (*n as f64) * (*n as f64 - 1.0);
            let law = move |c: &[f64]| -nn * c[2..].iter().map(|v| v * v).sum::<f64>();
            let fc = FamilyCheck {
                spec: &spec,
                basis,
                claimed: n - 2,
                sc_law: &law,
                case_law: Some(("-n(n-1)|c|²", &law)),
                seed,
            };
            let dim = family_checks(&fc, &mut checks)?;
            rflat_checks(&spec, &spec.scale_basis[1..2], &mut checks, seed)?;
            Ok(finish(name, &spec, Some(dim), Some(n - 2), None, checks))
        }
        TheoremId::TGen { n, p } => {
            let spec = general_family(*n, *p)?;
            let basis: Vec<ExprAst> = spec.scale_basis.iter().map(|s| s.1.clone()).collect();
            let signs: Vec<bool> = (0..n - 4).map(|i| i < p - 2).collect();
            let nn = (*n as f64) * (*n as f64 - 1.0);
            let law = move |c: &[f64]| -nn * signed_square(&c[3..], &signs);
            let fc = FamilyCheck {
                spec: &spec,
                basis,
                claimed: n - 1,
                sc_law: &law,
                case_law: Some(("-n(n-1)|c|²", &law)),
                seed,
            };
            let dim = family_checks(&fc, &mut checks)?;
            rflat_checks(&spec, &spec.scale_basis[1..3], &mut checks, seed)?;
            let class = spec.signature.class();
            let nck_bound = class.d_nck_bound(*n);
            checks.push(Check::equal("wedge count d(d-1)/2 equals the d_ncK bound", dim * (dim - 1) / 2, nck_bound));
            Ok(finish(name, &spec, Some(dim), Some(n - 1), None, checks))
        }
        TheoremId::RFlat(spec) => {
            let taus: Vec<(String, ExprAst)> = spec
                .scale_basis
                .iter()
                .filter(|(_, e)| !e.variables().is_empty())
                .cloned()
                .collect();
            if taus.is_empty() {
                return Err(AnalysisError::InvalidParameters(format!("{} has no non-constant known scales", spec.label)));
            }
            let pack = curvature_jets(spec, &spec.default_point, 2)?;
            let ricci: Vec<f64> = pack.ricci.iter().map(Jet::value).collect();
            checks.push(Check::below("‖Ric‖ at the default point", frobenius(&ricci), 1e-8, None));
            rflat_checks(spec, &taus, &mut checks, seed)?;
            Ok(finish(name, spec, None, None, None, checks))
        }
        TheoremId::Bounds(spec) => {
            let cfg = DimConfig {
                seed,
                ..DimConfig::default()
            };
            let report = estimate_parallel_dims(spec, &spec.default_point, &cfg)?;
            checks.push(Check::equal("lower <= upper", report.lower_le_upper() as usize, 1));
            checks.push(Check::equal("rank decisions stable", (!report.marginal) as usize, 1));
            if let Some(b) = &report.bounds {
                checks.push(Check {
                    name: format!("d_aE upper {} <= {}", report.d_ae_upper, b.d_ae_bound),
                    value: report.d_ae_upper as f64,
                    tolerance: b.d_ae_bound as f64,
                    passed: report.d_ae_upper <= b.d_ae_bound,
                    witness: None,
                });
                checks.push(Check {
                    name: format!("d_ncK upper {} <= {}", report.d_nck_upper, b.d_nck_bound),
                    value: report.d_nck_upper as f64,
                    tolerance: b.d_nck_bound as f64,
                    passed: report.d_nck_upper <= b.d_nck_bound,
                    witness: None,
                });
            }
            if spec.n >= 4 {
                let mut worst = 0usize;
                let mut ok = true;
                for p in spec.sample_points(10, seed)? {
                    match kernel_of_weyl(spec, &p) {
                        Ok(wk) => worst = worst.max(wk.subspace.dim() * wk.bound.is_some() as usize),
                        Err(AnalysisError::BoundViolation { dim, .. }) => {
                            ok = false;
                            worst = worst.max(dim);
                        }
                        Err(e) => return Err(e),
                    }
                }
                let bound = spec.signature.class().ker_w_bound(spec.n);
                checks.push(Check {
                    name: format!("dim ker W <= {bound} at 10 points"),
                    value: worst as f64,
                    tolerance: bound as f64,
                    passed: ok,
                    witness: None,
                });
            }
            Ok(finish(name, spec, None, None, Some(report), checks))
        }
    }
}

// ---------------------------------------------------------------- conformal laws

fn relative_gap(computed: &[f64], expected: &[f64]) -> f64 {
    let diff: Vec<f64> = computed.iter().zip(expected).map(|(a, b)| a - b).collect();
    frobenius(&diff) / frobenius(expected).max(1.0)
}

/// Compares curvature, Einstein tractors and the almost Einstein operator of
/// `ĝ = ω² g` with the transformation laws applied to the data of `g`.
/// Residuals are relative.
pub fn conformal_law_checks(spec: &MetricSpec, omega: &ExprAst, point: &[f64]) -> Result<Vec<Check>, AnalysisError> {
    let n = spec.n;
    let hat = crate::curvature::rescale_metric(spec, omega)?;
    let cj = curvature_jets(spec, point, 2)?;
    let cj_hat = curvature_jets(&hat, point, 2)?;
    let w = sigma_jets(spec, omega, point, 2)?;
    let om = w.value();
    let ups: Vec<f64> = w.gradient().iter().map(|d| d / om).collect();
    let mut checks = Vec::new();
    let tol = 1e-8;

    // P̂ = P - ∇Υ + ΥΥ - ½|Υ|² g
    let ups_up: Vec<f64> = (0..n).map(|a| (0..n).map(|b| cj.frame.g_inv_value(a, b) * ups[b]).sum()).collect();
    let ups_sq: f64 = (0..n * n).map(|ab| cj.frame.g_inv_value(ab / n, ab % n) * ups[ab / n] * ups[ab % n]).sum();
    let mut expected = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut nabla = w.second(a, b) / om - ups[a] * ups[b];
            for c in 0..n {
                nabla -= cj.christoffel[c * n * n + a * n + b].value() * ups[c];
            }
            expected[a * n + b] =
                cj.schouten[a * n + b].value() - nabla + ups[a] * ups[b] - 0.5 * ups_sq * cj.frame.g_value(a, b);
        }
    }
    let p_hat: Vec<f64> = cj_hat.schouten.iter().map(Jet::value).collect();
    checks.push(Check::below("Schouten transformation law", relative_gap(&p_hat, &expected), tol, None));

    // J-hat = ω^{-2}(J - ∇^aΥ_a - (n-2)/2 |Υ|²)
    let trace: f64 = (0..n * n).map(|ab| cj.frame.g_inv_value(ab / n, ab % n) * expected[ab]).sum();
    let j_gap = (cj_hat.j.value() - trace / (om * om)).abs() / cj_hat.j.value().abs().max(1.0);
    checks.push(Check::below("J transformation law", j_gap, tol, None));

    let weyl: Vec<f64> = cj.weyl().iter().map(|j| om * om * j.value()).collect();
    let weyl_hat: Vec<f64> = cj_hat.weyl().iter().map(Jet::value).collect();
    checks.push(Check::below("W_abcd has conformal weight 2", relative_gap(&weyl_hat, &weyl), tol, None));

    let g = spec.metric_values(point)?;
    let g_hat = hat.metric_values(point)?;
    let mut worst_tractor: (f64, Option<String>) = (0.0, None);
    let mut worst_pair: (f64, Option<String>) = (0.0, None);
    let mut worst_ae: (f64, Option<String>) = (0.0, None);
    for cand in candidate_scales(spec) {
        let sigma = &cand.sigma;
        let sigma_hat = ExprAst::mul(omega.clone(), sigma.clone());
        let i = einstein_tractor(spec, sigma, point)?;
        let i_hat = einstein_tractor(&hat, &sigma_hat, point)?;
        let ups_mu: f64 = ups.iter().zip(&i.mu).map(|(u, m)| u * m).sum();
        let mut law = vec![om * i.sigma];
        law.extend(i.mu.iter().zip(&ups_up).map(|(m, u)| (m + u * i.sigma) / om));
        law.push((i.rho - ups_mu - 0.5 * ups_sq * i.sigma) / om);
        let got: Vec<f64> = i_hat.to_column().iter().copied().collect();
        let gap = relative_gap(&got, &law);
        if gap >= worst_tractor.0 {
            worst_tractor = (gap, Some(format!("σ = {sigma}")));
        }
        let pair_gap = (i_hat.pair(&i_hat, &g_hat) - i.pair(&i, &g)).abs() / i.pair(&i, &g).abs().max(1.0);
        if pair_gap >= worst_pair.0 {
            worst_pair = (pair_gap, Some(format!("σ = {sigma}")));
        }
        let t: Vec<f64> = ae_from_jets(&cj, &sigma_jets(spec, sigma, point, 2)?)?.iter().map(|v| om * v).collect();
        let t_hat = ae_from_jets(&cj_hat, &sigma_jets(&hat, &sigma_hat, point, 2)?)?;
        let gap = relative_gap(&t_hat, &t);
        if gap >= worst_ae.0 {
            worst_ae = (gap, Some(format!("σ = {sigma}")));
        }
    }
    checks.push(Check::below("Einstein tractor transformation law", worst_tractor.0, tol, worst_tractor.1));
    checks.push(Check::below("⟨I,I⟩ is conformally invariant", worst_pair.0, tol, worst_pair.1));
    checks.push(Check::below("aE operator: σ ↦ ωσ scales the residual by ω", worst_ae.0, tol, worst_ae.1));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_plain;
    use crate::geometry::{builtin_metric, MetricParams};

    fn metric(name: &str) -> MetricSpec {
        builtin_metric(name, &MetricParams::new()).unwrap()
    }

    #[test]
    fn kernel_of_simple_matrices() {
        assert_eq!(kernel(&DMatrix::identity(3, 3), RANK_TOL).unwrap().dim(), 0);
        assert_eq!(kernel(&DMatrix::zeros(3, 3), RANK_TOL).unwrap().dim(), 3);
        let u = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.0]);
        let v = DVector::from_vec(vec![1.1, 0.4, -0.5, 0.9]);
        let outer = &u * v.transpose();
        let k = kernel(&outer, RANK_TOL).unwrap();
        assert_eq!(k.dim(), 3);
        for b in &k.basis {
            let b = DVector::from_vec(b.clone());
            assert!((&outer * &b).amax() < 1e-12);
            assert!((b.norm() - 1.0).abs() < 1e-12);
        }
        for i in 0..3 {
            for j in 0..i {
                let d: f64 = k.basis[i].iter().zip(&k.basis[j]).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-12);
            }
        }
        assert!(matches!(kernel(&DMatrix::zeros(0, 3), RANK_TOL), Err(AnalysisError::EmptyMatrix)));
    }

    #[test]
    fn marginal_rank_is_flagged() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-7]);
        assert!(kernel(&m, RANK_TOL).unwrap().marginal);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        assert!(!kernel(&m, RANK_TOL).unwrap().marginal);
    }

    #[test]
    fn weyl_kernels_of_catalogue() {
        let fs = metric("fubini_study");
        assert_eq!(kernel_of_weyl(&fs, &fs.default_point).unwrap().subspace.dim(), 0);
        let pp = metric("pp_wave");
        let k = kernel_of_weyl(&pp, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(k.subspace.dim(), 1);
        assert!((k.subspace.basis[0][3].abs() - 1.0).abs() < 1e-12);
        let split = metric("pp_split");
        assert_eq!(kernel_of_weyl(&split, &split.default_point).unwrap().subspace.dim(), 2);
    }

    #[test]
    fn ae_residuals() {
        let pp = metric("pp_wave");
        let p = [0.2, 0.6, -0.3, 0.5];
        assert!(ae_residual(&pp, &ExprAst::Const(1.0), &p).unwrap() < 1e-9);
        let s = parse_plain("0.7 - 1.3*exp(-sqrt(2)*x1)", 4).unwrap();
        assert!(ae_residual(&pp, &s, &p).unwrap() < 1e-8);
        let fs = metric("fubini_study");
        assert!(ae_residual(&fs, &ExprAst::Var(0), &fs.default_point).unwrap() > 1e-3);
    }

    #[test]
    fn pp_wave_wedge_is_dz() {
        let pp = metric("pp_wave");
        let tau = parse_plain("exp(-sqrt(2)*x1)", 4).unwrap();
        let k = wedge_nckf(&pp, &ExprAst::Const(1.0), &tau).unwrap();
        let p = [0.4, 0.8, 0.1, -0.2];
        let v = field_values(&pp, &k, &p).unwrap();
        let expected = [0.0, 0.0, 0.0, -2f64.sqrt()];
        for a in 0..4 {
            assert!((v[a] - expected[a]).abs() < 1e-12, "{v:?}");
        }
        let r = ck_and_normality(&pp, &k, &p).unwrap();
        assert!(r.ck_res < 1e-9 && r.normal_res < 1e-9 && r.null_res < 1e-12);
        let same = wedge_nckf(&pp, &tau, &tau).unwrap();
        assert!(field_values(&pp, &same, &p).unwrap().iter().all(|v| *v == 0.0));
        assert!(wedge_nckf(&pp, &ExprAst::Var(1), &tau).is_err());
    }

    #[test]
    fn non_killing_field_fails() {
        let tn = metric("taub_nut");
        let field = VectorField::Vector(vec![ExprAst::Var(1), ExprAst::Const(0.0), ExprAst::Var(0), ExprAst::Const(1.0)]);
        assert!(ck_and_normality(&tn, &field, &tn.default_point).unwrap().ck_res > 1e-3);
    }

    #[test]
    fn conformal_laws_hold() {
        let tn = metric("taub_nut");
        let omega = parse_plain("exp(0.3*x1 - 0.2*x4) + 0.5*x2", 4).unwrap();
        for c in conformal_law_checks(&tn, &omega, &tn.default_point).unwrap() {
            assert!(c.passed, "{c:?}");
        }
        let e = pseudo_euclidean(1, 3).unwrap();
        let omega = parse_plain("exp(x1)", 4).unwrap();
        for c in conformal_law_checks(&e, &omega, &e.default_point).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn gram_rank_detects_dependence() {
        let e = pseudo_euclidean(0, 4).unwrap();
        let pts = e.sample_points(10, 1).unwrap();
        let fam = vec![ExprAst::Var(0), ExprAst::Var(1), parse_plain("x1 - 2*x2", 4).unwrap()];
        assert_eq!(gram_rank(&e, &fam, &pts).unwrap(), 2);
    }
}
