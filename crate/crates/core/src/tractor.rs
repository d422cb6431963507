//! Standard tractors in the splitting of a fixed metric.
//!
//! A tractor is stored as the column `(σ, μ^1, …, μ^n, ρ)`. The normal
//! tractor connection is `∇_a = ∂_a + A_a` with
//!
//! ```text
//!        ⎛  0       -g_ac     0   ⎞
//! A_a =  ⎜ P_a^b    Γ^b_ac   δ_a^b⎟
//!        ⎝  0       -P_ac     0   ⎠
//! ```

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::curvature::{curvature_jets, CurvatureError, CurvatureJets};
use crate::expr::{EvalEnv, ExprAst, ExprError};
use crate::geometry::MetricSpec;
use crate::jets::{seed_jets, Jet, JetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TractorError {
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("transport did not converge on segment {from:?} -> {to:?} after {steps} steps (change {change:e})")]
    NoConvergence {
        from: Vec<f64>,
        to: Vec<f64>,
        steps: usize,
        change: f64,
    },
    #[error("path needs at least two points")]
    ShortPath,
    #[error("section has {got} middle components, metric dimension is {expected}")]
    SectionShape { expected: usize, got: usize },
}

/// `(σ, μ^a, ρ)` in the splitting of the analyzed metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TractorVector {
    pub sigma: f64,
    pub mu: Vec<f64>,
    pub rho: f64,
}

impl TractorVector {
    pub fn from_column(v: &DVector<f64>) -> TractorVector {
        let n = v.len() - 2;
        TractorVector {
            sigma: v[0],
            mu: (0..n).map(|i| v[1 + i]).collect(),
            rho: v[n + 1],
        }
    }

    pub fn to_column(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.mu.len() + 2);
        out.push(self.sigma);
        out.extend_from_slice(&self.mu);
        out.push(self.rho);
        DVector::from_vec(out)
    }

    /// `⟨U, V⟩ = g(μ, ν) + σπ + ρτ`.
    pub fn pair(&self, other: &TractorVector, g: &DMatrix<f64>) -> f64 {
        let h = tractor_metric(g);
        (self.to_column().transpose() * h * other.to_column())[(0, 0)]
    }

    pub fn norm(&self) -> f64 {
        self.to_column().norm()
    }
}

/// Endomorphism of the tractor fiber in the fixed splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct TractorEndo {
    pub matrix: DMatrix<f64>,
}

impl TractorEndo {
    pub fn apply(&self, v: &TractorVector) -> TractorVector {
        TractorVector::from_column(&(&self.matrix * v.to_column()))
    }

    /// `max |hX + Xᵀh|`: zero for endomorphisms skew for the tractor metric.
    pub fn skewness(&self, g: &DMatrix<f64>) -> f64 {
        let h = tractor_metric(g);
        (&h * &self.matrix + self.matrix.transpose() * &h).amax()
    }
}

/// Block matrix `[[0,0,1],[0,g,0],[1,0,0]]`.
pub fn tractor_metric(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut h = DMatrix::zeros(n + 2, n + 2);
    h[(0, n + 1)] = 1.0;
    h[(n + 1, 0)] = 1.0;
    h.view_mut((1, 1), (n, n)).copy_from(g);
    h
}

/// `A_a` entries as jets of order `K - 2`, one row-major `(n+2)²` list per direction.
pub fn connection_jets(cj: &CurvatureJets) -> Vec<Vec<Jet>> {
    let n = cj.n;
    let big = n + 2;
    let order = cj.order - 2;
    let tr = |j: &Jet| j.truncate(order).expect("truncate");
    let g: Vec<Jet> = cj.frame.g.iter().map(tr).collect();
    let gi: Vec<Jet> = cj.frame.g_inv.iter().map(tr).collect();
    let gamma: Vec<Jet> = cj.christoffel.iter().map(tr).collect();
    let space = cj.schouten[0].space().clone();
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut m = vec![Jet::zero(&space); big * big];
        for c in 0..n {
            m[1 + c] = g[a * n + c].scale(-1.0);
            m[(big - 1) * big + 1 + c] = cj.schouten[a * n + c].scale(-1.0);
        }
        for b in 0..n {
            let mut p_up = Jet::zero(&space);
            for c in 0..n {
                if !gi[b * n + c].is_zero() {
                    p_up.add_product(&gi[b * n + c], &cj.schouten[a * n + c], 1.0);
                }
            }
            m[(1 + b) * big] = p_up;
            for c in 0..n {
                m[(1 + b) * big + 1 + c] = gamma[b * n * n + a * n + c].clone();
            }
        }
        m[(1 + a) * big + big - 1] = Jet::constant(&space, 1.0);
        out.push(m);
    }
    out
}

fn jets_to_matrix(m: &[Jet], big: usize) -> DMatrix<f64> {
    DMatrix::from_fn(big, big, |i, j| m[i * big + j].value())
}

/// `A_a` values at a point.
pub fn connection_values(cj: &CurvatureJets) -> Vec<DMatrix<f64>> {
    let big = cj.n + 2;
    connection_jets(cj).iter().map(|m| jets_to_matrix(m, big)).collect()
}

/// Connection matrices and metric values at `point`.
pub fn connection_at(spec: &MetricSpec, point: &[f64]) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>), TractorError> {
    let cj = curvature_jets(spec, point, 2)?;
    let g = DMatrix::from_fn(cj.n, cj.n, |i, j| cj.frame.g_value(i, j));
    Ok((connection_values(&cj), g))
}

/// Index of the coordinate pair `(a, b)`, `a < b`, in lexicographic order.
pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            out.push((a, b));
        }
    }
    out
}

/// `Ω_ab = ∂_a A_b - ∂_b A_a + [A_a, A_b]` for `a < b` (needs `K >= 3`).
pub fn tractor_curvature_from_jets(cj: &CurvatureJets) -> Result<Vec<TractorEndo>, TractorError> {
    if cj.order < 3 {
        return Err(CurvatureError::Order {
            what: "tractor curvature",
            order: cj.order,
            needed: 3,
        }
        .into());
    }
    let n = cj.n;
    let big = n + 2;
    let conn = connection_jets(cj);
    let values: Vec<DMatrix<f64>> = conn.iter().map(|m| jets_to_matrix(m, big)).collect();
    let deriv = |a: usize, b: usize| -> Result<DMatrix<f64>, TractorError> {
        // ∂_a A_b
        let mut out = DMatrix::zeros(big, big);
        for (slot, j) in conn[b].iter().enumerate() {
            if !j.is_zero() {
                out[(slot / big, slot % big)] = j.derivative(a)?.value();
            }
        }
        Ok(out)
    };
    let mut out = Vec::new();
    for (a, b) in pair_list(n) {
        let m = deriv(a, b)? - deriv(b, a)? + &values[a] * &values[b] - &values[b] * &values[a];
        out.push(TractorEndo { matrix: m });
    }
    Ok(out)
}

pub fn tractor_curvature(spec: &MetricSpec, point: &[f64]) -> Result<Vec<TractorEndo>, TractorError> {
    let cj = curvature_jets(spec, point, 3)?;
    tractor_curvature_from_jets(&cj)
}

/// A tractor field given by expressions for `σ`, `μ^b` and `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TractorSection {
    pub sigma: ExprAst,
    pub mu: Vec<ExprAst>,
    pub rho: ExprAst,
}

/// `∇^T_a` of a section in coordinate direction `direction`.
pub fn tractor_derivative(
    spec: &MetricSpec,
    section: &TractorSection,
    point: &[f64],
    direction: usize,
) -> Result<TractorVector, TractorError> {
    let n = spec.n;
    if section.mu.len() != n {
        return Err(TractorError::SectionShape {
            expected: n,
            got: section.mu.len(),
        });
    }
    let cj = curvature_jets(spec, point, 2)?;
    let conn = connection_values(&cj);
    let vars = seed_jets(point, 1)?;
    let env = EvalEnv {
        vars: &vars,
        params: &spec.params,
    };
    let mut fields = vec![section.sigma.evaluate(&env)?];
    for m in &section.mu {
        fields.push(m.evaluate(&env)?);
    }
    fields.push(section.rho.evaluate(&env)?);
    let value = DVector::from_iterator(n + 2, fields.iter().map(Jet::value));
    let deriv = DVector::from_iterator(n + 2, fields.iter().map(|f| f.first(direction)));
    Ok(TractorVector::from_column(&(deriv + &conn[direction] * value)))
}

/// Components of `I^σ = (σ, ∇^aσ, -(Δσ + Jσ)/n)` as jets of order `K - 2`.
pub fn einstein_tractor_jets(cj: &CurvatureJets, spec: &MetricSpec, sigma: &ExprAst) -> Result<Vec<Jet>, TractorError> {
    let n = cj.n;
    let k = cj.order;
    let vars = seed_jets(&cj.frame.point, k)?;
    let env = EvalEnv {
        vars: &vars,
        params: &spec.params,
    };
    let s = sigma.evaluate(&env)?;
    let tr = |j: &Jet, o: usize| j.truncate(o).expect("truncate");
    let ds: Vec<Jet> = (0..n).map(|a| s.derivative(a)).collect::<Result<_, _>>()?;
    let dds: Vec<Jet> = (0..n * n)
        .map(|ab| ds[ab / n].derivative(ab % n))
        .collect::<Result<_, _>>()?;
    let low = k - 2;
    let gi: Vec<Jet> = cj.frame.g_inv.iter().map(|j| tr(j, low)).collect();
    let gamma: Vec<Jet> = cj.christoffel.iter().map(|j| tr(j, low)).collect();
    let space = cj.j.space().clone();
    // ∇_a∇_b σ = ∂_a∂_b σ - Γ^c_ab ∂_c σ
    let mut laplace = Jet::zero(&space);
    for a in 0..n {
        for b in 0..n {
            if gi[a * n + b].is_zero() {
                continue;
            }
            let mut hess = dds[a * n + b].clone();
            for c in 0..n {
                let g = &gamma[c * n * n + a * n + b];
                if !g.is_zero() {
                    hess.add_product(g, &tr(&ds[c], low), -1.0);
                }
            }
            laplace.add_product(&gi[a * n + b], &hess, 1.0);
        }
    }
    let mut out = vec![tr(&s, low)];
    for a in 0..n {
        let mut up = Jet::zero(&space);
        for b in 0..n {
            if !gi[a * n + b].is_zero() {
                up.add_product(&gi[a * n + b], &tr(&ds[b], low), 1.0);
            }
        }
        out.push(up);
    }
    let mut rho = laplace;
    rho.add_product(&cj.j, &tr(&s, low), 1.0);
    out.push(rho.scale(-1.0 / n as f64));
    Ok(out)
}

pub fn einstein_tractor(spec: &MetricSpec, sigma: &ExprAst, point: &[f64]) -> Result<TractorVector, TractorError> {
    let cj = curvature_jets(spec, point, 2)?;
    let jets = einstein_tractor_jets(&cj, spec, sigma)?;
    Ok(TractorVector::from_column(&DVector::from_iterator(
        spec.n + 2,
        jets.iter().map(Jet::value),
    )))
}

/// `∇^T_a I^σ` for every coordinate direction.
pub fn einstein_tractor_derivative(
    spec: &MetricSpec,
    sigma: &ExprAst,
    point: &[f64],
) -> Result<Vec<TractorVector>, TractorError> {
    let cj = curvature_jets(spec, point, 3)?;
    let jets = einstein_tractor_jets(&cj, spec, sigma)?;
    let conn = connection_values(&cj);
    let n = spec.n;
    let value = DVector::from_iterator(n + 2, jets.iter().map(Jet::value));
    Ok((0..n)
        .map(|a| {
            let d = DVector::from_iterator(n + 2, jets.iter().map(|j| j.first(a)));
            TractorVector::from_column(&(d + &conn[a] * &value))
        })
        .collect())
}

// ---------------------------------------------------------------- transport

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    /// Successive refinements must agree to this (max entry).
    pub tol: f64,
    pub max_halvings: usize,
    pub initial_steps: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            tol: 1e-9,
            max_halvings: 12,
            initial_steps: 4,
        }
    }
}

/// Matrix `M` with `V(to) = M V(from)` for transport along the straight segment.
pub fn segment_transport(
    spec: &MetricSpec,
    from: &[f64],
    to: &[f64],
    cfg: &TransportConfig,
) -> Result<DMatrix<f64>, TractorError> {
    let n = spec.n;
    let big = n + 2;
    let velocity: Vec<f64> = to.iter().zip(from).map(|(t, f)| t - f).collect();
    let mut cache: HashMap<u64, DMatrix<f64>> = HashMap::new();
    let mut generator = |s: f64| -> Result<DMatrix<f64>, TractorError> {
        if let Some(m) = cache.get(&s.to_bits()) {
            return Ok(m.clone());
        }
        let x: Vec<f64> = from.iter().zip(&velocity).map(|(f, v)| f + s * v).collect();
        let (conn, _) = connection_at(spec, &x)?;
        let mut a = DMatrix::zeros(big, big);
        for (d, m) in velocity.iter().zip(&conn) {
            if *d != 0.0 {
                a += m * *d;
            }
        }
        let a = -a;
        cache.insert(s.to_bits(), a.clone());
        Ok(a)
    };
    let mut rk4 = |steps: usize| -> Result<DMatrix<f64>, TractorError> {
        let h = 1.0 / steps as f64;
        let mut m = DMatrix::identity(big, big);
        for i in 0..steps {
            let s = i as f64 * h;
            let a0 = generator(s)?;
            let a1 = generator(s + 0.5 * h)?;
            let a2 = generator(s + h)?;
            let k1 = &a0 * &m;
            let k2 = &a1 * (&m + &k1 * (0.5 * h));
            let k3 = &a1 * (&m + &k2 * (0.5 * h));
            let k4 = &a2 * (&m + &k3 * h);
            m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        Ok(m)
    };
    let mut steps = cfg.initial_steps.max(1);
    let mut previous = rk4(steps)?;
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_halvings {
        steps *= 2;
        let next = rk4(steps)?;
        change = (&next - &previous).amax();
        if change < cfg.tol {
            // RK4 error scales as h^4, so one Richardson step removes the leading term
            return Ok(&next + (&next - &previous) / 15.0);
        }
        previous = next;
    }
    Err(TractorError::NoConvergence {
        from: from.to_vec(),
        to: to.to_vec(),
        steps,
        change,
    })
}

/// Transport matrix along a coordinate polyline.
pub fn path_transport(spec: &MetricSpec, path: &[Vec<f64>], cfg: &TransportConfig) -> Result<DMatrix<f64>, TractorError> {
    if path.len() < 2 {
        return Err(TractorError::ShortPath);
    }
    let big = spec.n + 2;
    let mut m = DMatrix::identity(big, big);
    for w in path.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        m = segment_transport(spec, &w[0], &w[1], cfg)? * m;
    }
    Ok(m)
}

pub fn parallel_transport(spec: &MetricSpec, path: &[Vec<f64>], v0: &TractorVector) -> Result<TractorVector, TractorError> {
    let m = path_transport(spec, path, &TransportConfig::default())?;
    Ok(TractorVector::from_column(&(m * v0.to_column())))
}

/// Closed rectangle at `x0` with sides `h` along coordinates `b` then `a`;
/// its holonomy is `I + h² Ω_ab + O(h³)`.
pub fn rectangle_loop(x0: &[f64], a: usize, b: usize, h: f64) -> Vec<Vec<f64>> {
    let mut p1 = x0.to_vec();
    p1[b] += h;
    let mut p2 = p1.clone();
    p2[a] += h;
    let mut p3 = x0.to_vec();
    p3[a] += h;
    vec![x0.to_vec(), p1, p2, p3, x0.to_vec()]
}

// ---------------------------------------------------------------- Λ² action

/// Basis pairs `(i, j)`, `i < j`, of `Λ²` of the tractor fiber.
pub fn lambda2_basis(big: usize) -> Vec<(usize, usize)> {
    pair_list(big)
}

fn antisym_from_coords(c: &[f64], big: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(big, big);
    for (k, (i, j)) in lambda2_basis(big).into_iter().enumerate() {
        b[(i, j)] = c[k];
        b[(j, i)] = -c[k];
    }
    b
}

fn coords_of_antisym(b: &DMatrix<f64>) -> Vec<f64> {
    lambda2_basis(b.nrows()).into_iter().map(|(i, j)| b[(i, j)]).collect()
}

fn lambda2_matrix(big: usize, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> DMatrix<f64> {
    let m = big * (big - 1) / 2;
    let mut out = DMatrix::zeros(m, m);
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        let image = coords_of_antisym(&f(&antisym_from_coords(&e, big)));
        for (r, v) in image.into_iter().enumerate() {
            out[(r, k)] = v;
        }
    }
    out
}

/// Algebra action `B ↦ XB + BXᵀ` on antisymmetric `B`.
pub fn lambda2_algebra(x: &DMatrix<f64>) -> DMatrix<f64> {
    lambda2_matrix(x.nrows(), |b| x * b + b * x.transpose())
}

/// `B ↦ HBHᵀ - B` for a group element `H`.
pub fn lambda2_group_minus_identity(h: &DMatrix<f64>) -> DMatrix<f64> {
    lambda2_matrix(h.nrows(), |b| h * b * h.transpose() - b)
}

/// Coordinates of `u ∧ v = u vᵀ - v uᵀ` in the `Λ²` basis.
pub fn wedge(u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let b = u * v.transpose() - v * u.transpose();
    DVector::from_vec(coords_of_antisym(&b))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::pack_from_jets;
    use crate::expr::parse_plain;
    use crate::geometry::{builtin_metric, pseudo_euclidean, MetricParams};

    fn metric(name: &str) -> MetricSpec {
        builtin_metric(name, &MetricParams::new()).unwrap()
    }

    #[test]
    fn flat_constant_section_is_parallel() {
        let e = pseudo_euclidean(0, 4).unwrap();
        let section = TractorSection {
            sigma: ExprAst::Const(1.0),
            mu: vec![ExprAst::Const(0.0); 4],
            rho: ExprAst::Const(0.0),
        };
        for a in 0..4 {
            let d = tractor_derivative(&e, &section, &[0.1, 0.2, 0.3, 0.4], a).unwrap();
            assert_eq!(d.norm(), 0.0);
        }
    }

    #[test]
    fn curvature_blocks_match_weyl_and_cotton() {
        let tn = metric("taub_nut");
        let cj = curvature_jets(&tn, &tn.default_point, 3).unwrap();
        let pack = pack_from_jets(&cj).unwrap();
        let omega = tractor_curvature_from_jets(&cj).unwrap();
        let n = 4;
        let gi = &pack.metric_inverse.components;
        for (k, (a, b)) in pair_list(n).into_iter().enumerate() {
            let m = &omega[k].matrix;
            for col in 0..n + 2 {
                assert!(m[(0, col)].abs() < 1e-10);
            }
            for c in 0..n {
                for d in 0..n {
                    let w_up: f64 = (0..n).map(|e| gi[c * n + e] * pack.weyl.get(&[a, b, e, d])).sum();
                    assert!((m[(1 + c, 1 + d)] - w_up).abs() < 1e-8);
                }
                let y_up: f64 = (0..n).map(|e| gi[c * n + e] * pack.cotton.get(&[e, a, b])).sum();
                assert!((m[(1 + c, 0)] - y_up).abs() < 1e-8);
                assert!((m[(n + 1, 1 + c)] + pack.cotton.get(&[c, a, b])).abs() < 1e-8);
            }
            assert!(omega[k].skewness(&DMatrix::from_row_slice(n, n, &pack.metric.components)) < 1e-9);
        }
    }

    #[test]
    fn fubini_study_einstein_tractor_norm() {
        let fs = metric("fubini_study");
        let i = einstein_tractor(&fs, &ExprAst::Const(1.0), &fs.default_point).unwrap();
        let g = fs.metric_values(&fs.default_point).unwrap();
        assert!((i.pair(&i, &g) + 4.0).abs() < 1e-9);
        for d in einstein_tractor_derivative(&fs, &ExprAst::Const(1.0), &fs.default_point).unwrap() {
            assert!(d.norm() < 1e-9);
        }
    }

    #[test]
    fn pp_wave_scale_is_parallel() {
        let pp = metric("pp_wave");
        let sigma = parse_plain("exp(-sqrt(2)*x1)", 4).unwrap();
        let point = [0.3, 0.7, -0.2, 0.4];
        for d in einstein_tractor_derivative(&pp, &sigma, &point).unwrap() {
            assert!(d.norm() < 1e-8);
        }
        let i = einstein_tractor(&pp, &ExprAst::Const(1.0), &point).unwrap();
        assert_eq!(i.sigma, 1.0);
        assert!(i.mu.iter().all(|m| m.abs() < 1e-14) && i.rho.abs() < 1e-14);
    }

    #[test]
    fn metric_is_parallel() {
        let tn = metric("taub_nut");
        let point = tn.default_point.clone();
        let u = TractorSection {
            sigma: parse_plain("x1*x2", 4).unwrap(),
            mu: ["sin(x3)", "x1", "1", "x4^2"].iter().map(|s| parse_plain(s, 4).unwrap()).collect(),
            rho: parse_plain("cos(x1)", 4).unwrap(),
        };
        let v = TractorSection {
            sigma: parse_plain("x3", 4).unwrap(),
            mu: ["x2", "exp(x1)", "x4", "x3*x1"].iter().map(|s| parse_plain(s, 4).unwrap()).collect(),
            rho: parse_plain("x2^2", 4).unwrap(),
        };
        // ⟨U, V⟩ as an expression, differentiated symbolically
        let metric_component = |i: usize, j: usize| tn.component(i, j).clone();
        let mut pairing = ExprAst::add(ExprAst::mul(u.sigma.clone(), v.rho.clone()), ExprAst::mul(u.rho.clone(), v.sigma.clone()));
        for i in 0..4 {
            for j in 0..4 {
                let term = ExprAst::mul(metric_component(i, j), ExprAst::mul(u.mu[i].clone(), v.mu[j].clone()));
                pairing = ExprAst::add(pairing, term);
            }
        }
        let eval = |s: &TractorSection| -> TractorVector {
            let vals: Vec<f64> = s.mu.iter().map(|m| m.eval_f64(&point, &tn.params).unwrap()).collect();
            TractorVector {
                sigma: s.sigma.eval_f64(&point, &tn.params).unwrap(),
                mu: vals,
                rho: s.rho.eval_f64(&point, &tn.params).unwrap(),
            }
        };
        let g = tn.metric_values(&point).unwrap();
        let (uu, vv) = (eval(&u), eval(&v));
        for a in 0..4 {
            let lhs = pairing.diff(a).eval_f64(&point, &tn.params).unwrap();
            let du = tractor_derivative(&tn, &u, &point, a).unwrap();
            let dv = tractor_derivative(&tn, &v, &point, a).unwrap();
            let rhs = du.pair(&vv, &g) + uu.pair(&dv, &g);
            assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn degenerate_loop_and_flat_holonomy() {
        let e = pseudo_euclidean(1, 3).unwrap();
        let x0 = vec![0.1, 0.2, 0.3, 0.4];
        let h = path_transport(&e, &rectangle_loop(&x0, 0, 1, 0.5), &TransportConfig::default()).unwrap();
        assert!((h - DMatrix::identity(6, 6)).amax() < 1e-10);
        let tn = metric("taub_nut");
        let back = vec![tn.default_point.clone(), {
            let mut p = tn.default_point.clone();
            p[0] += 0.3;
            p
        }, tn.default_point.clone()];
        let h = path_transport(&tn, &back, &TransportConfig::default()).unwrap();
        assert!((h - DMatrix::identity(6, 6)).amax() < 1e-9);
    }

    #[test]
    fn transport_preserves_pairing() {
        let tn = metric("taub_nut");
        let x0 = tn.default_point.clone();
        let mut x1 = x0.clone();
        x1[0] += 0.4;
        x1[1] -= 0.2;
        let v0 = TractorVector {
            sigma: 0.3,
            mu: vec![0.1, -0.4, 0.2, 0.5],
            rho: -0.7,
        };
        let v1 = parallel_transport(&tn, &[x0.clone(), x1.clone()], &v0).unwrap();
        let g0 = tn.metric_values(&x0).unwrap();
        let g1 = tn.metric_values(&x1).unwrap();
        assert!((v0.pair(&v0, &g0) - v1.pair(&v1, &g1)).abs() < 1e-9);
    }

    #[test]
    fn small_loop_holonomy_is_curvature() {
        let tn = metric("taub_nut");
        let x0 = tn.default_point.clone();
        let omega = tractor_curvature(&tn, &x0).unwrap();
        let cfg = TransportConfig::default();
        let mut norms = Vec::new();
        for h in [1e-1, 1e-2] {
            let hol = path_transport(&tn, &rectangle_loop(&x0, 0, 2, h), &cfg).unwrap();
            let dev = hol - DMatrix::identity(6, 6);
            norms.push(dev.norm());
            if h == 1e-2 {
                let rel = (&dev / (h * h) - &omega[1].matrix).norm() / omega[1].matrix.norm();
                assert!(rel < 0.05, "relative mismatch {rel}");
            }
        }
        let slope = (norms[0] / norms[1]).log10();
        assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn lambda2_actions() {
        let x = DMatrix::from_fn(4, 4, |i, j| (i as f64) - 2.0 * (j as f64) + 0.5);
        let alg = lambda2_algebra(&x);
        assert_eq!(alg.nrows(), 6);
        let u = DVector::from_vec(vec![1.0, 0.5, -0.3, 2.0]);
        let v = DVector::from_vec(vec![0.2, -1.0, 0.4, 0.1]);
        // X(u∧v) = Xu∧v + u∧Xv
        let lhs = &alg * wedge(&u, &v);
        let rhs = wedge(&(&x * &u), &v) + wedge(&u, &(&x * &v));
        assert!((lhs - rhs).amax() < 1e-12);
        let id = DMatrix::identity(4, 4);
        assert!(lambda2_group_minus_identity(&id).amax() == 0.0);
    }
}
