//! Closed-form curvature of `g = ḡ ⊕ f² g̃` over a flat base against jets of
//! the assembled metric.

use cgl_core::curvature::curvature_jets;
use cgl_core::expr::EvalEnv;
use cgl_core::geometry::{builtin_metric, pseudo_euclidean, warped_product, MetricParams, MetricSpec, WarpedSpec};
use cgl_core::jets::seed_jets;

const TOL: f64 = 1e-8;

fn fiber(name: &str) -> MetricSpec {
    builtin_metric(name, &MetricParams::new()).unwrap()
}

fn cases() -> Vec<WarpedSpec> {
    vec![
        WarpedSpec {
            base: pseudo_euclidean(0, 2).unwrap(),
            fiber: fiber("fubini_study"),
            a: 1.0,
            b: -1.0,
            negative_branch: false,
        },
        WarpedSpec {
            base: pseudo_euclidean(1, 1).unwrap(),
            fiber: fiber("fubini_study_hyperbolic"),
            a: 0.8,
            b: 0.3,
            negative_branch: false,
        },
        WarpedSpec {
            base: pseudo_euclidean(0, 1).unwrap(),
            fiber: fiber("taub_nut"),
            a: 1.2,
            b: 0.7,
            negative_branch: false,
        },
        WarpedSpec {
            base: pseudo_euclidean(1, 1).unwrap(),
            fiber: fiber("pp_wave"),
            a: 1.0,
            b: -0.4,
            negative_branch: false,
        },
    ]
}

struct Warp {
    f: f64,
    df: Vec<f64>,
    signs: Vec<f64>,
    b: f64,
    norm_sq: f64,
}

/// `f = a + b Σ ε_i x_i²` and its derivatives in closed form.
fn warp_at(ws: &WarpedSpec, x: &[f64]) -> Warp {
    let nb = ws.base.n;
    let signs: Vec<f64> = (0..nb).map(|i| ws.base.component(i, i).eval_f64(&[], &Default::default()).unwrap()).collect();
    let norm_sq: f64 = (0..nb).map(|i| signs[i] * x[i] * x[i]).sum();
    Warp {
        f: ws.a + ws.b * norm_sq,
        df: (0..nb).map(|i| 2.0 * ws.b * signs[i] * x[i]).collect(),
        signs,
        b: ws.b,
        norm_sq,
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1.0)
}

#[test]
fn warp_function_identities() {
    for ws in cases() {
        let nb = ws.base.n;
        let f = ws.warp_expr();
        for x in ws.base.sample_points(5, 3).unwrap() {
            let w = warp_at(&ws, &x);
            let vars = seed_jets(&x, 2).unwrap();
            let j = f.evaluate(&EvalEnv { vars: &vars, params: &Default::default() }).unwrap();
            for i in 0..nb {
                assert!((j.first(i) - 2.0 * ws.b * w.signs[i] * x[i]).abs() < 1e-12);
                for k in 0..nb {
                    let expected = if i == k { 2.0 * ws.b * w.signs[i] } else { 0.0 };
                    assert!((j.second(i, k) - expected).abs() < 1e-12);
                }
            }
            let laplacian: f64 = (0..nb).map(|i| w.signs[i] * j.second(i, i)).sum();
            assert!((laplacian - 2.0 * nb as f64 * ws.b).abs() < 1e-12);
            let grad_sq: f64 = (0..nb).map(|i| w.signs[i] * j.first(i) * j.first(i)).sum();
            assert!((grad_sq - 4.0 * ws.b * ws.b * w.norm_sq).abs() < 1e-12);
        }
    }
}

#[test]
fn ricci_matches_warped_formula() {
    for ws in cases() {
        let spec = warped_product(&ws).unwrap();
        let (nb, n) = (ws.base.n, spec.n);
        let nt = 4.0;
        for p in spec.sample_points(5, 11).unwrap() {
            let cj = curvature_jets(&spec, &p, 2).unwrap();
            let fj = curvature_jets(&ws.fiber, &p[nb..], 2).unwrap();
            let w = warp_at(&ws, &p);
            let lap = 2.0 * nb as f64 * w.b;
            let grad_sq = 4.0 * w.b * w.b * w.norm_sq;
            let scale: f64 = cj.ricci.iter().map(|r| r.value().abs()).fold(0.0, f64::max);
            let mut worst: f64 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let expected = match (a < nb, b < nb) {
                        (true, true) => {
                            let hess = if a == b { 2.0 * w.b * w.signs[a] } else { 0.0 };
                            -nt / w.f * hess
                        }
                        (false, false) => {
                            let (al, be) = (a - nb, b - nb);
                            fj.ricci[al * 4 + be].value()
                                - (w.f * lap + (nt - 1.0) * grad_sq) * fj.frame.g_value(al, be)
                        }
                        _ => 0.0,
                    };
                    worst = worst.max(rel(cj.ricci[a * n + b].value(), expected, scale));
                }
            }
            assert!(worst < TOL, "{}: Ricci mismatch {worst:e} at {p:?}", spec.label);
            let sc = fj.scalar.value() / (w.f * w.f) - 2.0 * nt * lap / w.f - nt * (nt - 1.0) * grad_sq / (w.f * w.f);
            assert!(rel(cj.scalar.value(), sc, sc.abs()) < TOL, "{}: Sc {} vs {sc}", spec.label, cj.scalar.value());
        }
    }
}

/// Christoffel symbols read off the covariant derivative of coordinate
/// vector fields on the warped product.
#[test]
fn connection_matches_warped_formula() {
    for ws in cases() {
        let spec = warped_product(&ws).unwrap();
        let (nb, n) = (ws.base.n, spec.n);
        for p in spec.sample_points(5, 12).unwrap() {
            let cj = curvature_jets(&spec, &p, 2).unwrap();
            let fj = curvature_jets(&ws.fiber, &p[nb..], 2).unwrap();
            let w = warp_at(&ws, &p);
            let gamma = |c: usize, a: usize, b: usize| cj.christoffel[c * n * n + a * n + b].value();
            let mut worst: f64 = 0.0;
            for c in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let expected = match (c < nb, a < nb, b < nb) {
                            // ∇_a v^β ∋ f⁻¹ (df)_a v^β, and symmetrically for ∇_α v^b
                            (false, true, false) => {
                                if c == b { w.df[a] / w.f } else { 0.0 }
                            }
                            (false, false, true) => {
                                if c == a { w.df[b] / w.f } else { 0.0 }
                            }
                            // ∇_α v^b ∋ -f⁻¹ v_α (df)^b with v_α = f² g̃_αγ v^γ
                            (true, false, false) => {
                                -w.f * w.signs[c] * w.df[c] * fj.frame.g_value(a - nb, b - nb)
                            }
                            (false, false, false) => {
                                fj.christoffel[(c - nb) * 16 + (a - nb) * 4 + (b - nb)].value()
                            }
                            _ => 0.0,
                        };
                        worst = worst.max((gamma(c, a, b) - expected).abs());
                    }
                }
            }
            let scale = cj.christoffel.iter().map(|g| g.value().abs()).fold(1.0, f64::max);
            assert!(worst / scale < TOL, "{}: connection mismatch {worst:e} at {p:?}", spec.label);
        }
    }
}

#[test]
fn lowered_connection_matches_covector_lines() {
    // ∇_α φ_β = ∂_α φ_β - Γ̃ φ - f φ^r (df)_r g̃_αβ for φ = du^i
    for ws in cases() {
        let spec = warped_product(&ws).unwrap();
        let (nb, n) = (ws.base.n, spec.n);
        let p = spec.default_point.clone();
        let cj = curvature_jets(&spec, &p, 2).unwrap();
        let fj = curvature_jets(&ws.fiber, &p[nb..], 2).unwrap();
        let w = warp_at(&ws, &p);
        for i in 0..nb {
            for al in 0..4 {
                for be in 0..4 {
                    let computed = -cj.christoffel[i * n * n + (al + nb) * n + (be + nb)].value();
                    // φ^r (df)_r = ε_i (df)_i for φ = du^i
                    let expected = w.f * w.signs[i] * w.df[i] * fj.frame.g_value(al, be);
                    assert!((computed - expected).abs() < TOL, "{}", spec.label);
                }
            }
        }
    }
}
