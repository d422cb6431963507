//! Signature bounds on ker W, almost Einstein scales and normal conformal
//! Killing fields, over every built-in metric and random warped products.

use cgl_core::analysis::{kernel_of_weyl, verify_theorem, AnalysisError, TheoremId};
use cgl_core::geometry::{
    builtin_metric, catalogue, pseudo_euclidean, warped_product, MetricParams, MetricSpec, SignatureClass, WarpedSpec,
};
use proptest::prelude::*;

fn metric(name: &str, params: &[(&str, &str)]) -> MetricSpec {
    let p: MetricParams = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    builtin_metric(name, &p).unwrap()
}

/// `(ker W, d_aE)` bounds written out per signature type.
fn table(class: SignatureClass, n: usize) -> (usize, usize) {
    match class {
        SignatureClass::Riemannian => (n - 4, n - 3),
        SignatureClass::Lorentzian => (n - 3, n - 2),
        SignatureClass::General => (n - 2, n - 1),
    }
}

fn every_metric() -> Vec<MetricSpec> {
    let mut out: Vec<MetricSpec> = catalogue()
        .into_iter()
        .map(|(name, _)| metric(name, &[]))
        .filter(|m| m.n >= 4)
        // the bounds concern conformally non-flat structures
        .filter(|m| kernel_of_weyl(m, &m.default_point).unwrap().weyl_norm > 1e-6)
        .collect();
    for n in ["5", "6"] {
        for sc in ["48", "-48", "0"] {
            out.push(metric("riem_warped", &[("n", n), ("sc", sc)]));
        }
        out.push(metric("lorentz_product", &[("n", n)]));
    }
    out.push(metric("split_product", &[("n", "5"), ("p", "2")]));
    out.push(metric("split_product", &[("n", "6"), ("p", "2")]));
    out.push(metric("split_product", &[("n", "6"), ("p", "3")]));
    out
}

#[test]
fn bound_formulas() {
    for n in 4..=8 {
        for class in [SignatureClass::Riemannian, SignatureClass::Lorentzian, SignatureClass::General] {
            let (kw, ae) = table(class, n);
            assert_eq!(class.ker_w_bound(n), kw);
            assert_eq!(class.d_ae_bound(n), ae);
            assert_eq!(class.d_nck_bound(n), ae * (ae - 1) / 2);
        }
    }
}

#[test]
fn every_builtin_respects_the_bounds() {
    for spec in every_metric() {
        let report = verify_theorem(&TheoremId::Bounds(Box::new(spec.clone())), 5).unwrap();
        assert!(report.passed, "{}: {:?}", spec.label, report.checks);
        let dims = report.dims.unwrap();
        let (kw, ae) = table(spec.signature.class(), spec.n);
        assert!(dims.lower_le_upper() && !dims.marginal, "{}", spec.label);
        assert!(dims.d_ae_upper <= ae, "{}: d_aE {} > {ae}", spec.label, dims.d_ae_upper);
        assert!(dims.d_nck_upper <= ae * (ae - 1) / 2, "{}", spec.label);
        for p in spec.sample_points(6, 21).unwrap() {
            let k = kernel_of_weyl(&spec, &p).unwrap();
            assert!(k.weyl_norm > 1e-6, "{} is conformally flat at {p:?}", spec.label);
            assert!(k.subspace.dim() <= kw, "{}: ker W {} > {kw}", spec.label, k.subspace.dim());
        }
    }
}

/// The constructed families reach the bounds, so the bounds are sharp.
#[test]
fn constructed_families_are_sharp() {
    for (spec, nck) in [
        (metric("riem_warped", &[("n", "6"), ("sc", "48")]), 3),
        (metric("lorentz_product", &[("n", "6")]), 6),
        (metric("split_product", &[("n", "6"), ("p", "2")]), 10),
    ] {
        let dims = verify_theorem(&TheoremId::Bounds(Box::new(spec.clone())), 9).unwrap().dims.unwrap();
        let (kw, ae) = table(spec.signature.class(), spec.n);
        assert_eq!((dims.d_ae_lower, dims.d_ae_upper), (ae, ae), "{}", spec.label);
        assert_eq!((dims.d_nck_lower, dims.d_nck_upper), (nck, nck), "{}", spec.label);
        let k = kernel_of_weyl(&spec, &spec.default_point).unwrap();
        assert_eq!(k.subspace.dim(), kw, "{}", spec.label);
    }
}

fn fiber_name() -> impl Strategy<Value = &'static str> {
    prop_oneof![
        Just("fubini_study"),
        Just("fubini_study_hyperbolic"),
        Just("taub_nut"),
        Just("pp_wave"),
        Just("pp_split"),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_warped_products_respect_ker_w_bound(
        fiber in fiber_name(),
        base_dim in 1usize..=2,
        negative in 0usize..=2,
        a in 0.5..2.0f64,
        b in -1.0..1.0f64,
        seed in 0u64..1000,
    ) {
        let negative = negative.min(base_dim);
        let ws = WarpedSpec {
            base: pseudo_euclidean(negative, base_dim - negative).unwrap(),
            fiber: metric(fiber, &[]),
            a,
            b,
            negative_branch: false,
        };
        let spec = warped_product(&ws).unwrap();
        let (kw, _) = table(spec.signature.class(), spec.n);
        for p in spec.sample_points(3, seed).unwrap() {
            match kernel_of_weyl(&spec, &p) {
                Ok(k) => {
                    if k.weyl_norm > 1e-6 {
                        prop_assert!(k.subspace.dim() <= kw, "{}: {} > {kw} at {p:?}", spec.label, k.subspace.dim());
                    }
                }
                Err(AnalysisError::BoundViolation { dim, bound, .. }) => {
                    prop_assert!(false, "{}: ker W {dim} > {bound} at {p:?}", spec.label);
                }
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }
}
