use std::time::Instant;

use cgl_core::analysis::{estimate_parallel_dims, verify_theorem, DimConfig, TheoremId};
use cgl_core::geometry::{builtin_metric, pseudo_euclidean, MetricParams, MetricSpec, RiemCase};

fn metric(name: &str, params: &[(&str, &str)]) -> MetricSpec {
    let p: MetricParams = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    builtin_metric(name, &p).unwrap()
}

fn dims(spec: &MetricSpec) -> cgl_core::analysis::DimReport {
    let t = Instant::now();
    let r = estimate_parallel_dims(spec, &spec.default_point, &DimConfig::default()).unwrap();
    eprintln!(
        "{}: aE {}..{} ncK {}..{} marginal {} {:?} ({:.1?})",
        spec.label, r.d_ae_lower, r.d_ae_upper, r.d_nck_lower, r.d_nck_upper, r.marginal, r.discrepancies, t.elapsed()
    );
    r
}

#[test]
fn flat_space_is_maximal() {
    let r = dims(&pseudo_euclidean(0, 4).unwrap());
    assert_eq!((r.d_ae_lower, r.d_ae_upper, r.d_nck_lower, r.d_nck_upper), (6, 6, 15, 15));
    assert!(!r.marginal);
}

#[test]
fn pp_wave_dims() {
    let r = dims(&metric("pp_wave", &[]));
    assert_eq!((r.d_ae_lower, r.d_ae_upper, r.d_nck_lower, r.d_nck_upper), (2, 2, 1, 1));
    assert!(!r.marginal);
}

#[test]
fn pp_split_dims() {
    let r = dims(&metric("pp_split", &[]));
    assert_eq!((r.d_ae_lower, r.d_ae_upper), (3, 3));
    assert_eq!((r.d_nck_lower, r.d_nck_upper), (3, 3));
    assert!(!r.marginal);
    assert_eq!(r.discrepancies.len(), 1);
}

#[test]
fn lorentz_product_dims() {
    let r = dims(&metric("lorentz_product", &[("n", "6")]));
    assert_eq!((r.d_ae_lower, r.d_ae_upper, r.d_nck_lower, r.d_nck_upper), (4, 4, 6, 6));
    assert!(!r.marginal);
}

#[test]
fn warped_families_verify() {
    let ids = vec![
        TheoremId::TRiem { case: RiemCase::A, n: 5 },
        TheoremId::TRiem { case: RiemCase::B, n: 6 },
        TheoremId::TRiem { case: RiemCase::C, n: 5 },
        TheoremId::TLorentz { n: 6 },
        TheoremId::TGen { n: 6, p: 2 },
    ];
    for id in ids {
        let t = Instant::now();
        let r = verify_theorem(&id, 0).unwrap();
        for c in &r.checks {
            eprintln!("  {} {} {:e} {:e} {:?}", if c.passed { "ok " } else { "BAD" }, c.name, c.value, c.tolerance, c.witness);
        }
        eprintln!("{} passed {} ({:.1?})", r.theorem, r.passed, t.elapsed());
        assert!(r.passed);
    }
}
