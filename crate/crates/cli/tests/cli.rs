use std::path::PathBuf;
use std::process::Command;

use cgl_cli::{run, Outcome, EXIT_FAIL, EXIT_PASS, EXIT_USAGE, SEED_VAR};
use serde_json::Value;

fn cgl(args: &[&str]) -> Outcome {
    let mut argv = vec!["cgl".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(&argv, None)
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn json(out: &Outcome) -> Value {
    serde_json::from_str(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", out.stdout))
}

#[test]
fn catalogue_lists_every_builtin() {
    let out = cgl(&["catalogue", "--json"]);
    assert_eq!(out.code, EXIT_PASS);
    let names: Vec<String> = json(&out)["catalogue"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap().to_string())
        .collect();
    for name in ["fubini_study", "fubini_study_hyperbolic", "taub_nut", "pp_wave", "pp_split", "lorentz3d"] {
        assert!(names.iter().any(|n| n == name), "{name} missing from {names:?}");
    }
}

#[test]
fn fubini_study_scalar_curvature() {
    let out = cgl(&["analyze", "fubini_study", "--point", "0.3,0.7,0.5,0.9", "--json"]);
    assert_eq!(out.code, EXIT_PASS, "{}", out.stderr);
    let v = json(&out);
    assert!((v["points"][0]["scalar"].as_f64().unwrap() - 48.0).abs() < 1e-8);
}

#[test]
fn pp_wave_analysis_fields() {
    let out = cgl(&["analyze", "pp_wave", "--point", "0,1,0,0", "--json"]);
    assert_eq!(out.code, EXIT_PASS, "{}", out.stderr);
    let v = json(&out);
    let p = &v["points"][0];
    assert!(p["ricci_norm"].as_f64().unwrap() < 1e-8);
    assert!(p["weyl_norm"].as_f64().unwrap() > 1e-3);
    assert_eq!(p["kerw_dim"].as_u64(), Some(1));
    assert_eq!(v["schema"], "conformal-gap-lab/1");
    assert_eq!(v["metric"]["label"], "pp_wave");
    for c in v["checks"].as_array().unwrap() {
        assert!(c["tolerance"].is_number(), "{c}");
    }
}

#[test]
fn wrong_einstein_claim_fails() {
    let out = cgl(&["analyze", &data("wrong_einstein.cgm")]);
    assert_eq!(out.code, EXIT_FAIL);
    assert!(out.stdout.contains("FAIL claimed Einstein"), "{}", out.stdout);
    assert!(out.stdout.ends_with("result: FAIL\n"));
}

#[test]
fn metric_file_claims_and_params() {
    let file = data("round_sphere_chart.cgm");
    assert_eq!(cgl(&["analyze", &file]).code, EXIT_PASS);
    // Sc = 12 / r², so the scalar claim breaks when r changes
    let out = cgl(&["analyze", &file, "--param", "r=2", "--json"]);
    assert_eq!(out.code, EXIT_FAIL);
    assert!((json(&out)["points"][0]["scalar"].as_f64().unwrap() - 3.0).abs() < 1e-9);
}

#[test]
fn usage_and_domain_errors() {
    let cases: &[&[&str]] = &[
        &["analyze", "no_such_metric"],
        &["analyze", "pp_wave", "--point", "0,1,0"],
        &["analyze", "pp_wave", "--point", "0,one,0,0"],
        &["analyze", "pp_wave", "--param", "oops"],
        &["verify", "no_such_theorem"],
        &["verify", "t_riem"],
        &["verify", "t_riem", "--case", "d"],
        &["verify", "rflat"],
        &["kerw", "lorentz3d"],
        &["rescale", "taub_nut", "--omega", "exp(x1"],
        &["frobnicate"],
        &[],
    ];
    for args in cases {
        let out = cgl(args);
        assert_eq!(out.code, EXIT_USAGE, "{args:?}: {}", out.stdout);
        assert!(!out.stderr.is_empty(), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
    }
    let out = run(&["cgl".to_string(), "catalogue".to_string()], Some("minus one"));
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains(SEED_VAR));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cgl(&["--help"]).code, EXIT_PASS);
    assert!(cgl(&["--version"]).stdout.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn verify_prints_verdict() {
    let out = cgl(&["verify", "t_riem", "--case", "b", "--n", "5"]);
    assert_eq!(out.code, EXIT_PASS, "{}", out.stdout);
    assert!(out.stdout.starts_with("PASS: t_riem(case b, n = 5): d_aE = 2\n"), "{}", out.stdout);
    let by_scalar = cgl(&["verify", "t_riem", "--sc", "-48", "--n", "5"]);
    assert_eq!(by_scalar.stdout, out.stdout);
}

#[test]
fn rescale_preserves_invariants() {
    let out = cgl(&["rescale", "taub_nut", "--omega", "exp(0.2*x1)", "--point", "0.4,0.3,0.2,0.1", "--json"]);
    assert_eq!(out.code, EXIT_PASS, "{}", out.stdout);
    assert!(json(&out)["checks"].as_array().unwrap().len() >= 5);
}

#[test]
fn dims_json_is_deterministic() {
    let args = ["dims", "pp_wave", "--samples", "4", "--loops", "4", "--seed", "7", "--json"];
    let first = cgl(&args);
    assert_eq!(first.code, EXIT_PASS, "{}", first.stderr);
    assert_eq!(first.stdout, cgl(&args).stdout);
    let v = json(&first);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["dims"]["d_ae_upper"], 2);
    assert_eq!(v["dims"]["d_nck_upper"], 1);
}

#[test]
fn seed_from_environment() {
    let argv: Vec<String> = ["cgl", "catalogue", "--json"].iter().map(|s| s.to_string()).collect();
    assert_eq!(json(&run(&argv, Some("42")))["seed"], 42);
    let mut flagged = argv.clone();
    flagged.extend(["--seed".to_string(), "3".to_string()]);
    assert_eq!(json(&run(&flagged, Some("42")))["seed"], 3);
}

#[test]
fn out_flag_writes_file() {
    let path = std::env::temp_dir().join(format!("cgl-out-{}.json", std::process::id()));
    let p = path.display().to_string();
    let out = cgl(&["analyze", "taub_nut", "--json", "--out", &p]);
    assert_eq!(out.code, EXIT_PASS);
    assert!(out.stdout.is_empty());
    let mut written: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(written["command"][4], p.as_str());
    let mut direct = json(&cgl(&["analyze", "taub_nut", "--json"]));
    written["command"] = Value::Null;
    direct["command"] = Value::Null;
    assert_eq!(written, direct);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_cgl");
    let status = |args: &[&str]| Command::new(bin).args(args).env_remove(SEED_VAR).output().unwrap().status.code();
    assert_eq!(status(&["analyze", "fubini_study_hyperbolic"]), Some(EXIT_PASS));
    assert_eq!(status(&["analyze", &data("wrong_einstein.cgm")]), Some(EXIT_FAIL));
    assert_eq!(status(&["analyze", "nowhere"]), Some(EXIT_USAGE));
    let out = Command::new(bin).args(["catalogue", "--json"]).env(SEED_VAR, "11").output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 11);
}

#[test]
fn warped_solutions_across_dimensions() {
    for n in ["5", "6", "7", "8"] {
        for case in ["a", "b", "c"] {
            let out = cgl(&["verify", "warped_sol", "--n", n, "--case", case]);
            assert_eq!(out.code, EXIT_PASS, "n = {n}, case {case}: {}{}", out.stdout, out.stderr);
        }
    }
    let out = cgl(&["verify", "warped_sol", "--n", "6", "--p", "1"]);
    assert_eq!(out.code, EXIT_PASS, "{}{}", out.stdout, out.stderr);
}
