//! Front end for the `cgl` binary: argument parsing, dispatch and exit codes.
//!
//! Exit code 0 means every check passed, 1 means at least one check failed and
//! 2 means a usage or domain error.

pub mod report;

use std::path::{Path, PathBuf};

use cgl_core::analysis::{
    conformal_law_checks, estimate_parallel_dims, kernel_of_weyl, verify_theorem, AnalysisError, Check, DimConfig,
    TheoremId,
};
use cgl_core::curvature::{
    algebraic_bianchi_residual, cotton_dual, curvature_pack, differential_bianchi_residual, pair_symmetry_residual,
    weyl_trace_residual, CurvatureError,
};
use cgl_core::expr::metric_file::parse_metric_file;
use cgl_core::geometry::{builtin_metric, catalogue, GeometryError, MetricParams, MetricSpec, RiemCase, DOMAIN_MARGIN};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use report::{CatalogueEntry, MetricInfo, PointInvariants, Report};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable holding the default seed.
pub const SEED_VAR: &str = "CGL_SEED";

const IDENTITY_TOL: f64 = 1e-8;
const RICCI_TOL: f64 = 1e-8;
const SCALAR_TOL: f64 = 1e-7;

#[derive(Debug, Parser)]
#[command(name = "cgl", version, about = "Numerical workbench for almost Einstein scales and normal conformal Killing fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print the JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Write the report to a file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Random seed (default: $CGL_SEED or 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the built-in metrics.
    Catalogue,
    /// Curvature invariants and claim checks at a point.
    Analyze {
        /// Catalogue name or path to a metric file.
        metric: String,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
    },
    /// Kernel of the Weyl tensor at a point.
    Kerw {
        metric: String,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
    },
    /// Bounds for d_aE and d_ncK.
    Dims {
        metric: String,
        #[arg(long, allow_hyphen_values = true)]
        base_point: Option<String>,
        /// Number of transported curvature samples.
        #[arg(long)]
        samples: Option<usize>,
        /// Number of holonomy loops.
        #[arg(long)]
        loops: Option<usize>,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
    },
    /// Check a theorem on its constructed metrics.
    Verify {
        /// warped_sol, t_riem, t_lorentz, t_gen, rflat or bounds.
        theorem: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        p: Option<usize>,
        /// Fiber scalar curvature: 48, -48 or 0.
        #[arg(long, allow_hyphen_values = true)]
        sc: Option<f64>,
        /// Metric for rflat and bounds.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
    },
    /// Conformal transformation laws under g -> omega^2 g.
    Rescale {
        metric: String,
        #[arg(long, allow_hyphen_values = true)]
        omega: String,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
    },
}

/// What a run produced: exit code plus the text for stdout and stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<CurvatureError> for Failure {
    fn from(e: CurvatureError) -> Self {
        Failure::Domain(e.to_string())
    }
}

/// Run with `argv` (including the program name) and the given default seed.
pub fn run(argv: &[String], env_seed: Option<&str>) -> Outcome {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            return if code == EXIT_PASS {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let seed = match (cli.seed, env_seed) {
        (Some(s), _) => s,
        (None, Some(text)) => match text.trim().parse() {
            Ok(s) => s,
            Err(_) => return usage(format!("{SEED_VAR} = `{text}` is not an unsigned integer")),
        },
        (None, None) => 0,
    };
    let mut report = Report::new(&argv[1..], seed);
    if let Err(f) = dispatch(&cli.command, seed, &mut report) {
        return match f {
            Failure::Usage(m) => usage(m),
            Failure::Domain(m) => Outcome {
                code: EXIT_USAGE,
                stdout: String::new(),
                stderr: format!("error: {m}\n"),
            },
        };
    }
    report.finish();
    let text = if cli.json { report.to_json() } else { report.render_text() };
    let code = if report.passed { EXIT_PASS } else { EXIT_FAIL };
    match &cli.out {
        Some(path) => match std::fs::write(path, &text) {
            Ok(()) => Outcome { code, stdout: String::new(), stderr: String::new() },
            Err(e) => Outcome {
                code: EXIT_USAGE,
                stdout: String::new(),
                stderr: format!("error: cannot write {}: {e}\n", path.display()),
            },
        },
        None => Outcome { code, stdout: text, stderr: String::new() },
    }
}

fn usage(message: String) -> Outcome {
    Outcome {
        code: EXIT_USAGE,
        stdout: String::new(),
        stderr: format!("error: {message}\n"),
    }
}

fn dispatch(command: &Command, seed: u64, report: &mut Report) -> Result<(), Failure> {
    match command {
        Command::Catalogue => {
            report.catalogue = catalogue()
                .into_iter()
                .map(|(name, description)| CatalogueEntry {
                    name: name.to_string(),
                    description: description.to_string(),
                })
                .collect();
            Ok(())
        }
        Command::Analyze { metric, point, params } => {
            let spec = load_metric(metric, params)?;
            let point = resolve_point(&spec, point.as_deref())?;
            report.metric = Some(metric_info(&spec));
            analyze(&spec, &point, report)
        }
        Command::Kerw { metric, point, params } => {
            let spec = load_metric(metric, params)?;
            let point = resolve_point(&spec, point.as_deref())?;
            report.metric = Some(metric_info(&spec));
            if spec.n < 4 {
                return Err(Failure::Usage(format!("kerw needs n >= 4, {} has n = {}", spec.label, spec.n)));
            }
            let mut inv = invariants(&spec, &point)?;
            match kernel_of_weyl(&spec, &point) {
                Ok(k) => {
                    let bound = spec.signature.class().ker_w_bound(spec.n);
                    report.checks.push(Check {
                        name: format!("dim ker W <= {bound} where |W| > 1e-6"),
                        value: k.subspace.dim() as f64,
                        tolerance: bound as f64,
                        passed: k.bound.is_none_or(|b| k.subspace.dim() <= b),
                        witness: None,
                    });
                    inv.kerw_dim = Some(k.subspace.dim());
                    inv.kerw_basis = k.subspace.basis;
                    inv.kerw_bound = k.bound;
                    inv.kerw_marginal = Some(k.subspace.marginal);
                }
                Err(AnalysisError::BoundViolation { dim, bound, .. }) => {
                    report.checks.push(Check {
                        name: format!("dim ker W <= {bound} where |W| > 1e-6"),
                        value: dim as f64,
                        tolerance: bound as f64,
                        passed: false,
                        witness: Some(format!("{point:?}")),
                    });
                }
                Err(e) => return Err(e.into()),
            }
            report.points.push(inv);
            Ok(())
        }
        Command::Dims {
            metric,
            base_point,
            samples,
            loops,
            params,
        } => {
            let spec = load_metric(metric, params)?;
            let base = resolve_point(&spec, base_point.as_deref())?;
            report.metric = Some(metric_info(&spec));
            let defaults = DimConfig::default();
            let cfg = DimConfig {
                seed,
                num_points: samples.unwrap_or(defaults.num_points),
                num_loops: loops.unwrap_or(defaults.num_loops),
                ..defaults
            };
            let d = estimate_parallel_dims(&spec, &base, &cfg)?;
            report.checks.push(flag("lower bounds do not exceed upper bounds", d.lower_le_upper()));
            report.checks.push(flag("rank decisions stable under tolerance x10 and /10", !d.marginal));
            if let Some(b) = &d.bounds {
                report.checks.push(flag("signature bounds respected", b.ok));
            }
            report.dims = Some(d);
            Ok(())
        }
        Command::Verify {
            theorem,
            n,
            case,
            p,
            sc,
            metric,
            params,
        } => {
            let id = theorem_id(theorem, *n, case.as_deref(), *p, *sc, metric.as_deref(), params, seed)?;
            let t = verify_theorem(&id, seed)?;
            report.theorem = Some(t);
            Ok(())
        }
        Command::Rescale {
            metric,
            omega,
            point,
            params,
        } => {
            let spec = load_metric(metric, params)?;
            let point = resolve_point(&spec, point.as_deref())?;
            report.metric = Some(metric_info(&spec));
            let omega = spec.parse_expr(omega)?;
            report.checks = conformal_law_checks(&spec, &omega, &point)?;
            Ok(())
        }
    }
}

fn flag(name: &str, ok: bool) -> Check {
    Check {
        name: name.to_string(),
        value: ok as u8 as f64,
        tolerance: 1.0,
        passed: ok,
        witness: None,
    }
}

fn parse_params(params: &[String]) -> Result<MetricParams, Failure> {
    let mut out = MetricParams::new();
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("parameter `{p}` is not of the form k=v")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// A catalogue name, or a path to a `conformal-metric v1` file.
pub fn load_metric_spec(name: &str, params: &MetricParams) -> Result<MetricSpec, String> {
    let path = Path::new(name);
    if !path.is_file() {
        return builtin_metric(name, params).map_err(|e| e.to_string());
    }
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {name}: {e}"))?;
    let file = parse_metric_file(&text).map_err(|e| format!("{name}: {e}"))?;
    let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    let mut spec = MetricSpec::from_metric_file(&file, label).map_err(|e| e.to_string())?;
    for (k, v) in params {
        let slot = spec
            .params
            .get_mut(k)
            .ok_or_else(|| format!("{name} declares no parameter `{k}`"))?;
        *slot = v.parse().map_err(|_| format!("{k} = `{v}` is not a number"))?;
    }
    Ok(spec)
}

fn load_metric(name: &str, params: &[String]) -> Result<MetricSpec, Failure> {
    let params = parse_params(params)?;
    load_metric_spec(name, &params).map_err(Failure::Domain)
}

fn resolve_point(spec: &MetricSpec, text: Option<&str>) -> Result<Vec<f64>, Failure> {
    let point = match text {
        None => spec.default_point.clone(),
        Some(t) => t
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure::Usage(format!("malformed point `{t}`")))?,
    };
    if point.len() != spec.n {
        return Err(Failure::Usage(format!(
            "point has {} coordinates, {} needs {}",
            point.len(),
            spec.label,
            spec.n
        )));
    }
    spec.check_point(&point, DOMAIN_MARGIN)?;
    Ok(point)
}

fn metric_info(spec: &MetricSpec) -> MetricInfo {
    MetricInfo {
        label: spec.label.clone(),
        n: spec.n,
        signature: spec.signature,
        params: spec.params.clone(),
        coordinates: spec.coordinate_names.clone(),
    }
}

fn invariants(spec: &MetricSpec, point: &[f64]) -> Result<PointInvariants, Failure> {
    let pack = curvature_pack(spec, point)?;
    let cotton_dual = if spec.n == 3 { Some(cotton_dual(&pack)?) } else { None };
    Ok(PointInvariants {
        point: point.to_vec(),
        scalar: pack.scalar,
        ricci_norm: pack.ricci_norm(),
        weyl_norm: pack.weyl_norm(),
        cotton_norm: pack.cotton_norm(),
        kerw_dim: None,
        kerw_basis: Vec::new(),
        kerw_bound: None,
        kerw_marginal: None,
        cotton_dual,
    })
}

fn analyze(spec: &MetricSpec, point: &[f64], report: &mut Report) -> Result<(), Failure> {
    let pack = curvature_pack(spec, point)?;
    let mut inv = invariants(spec, point)?;
    if spec.n >= 4 {
        match kernel_of_weyl(spec, point) {
            Ok(k) => {
                inv.kerw_dim = Some(k.subspace.dim());
                inv.kerw_basis = k.subspace.basis;
                inv.kerw_bound = k.bound;
                inv.kerw_marginal = Some(k.subspace.marginal);
            }
            Err(AnalysisError::BoundViolation { dim, bound, .. }) => {
                inv.kerw_dim = Some(dim);
                report.checks.push(Check {
                    name: format!("dim ker W <= {bound}"),
                    value: dim as f64,
                    tolerance: bound as f64,
                    passed: false,
                    witness: None,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let checks = &mut report.checks;
    checks.push(Check::below("pair symmetry", pair_symmetry_residual(&pack), IDENTITY_TOL, None));
    checks.push(Check::below("algebraic Bianchi identity", algebraic_bianchi_residual(&pack), IDENTITY_TOL, None));
    checks.push(Check::below("Weyl tensor trace-free", weyl_trace_residual(&pack), IDENTITY_TOL, None));
    checks.push(Check::below(
        "differential Bianchi identity",
        differential_bianchi_residual(spec, point)?,
        IDENTITY_TOL,
        None,
    ));
    let claims = &spec.claims;
    if claims.ricci_flat {
        checks.push(Check::below("claimed Ricci-flat: |Ric|", pack.ricci_norm(), RICCI_TOL, None));
    } else if claims.einstein {
        let n = spec.n;
        let mut tf = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                tf[a * n + b] = pack.ricci.get(&[a, b]) - pack.scalar / n as f64 * pack.metric.get(&[a, b]);
            }
        }
        let norm = cgl_core::curvature::frobenius(&tf);
        checks.push(Check::below("claimed Einstein: |Ric - Sc g / n|", norm, RICCI_TOL, None));
    }
    if let Some(sc) = claims.scalar {
        checks.push(Check::below(
            format!("claimed scalar curvature {sc}: |Sc - {sc}|"),
            (pack.scalar - sc).abs(),
            SCALAR_TOL,
            None,
        ));
    }
    report.points.push(inv);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn theorem_id(
    theorem: &str,
    n: Option<usize>,
    case: Option<&str>,
    p: Option<usize>,
    sc: Option<f64>,
    metric: Option<&str>,
    params: &[String],
    seed: u64,
) -> Result<TheoremId, Failure> {
    let bad = |m: String| Failure::Usage(m);
    let riem_case = || -> Result<RiemCase, Failure> {
        match (case, sc) {
            (Some(c), _) => RiemCase::from_letter(c).map_err(|e| bad(e.to_string())),
            (None, Some(s)) => RiemCase::from_scalar(s).map_err(|e| bad(e.to_string())),
            (None, None) => Err(bad("t_riem needs --case a|b|c or --sc 48|-48|0".to_string())),
        }
    };
    let metric_spec = || -> Result<Box<MetricSpec>, Failure> {
        let name = metric.ok_or_else(|| bad(format!("{theorem} needs --metric")))?;
        Ok(Box::new(load_metric(name, params)?))
    };
    Ok(match theorem {
        "warped_sol" => {
            let n = n.unwrap_or(5);
            let case = if case.is_none() && sc.is_none() { RiemCase::A } else { riem_case()? };
            let (a, b) = case.warp();
            // aB = -bA with A = 1
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = (0..n.saturating_sub(4)).map(|_| rng.random_range(-1.0..1.0)).collect();
            TheoremId::WarpedSol {
                n,
                base_negative: p.unwrap_or(0),
                a,
                b,
                big_a: 1.0,
                big_b: -b / a,
                c,
            }
        }
        "t_riem" => TheoremId::TRiem {
            case: riem_case()?,
            n: n.unwrap_or(5),
        },
        "t_lorentz" => TheoremId::TLorentz { n: n.unwrap_or(5) },
        "t_gen" => TheoremId::TGen {
            n: n.unwrap_or(6),
            p: p.unwrap_or(2),
        },
        "rflat" => TheoremId::RFlat(metric_spec()?),
        "bounds" => TheoremId::Bounds(metric_spec()?),
        other => {
            return Err(bad(format!(
                "unknown theorem `{other}` (expected warped_sol, t_riem, t_lorentz, t_gen, rflat or bounds)"
            )))
        }
    })
}
