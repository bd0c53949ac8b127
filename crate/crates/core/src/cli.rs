//! Command-line front end: catalog listing, configuration merging,
//! command dispatch, and JSON reporting with an assertion mode for CI.
//!
//! Exit codes: 0 success, 1 usage/parse error, 2 numerical failure,
//! 3 assertion failure (`--assert` with a residual over tolerance).

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    flag_curvature, funk_residual, identity_suite, isotropy_decompose, obstruction_chain,
    verify_phiphi0,
};
use crate::catalog::{candidate_field, catalog, entry, metric_field, EntryKind};
use crate::error::{Error, Result};
use crate::expr::{compile, parse};
use crate::field::ScalarField;
use crate::geometry::{flat_spray, geodesic_spray, metric_tensor, Spray};
use crate::jets::PhasePoint;
use crate::sampling::{sample_points, SampleDomain};
use crate::search::{search_funk, SearchConfig};

const SAMPLE_ROW_CAP: usize = 1000;

#[derive(Parser)]
#[command(
    name = "sprays",
    version,
    about = "Spray/Finsler geometry toolkit: curvature reports, Funk-equation residuals, and a Funk-function search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Metric report: flag curvature, isotropy decomposition, regularity.
    Analyze(CommonArgs),
    /// Residuals of the Funk equation d_h P = P d_J P for a candidate P.
    FunkCheck(CommonArgs),
    /// Compare the deformed Jacobi endomorphism against its closed form.
    Deform(CommonArgs),
    /// Residuals of the derivation identities on a spray.
    Identities(CommonArgs),
    /// The obstruction-chain report for a curved metric and candidate.
    Chain(CommonArgs),
    /// Least-squares search for a Funk function over a rational ansatz.
    Search(SearchArgs),
    /// List the built-in metrics and candidates.
    Catalog(CatalogArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Built-in metric name (see `catalog`).
    #[arg(long)]
    metric: Option<String>,
    /// Metric as an expression in x1..xn, y1..yn.
    #[arg(long)]
    metric_expr: Option<String>,
    /// Built-in candidate name (see `catalog`).
    #[arg(long)]
    candidate: Option<String>,
    /// Candidate as an expression; `F` refers to the active metric.
    #[arg(long)]
    candidate_expr: Option<String>,
    /// Dimension of the base manifold (2..=4).
    #[arg(long)]
    n: Option<usize>,
    /// Number of phase-space samples.
    #[arg(long)]
    samples: Option<usize>,
    /// PRNG seed; fixed seed gives a byte-identical report.
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling domain, e.g. "x:box:1.0;y:0.5,2" or "x:ball:0.6;y:0.5,2".
    #[arg(long)]
    domain: Option<String>,
    /// Also write the JSON report to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Exit 3 when any checked residual exceeds its tolerance.
    #[arg(long = "assert")]
    assert_mode: bool,
    /// Tolerance override, NAME=VALUE; repeatable.
    #[arg(long = "tol")]
    tol: Vec<String>,
    /// Config file with [metric]/[sampling]/[tolerances] sections;
    /// command-line flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scale for the `cF` candidate.
    #[arg(long)]
    c: Option<f64>,
    /// Base factor a(x) for the `aF` candidate, as an expression.
    #[arg(long)]
    a: Option<String>,
    /// Declared homogeneity degree of `--metric-expr`/`--candidate-expr`
    /// (verified by sampling).
    #[arg(long)]
    degree: Option<i32>,
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of random restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// Iteration cap per restart.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Clone)]
struct CatalogArgs {
    /// Also write the JSON report to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// The fully merged run configuration, echoed into every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub metric: Option<String>,
    pub metric_expr: Option<String>,
    pub candidate: Option<String>,
    pub candidate_expr: Option<String>,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub domain: Option<String>,
    pub resolved_domain: SampleDomain,
    pub c: f64,
    pub a: String,
    pub degree: Option<i32>,
    pub tolerances: BTreeMap<String, f64>,
    pub assert_mode: bool,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Serialize)]
pub struct Report {
    pub version: &'static str,
    pub command: String,
    pub config: RunConfig,
    pub summary: Value,
    pub samples: Value,
    pub verdict: Verdict,
}

fn usage(message: impl Into<String>) -> Error {
    Error::Parse {
        offset: 0,
        message: message.into(),
    }
}

/// Flat `key = value` text with `[section]` headers.
fn parse_config_file(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            out.entry(section.clone()).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!(
                "config line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        if section.is_empty() {
            return Err(usage(format!(
                "config line {}: `key = value` before any [section]",
                lineno + 1
            )));
        }
        out.entry(section.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse_tol(spec: &str) -> Result<(String, f64)> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("--tol expects NAME=VALUE, got {spec:?}")))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| usage(format!("--tol {name}: {value:?} is not a number")))?;
    Ok((name.trim().to_string(), v))
}

/// Parse "x:box:R" / "x:ball:R" / "y:MIN,MAX" segments joined by ';'.
fn parse_domain(spec: &str, base: SampleDomain) -> Result<SampleDomain> {
    let mut d = base;
    for seg in spec.split(';') {
        let seg = seg.trim();
        if seg.is_empty() {
            continue;
        }
        if let Some(rest) = seg.strip_prefix("x:") {
            if let Some(r) = rest.strip_prefix("box:") {
                let r: f64 = r
                    .parse()
                    .map_err(|_| usage(format!("bad box radius in domain segment {seg:?}")))?;
                d.x_box = r;
                d.x_ball = None;
            } else if let Some(r) = rest.strip_prefix("ball:") {
                let r: f64 = r
                    .parse()
                    .map_err(|_| usage(format!("bad ball radius in domain segment {seg:?}")))?;
                d.x_box = r;
                d.x_ball = Some(r);
            } else {
                return Err(usage(format!(
                    "domain segment {seg:?}: expected x:box:R or x:ball:R"
                )));
            }
        } else if let Some(rest) = seg.strip_prefix("y:") {
            let (lo, hi) = rest
                .split_once(',')
                .ok_or_else(|| usage(format!("domain segment {seg:?}: expected y:MIN,MAX")))?;
            let lo: f64 = lo
                .parse()
                .map_err(|_| usage(format!("bad y minimum in domain segment {seg:?}")))?;
            let hi: f64 = hi
                .parse()
                .map_err(|_| usage(format!("bad y maximum in domain segment {seg:?}")))?;
            if !(lo > 0.0 && hi > lo) {
                return Err(usage(format!(
                    "domain segment {seg:?}: need 0 < MIN < MAX"
                )));
            }
            d.y_min = lo;
            d.y_max = hi;
        } else {
            return Err(usage(format!(
                "domain segment {seg:?}: expected an x: or y: prefix"
            )));
        }
    }
    Ok(d)
}

fn merge_config(mut args: CommonArgs) -> Result<CommonArgs> {
    let Some(path) = args.config.clone() else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let file = parse_config_file(&text)?;
    let get = |section: &str, key: &str| -> Option<&String> {
        file.get(section).and_then(|m| m.get(key))
    };
    let parse_num = |section: &str, key: &str, value: &str| -> Result<f64> {
        value
            .parse()
            .map_err(|_| usage(format!("config [{section}] {key}: {value:?} is not a number")))
    };
    if args.metric.is_none() {
        args.metric = get("metric", "metric").cloned();
    }
    if args.metric_expr.is_none() {
        args.metric_expr = get("metric", "metric-expr").cloned();
    }
    if args.candidate.is_none() {
        args.candidate = get("metric", "candidate").cloned();
    }
    if args.candidate_expr.is_none() {
        args.candidate_expr = get("metric", "candidate-expr").cloned();
    }
    if args.n.is_none() {
        if let Some(v) = get("metric", "n") {
            args.n = Some(parse_num("metric", "n", v)? as usize);
        }
    }
    if args.c.is_none() {
        if let Some(v) = get("metric", "c") {
            args.c = Some(parse_num("metric", "c", v)?);
        }
    }
    if args.a.is_none() {
        args.a = get("metric", "a").cloned();
    }
    if args.degree.is_none() {
        if let Some(v) = get("metric", "degree") {
            args.degree = Some(parse_num("metric", "degree", v)? as i32);
        }
    }
    if args.samples.is_none() {
        if let Some(v) = get("sampling", "samples") {
            args.samples = Some(parse_num("sampling", "samples", v)? as usize);
        }
    }
    if args.seed.is_none() {
        if let Some(v) = get("sampling", "seed") {
            args.seed = Some(parse_num("sampling", "seed", v)? as u64);
        }
    }
    if args.domain.is_none() {
        args.domain = get("sampling", "domain").cloned();
    }
    if let Some(tols) = file.get("tolerances") {
        let explicit: Vec<String> = args
            .tol
            .iter()
            .filter_map(|s| s.split_once('=').map(|(k, _)| k.trim().to_string()))
            .collect();
        for (k, v) in tols {
            if !explicit.iter().any(|e| e == k) {
                args.tol.push(format!("{k}={v}"));
            }
        }
    }
    Ok(args)
}

/// Everything resolved from the merged arguments: the metric field (when
/// any), the active spray, the candidate, the sample list, and the config
/// echo for the report.
struct Resolved {
    f: Option<ScalarField>,
    spray: Spray,
    candidate: Option<ScalarField>,
    points: Vec<PhasePoint>,
    config: RunConfig,
}

fn verify_declared_homogeneity(field: &ScalarField, what: &str) -> Result<()> {
    let domain = field.sample_domain();
    for q in sample_points(&domain, field.n(), 25, 0x0E11E2) {
        if !field.in_domain(&q) {
            continue;
        }
        if let Some(r) = field.euler_residual(&q)? {
            if r > 1e-6 {
                return Err(Error::Degenerate(format!(
                    "{what}: declared homogeneity fails the Euler check (residual {r:.3e} at x={:?}, y={:?})",
                    q.x(),
                    q.y()
                )));
            }
        }
    }
    Ok(())
}

fn resolve(args: &CommonArgs, need_candidate: bool) -> Result<Resolved> {
    let n = args.n.unwrap_or(2);
    if !(2..=4).contains(&n) {
        return Err(usage(format!("--n must be in 2..=4, got {n}")));
    }
    let samples = args.samples.unwrap_or(200);
    if samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let seed = args.seed.unwrap_or(42);
    let c = args.c.unwrap_or(1.0);
    let a = args.a.clone().unwrap_or_else(|| "1".to_string());
    let mut tolerances = BTreeMap::new();
    for spec in &args.tol {
        let (name, value) = parse_tol(spec)?;
        tolerances.insert(name, value);
    }

    if args.metric.is_some() && args.metric_expr.is_some() {
        return Err(usage("--metric and --metric-expr are mutually exclusive"));
    }
    if args.candidate.is_some() && args.candidate_expr.is_some() {
        return Err(usage(
            "--candidate and --candidate-expr are mutually exclusive",
        ));
    }

    let metric_name = args
        .metric
        .clone()
        .or_else(|| args.metric_expr.is_none().then(|| "flat".to_string()));
    let (f, spray) = match (&metric_name, &args.metric_expr) {
        (Some(name), None) => {
            if entry(name).map(|e| e.kind) != Some(EntryKind::Metric) {
                return Err(usage(format!(
                    "unknown metric {name:?}; see `sprays catalog`"
                )));
            }
            let f = metric_field(name, n)?;
            let spray = if name == "flat" {
                flat_spray(n)
            } else {
                geodesic_spray(&f)
            };
            (Some(f), spray)
        }
        (None, Some(src)) => {
            let ast = parse(src, n, false)?;
            let degree = args.degree.unwrap_or(1);
            let f = compile(&ast, n, None)?.with_homogeneity(degree);
            verify_declared_homogeneity(&f, "--metric-expr")?;
            let spray = geodesic_spray(&f);
            (Some(f), spray)
        }
        _ => unreachable!("metric_name defaults to flat"),
    };

    let candidate = match (&args.candidate, &args.candidate_expr) {
        (Some(name), None) => Some(candidate_field(name, n, f.as_ref(), c, &a)?),
        (None, Some(src)) => {
            let ast = parse(src, n, true)?;
            let degree = args.degree.unwrap_or(1);
            let p = compile(&ast, n, f.as_ref())?.with_homogeneity(degree);
            verify_declared_homogeneity(&p, "--candidate-expr")?;
            Some(p)
        }
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("checked above"),
    };
    if need_candidate && candidate.is_none() {
        return Err(usage("this command needs --candidate or --candidate-expr"));
    }

    let mut domain = spray.domain;
    if let Some(p) = &candidate {
        domain = domain.intersect(&p.sample_domain());
    }
    if let Some(spec) = &args.domain {
        domain = parse_domain(spec, domain)?;
    }
    let mut points = sample_points(&domain, n, samples, seed);
    points.retain(|q| {
        f.as_ref().map(|f| f.in_domain(q)).unwrap_or(true)
            && candidate.as_ref().map(|p| p.in_domain(q)).unwrap_or(true)
    });
    if points.is_empty() {
        return Err(Error::Domain(
            "no sample point lies in the fields' domain".into(),
        ));
    }

    let config = RunConfig {
        metric: metric_name,
        metric_expr: args.metric_expr.clone(),
        candidate: args.candidate.clone(),
        candidate_expr: args.candidate_expr.clone(),
        n,
        samples,
        seed,
        domain: args.domain.clone(),
        resolved_domain: domain,
        c,
        a,
        degree: args.degree,
        tolerances,
        assert_mode: args.assert_mode,
        restarts: None,
        max_iter: None,
    };
    Ok(Resolved {
        f,
        spray,
        candidate,
        points,
        config,
    })
}

fn tol(config: &RunConfig, name: &str, default: f64) -> f64 {
    config.tolerances.get(name).copied().unwrap_or(default)
}

fn check(name: &str, value: f64, tolerance: f64) -> Check {
    Check {
        name: name.to_string(),
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

fn verdict(checks: Vec<Check>) -> Verdict {
    Verdict {
        pass: checks.iter().all(|c| c.pass),
        checks,
    }
}

fn cap_samples(mut rows: Value) -> Value {
    if let Value::Array(a) = &mut rows {
        a.truncate(SAMPLE_ROW_CAP);
    }
    rows
}

fn to_rows<T: Serialize>(rows: &[T]) -> Result<Value> {
    Ok(cap_samples(serde_json::to_value(rows)?))
}

fn cmd_analyze(args: &CommonArgs) -> Result<Report> {
    let r = resolve(args, false)?;
    let f = r
        .f
        .as_ref()
        .ok_or_else(|| usage("analyze needs --metric or --metric-expr"))?;
    let flag = flag_curvature(f, &r.points, Some(r.config.seed))?;
    let iso = isotropy_decompose(&r.spray, &r.points, Some(r.config.seed))?;
    let mut max_condition = 0.0_f64;
    for q in r.points.iter().take(25) {
        max_condition = max_condition.max(metric_tensor(f, q)?.condition);
    }
    let expected = r
        .config
        .metric
        .as_deref()
        .and_then(entry)
        .and_then(|e| e.expected_kappa.map(|k| (k, e.kappa_tol.unwrap_or(1e-6))));
    let mut checks = vec![check(
        "flag_model_residual",
        flag.max_residual / flag.scale,
        tol(&r.config, "residual", 1e-6),
    )];
    if let Some((kappa, default_tol)) = expected {
        let dev = (flag.kappa_min - kappa)
            .abs()
            .max((flag.kappa_max - kappa).abs());
        checks.push(check("kappa_deviation", dev, tol(&r.config, "kappa", default_tol)));
    }
    checks.push(check(
        "isotropy_residual",
        iso.max_residual,
        tol(&r.config, "isotropy", 1e-6),
    ));
    let summary = json!({
        "provenance": r.spray.provenance.to_string(),
        "max_metric_condition": max_condition,
        "kappa_min": flag.kappa_min,
        "kappa_max": flag.kappa_max,
        "kappa_mean": flag.kappa_mean,
        "flag_model_residual": flag.max_residual,
        "flag_scale": flag.scale,
        "expected_kappa": expected.map(|(k, _)| k),
        "isotropy_max_residual": iso.max_residual,
        "isotropy_max_alpha_s_mismatch": iso.max_alpha_s_mismatch,
        "sample_count": flag.sample_count,
    });
    Ok(Report {
        version: crate::VERSION,
        command: "analyze".into(),
        summary,
        samples: to_rows(&flag.samples)?,
        verdict: verdict(checks),
        config: r.config,
    })
}

fn cmd_funk_check(args: &CommonArgs) -> Result<Report> {
    let r = resolve(args, true)?;
    let p = r.candidate.as_ref().unwrap();
    let report = funk_residual(&r.spray, p, &r.points, Some(r.config.seed))?;
    let checks = vec![check(
        "funk_sup_residual",
        report.sup_norm,
        tol(&r.config, "sup", 1e-8),
    )];
    let summary = json!({
        "provenance": r.spray.provenance.to_string(),
        "sup_norm": report.sup_norm,
        "rms": report.rms,
        "scale": report.scale,
        "sample_count": report.sample_count,
    });
    Ok(Report {
        version: crate::VERSION,
        command: "funk-check".into(),
        summary,
        samples: to_rows(&report.samples)?,
        verdict: verdict(checks),
        config: r.config,
    })
}

fn cmd_deform(args: &CommonArgs) -> Result<Report> {
    let r = resolve(args, true)?;
    let p = r.candidate.as_ref().unwrap();
    let report = verify_phiphi0(&r.spray, p, &r.points, Some(r.config.seed))?;
    let checks = vec![check(
        "deform_rel_diff",
        report.max_rel_diff,
        tol(&r.config, "rel", 1e-7),
    )];
    let summary = json!({
        "provenance": r.spray.provenance.to_string(),
        "max_rel_diff": report.max_rel_diff,
        "sample_count": report.sample_count,
    });
    Ok(Report {
        version: crate::VERSION,
        command: "deform".into(),
        summary,
        samples: to_rows(&report.samples)?,
        verdict: verdict(checks),
        config: r.config,
    })
}

/// Three stock test fields for the identity suite: the metric itself,
/// a linear fiber form, and an x-weighted quadratic.
pub fn identity_test_fields(n: usize, f: Option<&ScalarField>) -> Result<Vec<(String, ScalarField)>> {
    let metric = match f {
        Some(f) => f.clone(),
        None => metric_field("euclidean", n)?,
    };
    let linear_src = (1..=n)
        .map(|i| format!("{}*y{i}", 1.0 + 0.5 * (i as f64 - 1.0)))
        .collect::<Vec<_>>()
        .join("+");
    let linear = compile(&parse(&linear_src, n, false)?, n, None)?.with_homogeneity(1);
    let quad_src = "(1+x1^2)*y1*y2 + x2*y1^2";
    let quad = compile(&parse(quad_src, n, false)?, n, None)?;
    Ok(vec![
        ("F".to_string(), metric),
        ("linear".to_string(), linear),
        ("quadratic".to_string(), quad),
    ])
}

fn cmd_identities(args: &CommonArgs) -> Result<Report> {
    let r = resolve(args, false)?;
    let fields = identity_test_fields(r.config.n, r.f.as_ref())?;
    let report = identity_suite(&r.spray, &fields, &r.points, Some(r.config.seed))?;
    let tolerance = tol(&r.config, "identity", 1e-8);
    let mut checks = Vec::new();
    for row in &report.rows {
        checks.push(check(
            &format!("{}:anticommutator", row.field),
            row.anticommutator,
            tolerance,
        ));
        checks.push(check(
            &format!("{}:d_h_squared", row.field),
            row.d_h_squared,
            tolerance,
        ));
        checks.push(check(
            &format!("{}:three_d_r", row.field),
            row.three_d_r,
            tolerance,
        ));
        if let Some(v) = row.interior_d_r {
            checks.push(check(&format!("{}:interior_d_r", row.field), v, tolerance));
        }
    }
    let summary = json!({
        "provenance": r.spray.provenance.to_string(),
        "rows": serde_json::to_value(&report.rows)?,
        "sample_count": report.sample_count,
    });
    Ok(Report {
        version: crate::VERSION,
        command: "identities".into(),
        summary,
        samples: Value::Array(vec![]),
        verdict: verdict(checks),
        config: r.config,
    })
}

fn cmd_chain(args: &CommonArgs) -> Result<Report> {
    let r = resolve(args, true)?;
    let f = r
        .f
        .as_ref()
        .ok_or_else(|| usage("chain needs --metric or --metric-expr"))?;
    let p = r.candidate.as_ref().unwrap();
    let report = obstruction_chain(f, p, &r.points, Some(r.config.seed))?;
    let mut checks = Vec::new();
    if let Some(t) = r.config.tolerances.get("d_j_p_over_f") {
        checks.push(check("d_j_p_over_f", report.sup_d_j_p_over_f, *t));
    }
    if let Some(t) = r.config.tolerances.get("fiber_variance") {
        checks.push(check("fiber_variance", report.max_fiber_variance, *t));
    }
    let summary = serde_json::to_value(&report)?;
    let summary = {
        let mut m = summary;
        if let Value::Object(o) = &mut m {
            o.remove("samples");
        }
        m
    };
    Ok(Report {
        version: crate::VERSION,
        command: "chain".into(),
        summary,
        samples: to_rows(&report.samples)?,
        verdict: verdict(checks),
        config: r.config,
    })
}

fn cmd_search(args: &SearchArgs) -> Result<Report> {
    let r = resolve(&args.common, false)?;
    let mut config = r.config;
    let search_config = SearchConfig {
        restarts: args.restarts.unwrap_or(16),
        max_iter: args.max_iter.unwrap_or(200),
        seed: config.seed,
        samples: config.samples,
    };
    config.restarts = Some(search_config.restarts);
    config.max_iter = Some(search_config.max_iter);
    let mut spray = r.spray;
    // The rational ansatz needs denominators bounded away from zero, so
    // unless a domain was given explicitly, restrict to the default ball.
    if args.common.domain.is_none() && config.domain.is_none() {
        config.resolved_domain = config.resolved_domain.intersect(&SampleDomain::default());
    }
    spray.domain = config.resolved_domain;
    let result = search_funk(&spray, &search_config)?;
    let mut checks = Vec::new();
    if let Some(t) = config.tolerances.get("val_rms") {
        checks.push(check("val_rms", result.validation_rms, *t));
    }
    let summary = serde_json::to_value(&result)?;
    Ok(Report {
        version: crate::VERSION,
        command: "search".into(),
        summary,
        samples: Value::Array(vec![]),
        verdict: verdict(checks),
        config,
    })
}

fn cmd_catalog() -> Result<Report> {
    let entries = catalog();
    let config = RunConfig {
        metric: None,
        metric_expr: None,
        candidate: None,
        candidate_expr: None,
        n: 2,
        samples: 0,
        seed: 0,
        domain: None,
        resolved_domain: SampleDomain::default(),
        c: 1.0,
        a: "1".into(),
        degree: None,
        tolerances: BTreeMap::new(),
        assert_mode: false,
        restarts: None,
        max_iter: None,
    };
    Ok(Report {
        version: crate::VERSION,
        command: "catalog".into(),
        config,
        summary: serde_json::to_value(&entries)?,
        samples: Value::Array(vec![]),
        verdict: verdict(vec![]),
    })
}

fn emit(report: &Report, json_path: Option<&PathBuf>) -> Result<i32> {
    let text = format!("{}\n", serde_json::to_string_pretty(report)?);
    print!("{text}");
    if let Some(path) = json_path {
        std::fs::write(path, &text)
            .map_err(|e| Error::Domain(format!("cannot write {}: {e}", path.display())))?;
    }
    if report.config.assert_mode && !report.verdict.pass {
        return Ok(3);
    }
    Ok(0)
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } => 1,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze(args) => {
            let args = merge_config(args)?;
            emit(&cmd_analyze(&args)?, args.json.as_ref())
        }
        Command::FunkCheck(args) => {
            let args = merge_config(args)?;
            emit(&cmd_funk_check(&args)?, args.json.as_ref())
        }
        Command::Deform(args) => {
            let args = merge_config(args)?;
            emit(&cmd_deform(&args)?, args.json.as_ref())
        }
        Command::Identities(args) => {
            let args = merge_config(args)?;
            emit(&cmd_identities(&args)?, args.json.as_ref())
        }
        Command::Chain(args) => {
            let args = merge_config(args)?;
            emit(&cmd_chain(&args)?, args.json.as_ref())
        }
        Command::Search(mut args) => {
            args.common = merge_config(args.common)?;
            emit(&cmd_search(&args)?, args.common.json.as_ref())
        }
        Command::Catalog(args) => emit(&cmd_catalog()?, args.json.as_ref()),
    }
}

/// Parse arguments from the process environment, run, and return the
/// process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                0
            } else {
                1
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
