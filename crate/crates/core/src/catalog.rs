//! Built-in metrics and projective-factor candidates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{compile, parse};
use crate::field::ScalarField;
use crate::sampling::SampleDomain;

/// A named built-in field with its documented properties.
#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub kind: EntryKind,
    pub description: &'static str,
    /// Documented scalar flag curvature for metrics, when constant.
    pub expected_kappa: Option<f64>,
    /// Tolerance at which `expected_kappa` is reproduced by the pipeline.
    pub kappa_tol: Option<f64>,
    pub domain: SampleDomain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Metric,
    Candidate,
}

pub const METRIC_NAMES: &[&str] = &["euclidean", "flat", "sphere", "klein", "funk-ball"];
pub const CANDIDATE_NAMES: &[&str] = &["theta", "linear-rational", "cF", "aF"];

/// Catalog listing. `flat` is the euclidean entry under the name used when
/// one asks for the flat spray rather than a Finsler function.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "euclidean",
            kind: EntryKind::Metric,
            description: "F = |y|; flat, geodesic spray has G = 0",
            expected_kappa: Some(0.0),
            kappa_tol: Some(1e-10),
            domain: SampleDomain::boxed(1.0),
        },
        CatalogEntry {
            name: "flat",
            kind: EntryKind::Metric,
            description: "alias of euclidean: the flat spray G = 0",
            expected_kappa: Some(0.0),
            kappa_tol: Some(1e-10),
            domain: SampleDomain::boxed(1.0),
        },
        CatalogEntry {
            name: "sphere",
            kind: EntryKind::Metric,
            description: "F = 2|y|/(1+|x|^2); round sphere in stereographic coordinates",
            expected_kappa: Some(1.0),
            kappa_tol: Some(1e-8),
            domain: SampleDomain::boxed(1.0),
        },
        CatalogEntry {
            name: "klein",
            kind: EntryKind::Metric,
            description: "F = sqrt(|y|^2(1-|x|^2)+<x,y>^2)/(1-|x|^2); Klein (Beltrami) model",
            expected_kappa: Some(-1.0),
            kappa_tol: Some(1e-8),
            domain: SampleDomain::ball(0.6),
        },
        CatalogEntry {
            name: "funk-ball",
            kind: EntryKind::Metric,
            description: "F = (sqrt(|y|^2(1-|x|^2)+<x,y>^2)+<x,y>)/(1-|x|^2); Funk metric of the unit ball",
            expected_kappa: Some(-0.25),
            kappa_tol: Some(1e-6),
            domain: SampleDomain::ball(0.6),
        },
        CatalogEntry {
            name: "theta",
            kind: EntryKind::Candidate,
            description: "P = Funk metric of the unit ball (a Funk function for the flat spray)",
            expected_kappa: None,
            kappa_tol: None,
            domain: SampleDomain::ball(0.6),
        },
        CatalogEntry {
            name: "linear-rational",
            kind: EntryKind::Candidate,
            description: "P = y1/(1-x1); rational Funk function for the flat spray",
            expected_kappa: None,
            kappa_tol: None,
            domain: SampleDomain::ball(0.6),
        },
        CatalogEntry {
            name: "cF",
            kind: EntryKind::Candidate,
            description: "P = c*F for the active metric (configurable c, default 1)",
            expected_kappa: None,
            kappa_tol: None,
            domain: SampleDomain::default(),
        },
        CatalogEntry {
            name: "aF",
            kind: EntryKind::Candidate,
            description: "P = a(x)*F with a polynomial base factor (configurable, default 1)",
            expected_kappa: None,
            kappa_tol: None,
            domain: SampleDomain::default(),
        },
    ]
}

pub fn entry(name: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.name == name)
}

fn sum_sq(prefix: char, n: usize) -> String {
    (1..=n)
        .map(|i| format!("{prefix}{i}^2"))
        .collect::<Vec<_>>()
        .join("+")
}

fn dot_xy(n: usize) -> String {
    (1..=n)
        .map(|i| format!("x{i}*y{i}"))
        .collect::<Vec<_>>()
        .join("+")
}

/// The closed-form expression source for a catalog metric at dimension `n`.
pub fn metric_source(name: &str, n: usize) -> Option<String> {
    let sy = sum_sq('y', n);
    let sx = sum_sq('x', n);
    let d = dot_xy(n);
    match name {
        "euclidean" | "flat" => Some(format!("sqrt({sy})")),
        "sphere" => Some(format!("2*sqrt({sy})/(1+{sx})")),
        "klein" => Some(format!("sqrt(({sy})*(1-({sx})) + ({d})^2)/(1-({sx}))")),
        "funk-ball" => Some(format!("(sqrt(({sy})*(1-({sx})) + ({d})^2) + ({d}))/(1-({sx}))")),
        _ => None,
    }
}

/// Build a catalog Finsler function at dimension `n`.
pub fn metric_field(name: &str, n: usize) -> Result<ScalarField> {
    let e = entry(name)
        .filter(|e| e.kind == EntryKind::Metric)
        .ok_or_else(|| Error::Degenerate(format!("unknown metric '{name}'")))?;
    let src = metric_source(name, n).unwrap();
    let ast = parse(&src, n, false)?;
    let field = compile(&ast, n, None)?
        .with_homogeneity(1)
        .with_sample_domain(e.domain);
    let field = match name {
        "klein" | "funk-ball" => field.with_domain_pred(|x| {
            x.iter().map(|v| v * v).sum::<f64>() < 0.98
        }),
        _ => field,
    };
    Ok(field)
}

/// Build a catalog candidate factor. `f_binding` is the active metric's
/// Finsler function (needed by `cF` and `aF`); `a_source` is the polynomial
/// base factor for `aF`.
pub fn candidate_field(
    name: &str,
    n: usize,
    f_binding: Option<&ScalarField>,
    c: f64,
    a_source: &str,
) -> Result<ScalarField> {
    match name {
        "theta" => metric_field("funk-ball", n).map(|f| f.with_sample_domain(SampleDomain::ball(0.6))),
        "linear-rational" => {
            let ast = parse("y1/(1-x1)", n, false)?;
            Ok(compile(&ast, n, None)?
                .with_homogeneity(1)
                .with_sample_domain(SampleDomain::ball(0.6))
                .with_domain_pred(|x| x[0] < 0.9))
        }
        "cF" => {
            let f = f_binding
                .ok_or_else(|| Error::Compile("candidate cF needs a bound metric".into()))?;
            let ast = crate::expr::ExprAst::Mul(
                Box::new(crate::expr::ExprAst::Num(c)),
                Box::new(crate::expr::ExprAst::F),
            );
            Ok(compile(&ast, n, Some(f))?
                .with_homogeneity(1)
                .with_sample_domain(f.sample_domain()))
        }
        "aF" => {
            let f = f_binding
                .ok_or_else(|| Error::Compile("candidate aF needs a bound metric".into()))?;
            let a_ast = parse(a_source, n, false)?;
            if a_ast.mentions_y() {
                return Err(Error::Compile(
                    "the base factor a(x) of aF must not depend on y".into(),
                ));
            }
            let ast = crate::expr::ExprAst::Mul(Box::new(a_ast), Box::new(crate::expr::ExprAst::F));
            Ok(compile(&ast, n, Some(f))?
                .with_homogeneity(1)
                .with_sample_domain(f.sample_domain()))
        }
        other => Err(Error::Degenerate(format!("unknown candidate '{other}'"))),
    }
}
