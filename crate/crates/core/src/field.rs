//! Jet-evaluable scalar fields on the slit tangent space.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jets::{phase_variables, Jet, PhasePoint};
use crate::sampling::SampleDomain;

type EvalFn = dyn Fn(&PhasePoint, usize) -> Result<Jet> + Send + Sync;
type DomainFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// A pure map on the slit tangent space, evaluated through jet arithmetic
/// at any requested order. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ScalarField {
    n: usize,
    homogeneity: Option<i32>,
    domain_pred: Option<Arc<DomainFn>>,
    sample_domain: SampleDomain,
    eval: Arc<EvalFn>,
}

impl ScalarField {
    pub fn new(
        n: usize,
        eval: impl Fn(&PhasePoint, usize) -> Result<Jet> + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            n,
            homogeneity: None,
            domain_pred: None,
            sample_domain: SampleDomain::default(),
            eval: Arc::new(eval),
        }
    }

    /// Field defined by an expression in the 2n variable jets
    /// (x1..xn, y1..yn).
    pub fn from_jet_expr(
        n: usize,
        f: impl Fn(&[Jet]) -> Result<Jet> + Send + Sync + 'static,
    ) -> Self {
        ScalarField::new(n, move |p, order| {
            let vars = phase_variables(p, order);
            f(&vars)
        })
    }

    pub fn with_homogeneity(mut self, degree: i32) -> Self {
        self.homogeneity = Some(degree);
        self
    }

    pub fn with_domain_pred(
        mut self,
        pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.domain_pred = Some(Arc::new(pred));
        self
    }

    pub fn with_sample_domain(mut self, domain: SampleDomain) -> Self {
        self.sample_domain = domain;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn homogeneity(&self) -> Option<i32> {
        self.homogeneity
    }

    pub fn sample_domain(&self) -> SampleDomain {
        self.sample_domain
    }

    pub fn in_domain(&self, p: &PhasePoint) -> bool {
        match &self.domain_pred {
            Some(pred) => pred(p.x()),
            None => true,
        }
    }

    /// Evaluate the truncated Taylor expansion at `p`.
    pub fn eval_jet(&self, p: &PhasePoint, order: usize) -> Result<Jet> {
        if p.n() != self.n {
            return Err(Error::Degenerate(format!(
                "field has dimension {}, point has dimension {}",
                self.n,
                p.n()
            )));
        }
        if !self.in_domain(p) {
            return Err(Error::Domain(format!(
                "point x={:?} outside the field's domain",
                p.x()
            )));
        }
        (self.eval)(p, order)
    }

    pub fn value(&self, p: &PhasePoint) -> Result<f64> {
        Ok(self.eval_jet(p, 0)?.val())
    }

    /// Exact mixed partial derivative at `p` for a multi-index over the
    /// 2n variables.
    pub fn partial(&self, p: &PhasePoint, mu: &[u8]) -> Result<f64> {
        let deg: usize = mu.iter().map(|&v| v as usize).sum();
        Ok(self.eval_jet(p, deg)?.partial(mu))
    }

    /// Derived field: first partial with respect to flat variable `var`.
    pub fn partial_field(&self, var: usize) -> ScalarField {
        let inner = self.clone();
        let mut out = ScalarField::new(self.n, move |p, order| {
            Ok(inner.eval_jet(p, order + 1)?.derivative(var))
        });
        out.domain_pred = self.domain_pred.clone();
        out.sample_domain = self.sample_domain;
        out
    }

    pub fn partial_x_field(&self, i: usize) -> ScalarField {
        self.partial_field(i)
    }

    pub fn partial_y_field(&self, i: usize) -> ScalarField {
        self.partial_field(self.n + i)
    }

    /// Euler residual `|sum_i y^i df/dy^i - d f| / (1 + |f|)`; `None` when
    /// no homogeneity degree is declared.
    pub fn euler_residual(&self, p: &PhasePoint) -> Result<Option<f64>> {
        let Some(d) = self.homogeneity else {
            return Ok(None);
        };
        let jet = self.eval_jet(p, 1)?;
        let n = self.n;
        let mut radial = 0.0;
        let mut mu = vec![0u8; 2 * n];
        for i in 0..n {
            mu[n + i] = 1;
            radial += p.y()[i] * jet.partial(&mu);
            mu[n + i] = 0;
        }
        let f = jet.val();
        Ok(Some((radial - f64::from(d) * f).abs() / (1.0 + f.abs())))
    }
}

/// One Richardson level on a central difference of `g`.
fn richardson_central(g: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let d = |h: f64| -> Result<f64> { Ok((g(h)? - g(-h)?) / (2.0 * h)) };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

fn shift_point(p: &PhasePoint, var: usize, delta: f64) -> Result<PhasePoint> {
    let n = p.n();
    let mut x = p.x().to_vec();
    let mut y = p.y().to_vec();
    if var < n {
        x[var] += delta;
    } else {
        y[var - n] += delta;
    }
    PhasePoint::new(x, y)
}

fn fd_recursive(f: &ScalarField, p: &PhasePoint, mu: &[u8], base_step: f64) -> Result<f64> {
    let Some(var) = mu.iter().position(|&m| m > 0) else {
        return f.value(p);
    };
    let mut reduced = mu.to_vec();
    reduced[var] -= 1;
    let h = base_step * (1.0 + p.coord(var).abs());
    richardson_central(
        &|delta| {
            let q = shift_point(p, var, delta)?;
            fd_recursive(f, &q, &reduced, base_step)
        },
        h,
    )
}

/// Central finite-difference estimate of a mixed partial of total degree
/// `<= 3`, with one Richardson extrapolation step per differentiation.
///
/// The step defaults to `1e-4 * (1 + |coordinate|)` and is widened for
/// third derivatives where roundoff dominates at that step size.
pub fn fd_oracle(f: &ScalarField, p: &PhasePoint, mu: &[u8]) -> Result<f64> {
    let deg: usize = mu.iter().map(|&v| v as usize).sum();
    let base = if deg >= 3 { 1.5e-3 } else { 1e-4 };
    fd_oracle_with_step(f, p, mu, base)
}

pub fn fd_oracle_with_step(
    f: &ScalarField,
    p: &PhasePoint,
    mu: &[u8],
    base_step: f64,
) -> Result<f64> {
    let deg: usize = mu.iter().map(|&v| v as usize).sum();
    if deg > 3 {
        return Err(Error::Degenerate(format!(
            "fd_oracle supports total degree <= 3, got {deg}"
        )));
    }
    if mu.len() != 2 * f.n() {
        return Err(Error::Degenerate(format!(
            "multi-index has length {}, expected {}",
            mu.len(),
            2 * f.n()
        )));
    }
    fd_recursive(f, p, mu, base_step)
}
