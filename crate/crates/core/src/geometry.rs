//! Spray/Finsler geometry: metric tensor, geodesic spray, nonlinear
//! connection, curvature, Jacobi endomorphism, and the derivations they
//! induce on scalar fields and semi-basic 1-forms.
//!
//! Conventions (pinned by cross-checks in the test suite):
//! - `N^i_j = dG^i/dy^j`
//! - `Phi^i_j = 2 dG^i/dx^j - S(N^i_j) - N^i_k N^k_j`
//! - `R^i_jk = delta_j N^i_k - delta_k N^i_j`, so that `y^j R^i_jk = Phi^i_k`
//! - `(d_R f)_jk = R^i_jk df/dy^i`, so that `d_h(d_h f) = d_R f`

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::jets::{jet_space, Jet, PhasePoint};
use crate::sampling::{sample_points, SampleDomain};

/// n x n matrix `g_ij = 1/2 d^2 F^2 / dy^i dy^j` at a point.
#[derive(Clone, Debug, Serialize)]
pub struct MetricTensor {
    pub g: Vec<Vec<f64>>,
    pub condition: f64,
}

/// Where a spray came from; carried through deformations.
#[derive(Clone, Debug, Serialize)]
pub enum Provenance {
    Flat,
    Geodesic { metric: String },
    Deformed { base: Box<Provenance>, factor: String },
    User,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Flat => write!(f, "flat"),
            Provenance::Geodesic { metric } => write!(f, "geodesic({metric})"),
            Provenance::Deformed { base, factor } => write!(f, "deformed({base}, {factor})"),
            Provenance::User => write!(f, "user"),
        }
    }
}

type GJetsFn = dyn Fn(&PhasePoint, usize) -> Result<Vec<Jet>> + Send + Sync;

/// A spray: coefficient fields `G^i`, 2-homogeneous in `y`, evaluated
/// jointly so shared work (metric solves) happens once per point.
#[derive(Clone)]
pub struct Spray {
    n: usize,
    eval_g: Arc<GJetsFn>,
    pub provenance: Provenance,
    pub domain: SampleDomain,
}

impl Spray {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Jets of all coefficients `G^i` at `p`, truncated at `order`.
    pub fn g_jets(&self, p: &PhasePoint, order: usize) -> Result<Vec<Jet>> {
        if p.n() != self.n {
            return Err(Error::Degenerate(format!(
                "spray has dimension {}, point has dimension {}",
                self.n,
                p.n()
            )));
        }
        (self.eval_g)(p, order)
    }

    pub fn g_values(&self, p: &PhasePoint) -> Result<Vec<f64>> {
        Ok(self.g_jets(p, 0)?.iter().map(|j| j.val()).collect())
    }

    /// One coefficient as a standalone scalar field.
    pub fn coefficient_field(&self, i: usize) -> ScalarField {
        let eval = Arc::clone(&self.eval_g);
        ScalarField::new(self.n, move |p, order| Ok(eval(p, order)?.swap_remove(i)))
            .with_homogeneity(2)
            .with_sample_domain(self.domain)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Solve `a z = b` over the jet ring by Gaussian elimination with partial
/// pivoting on constant terms. Fails when the constant-term matrix is
/// numerically singular.
fn solve_jet_linear(mut a: Vec<Vec<Jet>>, mut b: Vec<Jet>) -> Result<Vec<Jet>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter().map(|j| j.val().abs()))
        .fold(0.0_f64, f64::max);
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a[r][col].val().abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pivot_abs <= 1e-12 * (1.0 + scale) {
            return Err(Error::SingularMetric((1.0 + scale) / (pivot_abs + f64::MIN_POSITIVE)));
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let inv = a[col][col].recip()?;
        for c in col..n {
            a[col][c] = &a[col][c] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r][col].clone();
            for c in col..n {
                let t = &factor * &a[col][c];
                a[r][c] = &a[r][c] - &t;
            }
            let t = &factor * &b[col];
            b[r] = &b[r] - &t;
        }
    }
    Ok(b)
}

/// `g_ij = 1/2 d^2 F^2 / dy^i dy^j` with a condition-number guard.
pub fn metric_tensor(f: &ScalarField, p: &PhasePoint) -> Result<MetricTensor> {
    let n = f.n();
    let fj = f.eval_jet(p, 2)?;
    let e = &fj * &fj;
    let mut g = vec![vec![0.0; n]; n];
    let mut mu = vec![0u8; 2 * n];
    for i in 0..n {
        for j in i..n {
            mu[n + i] += 1;
            mu[n + j] += 1;
            let v = 0.5 * e.partial(&mu);
            mu[n + i] -= 1;
            mu[n + j] -= 1;
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i][j]);
    let sv = m.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > 1e12 {
        return Err(Error::SingularMetric(condition));
    }
    Ok(MetricTensor { g, condition })
}

/// The geodesic spray of a Finsler function:
/// `G^i = 1/4 g^{il} (y^k d^2F^2/dy^l dx^k - dF^2/dx^l)`.
pub fn geodesic_spray(f: &ScalarField) -> Spray {
    let n = f.n();
    let field = f.clone();
    let domain = f.sample_domain();
    let eval = move |p: &PhasePoint, order: usize| -> Result<Vec<Jet>> {
        let fj = field.eval_jet(p, order + 2)?;
        let e = &fj * &fj;
        let ey: Vec<Jet> = (0..n).map(|l| e.derivative(n + l)).collect();
        let mut a = vec![Vec::with_capacity(n); n];
        for i in 0..n {
            for l in 0..n {
                a[i].push(ey[l].derivative(n + i).scale(0.5));
            }
        }
        let space = jet_space(2 * n, order);
        let yv: Vec<Jet> = (0..n)
            .map(|k| Jet::variable(&space, n + k, p.y()[k]))
            .collect();
        let mut rhs = Vec::with_capacity(n);
        for l in 0..n {
            let mut acc = e.derivative(l).truncate(order).scale(-1.0);
            for k in 0..n {
                let t = &yv[k] * &ey[l].derivative(k);
                acc = &acc + &t;
            }
            rhs.push(acc);
        }
        let z = solve_jet_linear(a, rhs)?;
        Ok(z.into_iter().map(|j| j.scale(0.25)).collect())
    };
    Spray {
        n,
        eval_g: Arc::new(eval),
        provenance: Provenance::Geodesic {
            metric: "F".into(),
        },
        domain,
    }
}

/// The flat spray `G^i = 0`.
pub fn flat_spray(n: usize) -> Spray {
    assert!(n >= 2);
    let eval = move |p: &PhasePoint, order: usize| -> Result<Vec<Jet>> {
        let space = jet_space(2 * p.n(), order);
        Ok((0..p.n()).map(|_| Jet::constant(&space, 0.0)).collect())
    };
    Spray {
        n,
        eval_g: Arc::new(eval),
        provenance: Provenance::Flat,
        domain: SampleDomain::boxed(1.0),
    }
}

/// Projective deformation `S~ = S - 2 P C`, i.e. `G~^i = G^i + P y^i`.
/// `P` must be 1-homogeneous; checked by Euler sampling before returning.
pub fn projective_deform(s: &Spray, p_field: &ScalarField, factor_label: &str) -> Result<Spray> {
    let n = s.n;
    let domain = s.domain.intersect(&p_field.sample_domain());
    for q in sample_points(&domain, n, 25, 0xE43A) {
        if !p_field.in_domain(&q) {
            continue;
        }
        let jet = p_field.eval_jet(&q, 1)?;
        let mut radial = 0.0;
        let mut mu = vec![0u8; 2 * n];
        for i in 0..n {
            mu[n + i] = 1;
            radial += q.y()[i] * jet.partial(&mu);
            mu[n + i] = 0;
        }
        let residual = (radial - jet.val()).abs() / (1.0 + jet.val().abs());
        if residual > 1e-8 {
            return Err(Error::Homogeneity {
                residual,
                x: q.x().to_vec(),
                y: q.y().to_vec(),
            });
        }
    }
    let base = Arc::clone(&s.eval_g);
    let pf = p_field.clone();
    let eval = move |q: &PhasePoint, order: usize| -> Result<Vec<Jet>> {
        let g = base(q, order)?;
        let pj = pf.eval_jet(q, order)?;
        let space = jet_space(2 * q.n(), order);
        Ok(g
            .into_iter()
            .enumerate()
            .map(|(i, gi)| {
                let yi = Jet::variable(&space, q.n() + i, q.y()[i]);
                let t = &pj * &yi;
                &gi + &t
            })
            .collect())
    };
    Ok(Spray {
        n,
        eval_g: Arc::new(eval),
        provenance: Provenance::Deformed {
            base: Box::new(s.provenance.clone()),
            factor: factor_label.to_string(),
        },
        domain,
    })
}

/// Nonlinear connection data at a point: `N^i_j` and the induced
/// horizontal projector.
#[derive(Clone, Debug, Serialize)]
pub struct ConnectionData {
    pub nmat: Vec<Vec<f64>>,
}

impl ConnectionData {
    /// The horizontal projector as a 2n x 2n matrix in the
    /// `(d/dx, d/dy)` frame: `h = [[I, 0], [-N, 0]]`.
    pub fn h_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.nmat.len();
        let mut h = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            h[i][i] = 1.0;
            for j in 0..n {
                h[n + i][j] = -self.nmat[i][j];
            }
        }
        h
    }
}

pub fn connection(s: &Spray, p: &PhasePoint) -> Result<ConnectionData> {
    let n = s.n;
    let g = s.g_jets(p, 1)?;
    let mut nmat = vec![vec![0.0; n]; n];
    let mut mu = vec![0u8; 2 * n];
    for i in 0..n {
        for j in 0..n {
            mu[n + j] = 1;
            nmat[i][j] = g[i].partial(&mu);
            mu[n + j] = 0;
        }
    }
    Ok(ConnectionData { nmat })
}

/// All point data extractable from order-2 jets of the coefficients.
struct SprayPointData {
    g: Vec<f64>,
    dgdx: Vec<Vec<f64>>,
    nmat: Vec<Vec<f64>>,
    /// `dn_dx[i][j][k] = dN^i_j/dx^k`
    dn_dx: Vec<Vec<Vec<f64>>>,
    /// `dn_dy[i][j][k] = dN^i_j/dy^k`
    dn_dy: Vec<Vec<Vec<f64>>>,
}

fn spray_point_data(s: &Spray, p: &PhasePoint) -> Result<SprayPointData> {
    let n = s.n;
    let gj = s.g_jets(p, 2)?;
    let mut data = SprayPointData {
        g: gj.iter().map(|j| j.val()).collect(),
        dgdx: vec![vec![0.0; n]; n],
        nmat: vec![vec![0.0; n]; n],
        dn_dx: vec![vec![vec![0.0; n]; n]; n],
        dn_dy: vec![vec![vec![0.0; n]; n]; n],
    };
    let mut mu = vec![0u8; 2 * n];
    for i in 0..n {
        for j in 0..n {
            mu[j] = 1;
            data.dgdx[i][j] = gj[i].partial(&mu);
            mu[j] = 0;
            mu[n + j] = 1;
            data.nmat[i][j] = gj[i].partial(&mu);
            for k in 0..n {
                mu[k] += 1;
                data.dn_dx[i][j][k] = gj[i].partial(&mu);
                mu[k] -= 1;
                mu[n + k] += 1;
                data.dn_dy[i][j][k] = gj[i].partial(&mu);
                mu[n + k] -= 1;
            }
            mu[n + j] = 0;
        }
    }
    Ok(data)
}

/// Jacobi endomorphism `Phi^i_j` at a point.
#[derive(Clone, Debug, Serialize)]
pub struct JacobiEndo {
    pub phi: Vec<Vec<f64>>,
}

impl JacobiEndo {
    pub fn trace(&self) -> f64 {
        (0..self.phi.len()).map(|i| self.phi[i][i]).sum()
    }

    /// `Phi(S)` residual: `Phi^i_j y^j`, which must vanish.
    pub fn apply_to_s(&self, p: &PhasePoint) -> Vec<f64> {
        let n = self.phi.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.phi[i][j] * p.y()[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.phi
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

pub fn jacobi(s: &Spray, p: &PhasePoint) -> Result<JacobiEndo> {
    let n = s.n;
    let d = spray_point_data(s, p)?;
    let mut phi = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s_of_n = 0.0;
            for k in 0..n {
                s_of_n += p.y()[k] * d.dn_dx[i][j][k] - 2.0 * d.g[k] * d.dn_dy[i][j][k];
            }
            let nn: f64 = (0..n).map(|k| d.nmat[i][k] * d.nmat[k][j]).sum();
            phi[i][j] = 2.0 * d.dgdx[i][j] - s_of_n - nn;
        }
    }
    Ok(JacobiEndo { phi })
}

/// Curvature components `R^i_jk`, antisymmetric in `(j, k)`.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureR {
    pub r: Vec<Vec<Vec<f64>>>,
}

impl CurvatureR {
    pub fn max_abs(&self) -> f64 {
        self.r
            .iter()
            .flatten()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `y^j R^i_jk`, which must reproduce `Phi^i_k`.
    pub fn contract_with_s(&self, p: &PhasePoint) -> Vec<Vec<f64>> {
        let n = self.r.len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                out[i][k] = (0..n).map(|j| p.y()[j] * self.r[i][j][k]).sum();
            }
        }
        out
    }
}

pub fn curvature_r(s: &Spray, p: &PhasePoint) -> Result<CurvatureR> {
    let n = s.n;
    let d = spray_point_data(s, p)?;
    // delta_k N^i_j = dN^i_j/dx^k - N^l_k dN^i_j/dy^l
    let delta = |i: usize, j: usize, k: usize| -> f64 {
        d.dn_dx[i][j][k] - (0..n).map(|l| d.nmat[l][k] * d.dn_dy[i][j][l]).sum::<f64>()
    };
    let mut r = vec![vec![vec![0.0; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in (j + 1)..n {
                let v = delta(i, j, k) - delta(i, k, j);
                r[i][j][k] = v;
                r[i][k][j] = -v;
            }
        }
    }
    Ok(CurvatureR { r })
}

/// Pointwise semi-basic 1-form (components over `dx^i`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneForm(pub Vec<f64>);

impl OneForm {
    pub fn norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &OneForm) -> OneForm {
        OneForm(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

/// Pointwise semi-basic 2-form, antisymmetric components `w_jk`.
#[derive(Clone, Debug, Serialize)]
pub struct TwoForm(pub Vec<Vec<f64>>);

impl TwoForm {
    pub fn zero(n: usize) -> TwoForm {
        TwoForm(vec![vec![0.0; n]; n])
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &TwoForm) -> TwoForm {
        TwoForm(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + b).collect())
                .collect(),
        )
    }

    pub fn sub(&self, other: &TwoForm) -> TwoForm {
        TwoForm(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(r, s)| r.iter().zip(s).map(|(a, b)| a - b).collect())
                .collect(),
        )
    }

    pub fn scale(&self, t: f64) -> TwoForm {
        TwoForm(
            self.0
                .iter()
                .map(|r| r.iter().map(|a| a * t).collect())
                .collect(),
        )
    }
}

/// Interior product with the spray: `(i_S w)_k = y^j w_jk`.
pub fn interior_s(w: &TwoForm, p: &PhasePoint) -> OneForm {
    let n = w.0.len();
    OneForm(
        (0..n)
            .map(|k| (0..n).map(|j| p.y()[j] * w.0[j][k]).sum())
            .collect(),
    )
}

fn y_partials(f: &ScalarField, p: &PhasePoint) -> Result<Vec<f64>> {
    let n = f.n();
    let jet = f.eval_jet(p, 1)?;
    let mut mu = vec![0u8; 2 * n];
    Ok((0..n)
        .map(|i| {
            mu[n + i] = 1;
            let v = jet.partial(&mu);
            mu[n + i] = 0;
            v
        })
        .collect())
}

/// `(d_J f)_i = df/dy^i`.
pub fn d_j_at(f: &ScalarField, p: &PhasePoint) -> Result<OneForm> {
    Ok(OneForm(y_partials(f, p)?))
}

/// `(d_h f)_i = delta_i f = df/dx^i - N^j_i df/dy^j`.
pub fn d_h_at(s: &Spray, f: &ScalarField, p: &PhasePoint) -> Result<OneForm> {
    let n = s.n;
    let conn = connection(s, p)?;
    let jet = f.eval_jet(p, 1)?;
    let mut mu = vec![0u8; 2 * n];
    let mut fx = vec![0.0; n];
    let mut fy = vec![0.0; n];
    for i in 0..n {
        mu[i] = 1;
        fx[i] = jet.partial(&mu);
        mu[i] = 0;
        mu[n + i] = 1;
        fy[i] = jet.partial(&mu);
        mu[n + i] = 0;
    }
    Ok(OneForm(
        (0..n)
            .map(|i| fx[i] - (0..n).map(|j| conn.nmat[j][i] * fy[j]).sum::<f64>())
            .collect(),
    ))
}

/// `(d_Phi f)_j = Phi^i_j df/dy^i`.
pub fn d_phi_at(s: &Spray, f: &ScalarField, p: &PhasePoint) -> Result<OneForm> {
    let n = s.n;
    let phi = jacobi(s, p)?;
    let fy = y_partials(f, p)?;
    Ok(OneForm(
        (0..n)
            .map(|j| (0..n).map(|i| phi.phi[i][j] * fy[i]).sum())
            .collect(),
    ))
}

/// `(d_R f)_jk = R^i_jk df/dy^i`.
pub fn d_r_on_function(s: &Spray, f: &ScalarField, p: &PhasePoint) -> Result<TwoForm> {
    let n = s.n;
    let r = curvature_r(s, p)?;
    let fy = y_partials(f, p)?;
    let mut w = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            w[j][k] = (0..n).map(|i| r.r[i][j][k] * fy[i]).sum();
        }
    }
    Ok(TwoForm(w))
}

/// A semi-basic 1-form given as jet-evaluable component fields, so the
/// derivations can be applied to it in turn.
#[derive(Clone)]
pub struct OneFormField {
    n: usize,
    pub comps: Vec<ScalarField>,
}

impl OneFormField {
    pub fn new(comps: Vec<ScalarField>) -> Self {
        assert!(!comps.is_empty());
        OneFormField {
            n: comps[0].n(),
            comps,
        }
    }

    pub fn zero(n: usize) -> Self {
        OneFormField::new(
            (0..n)
                .map(|_| {
                    ScalarField::new(n, move |q, order| {
                        Ok(Jet::constant(&jet_space(2 * q.n(), order), 0.0))
                    })
                })
                .collect(),
        )
    }

    pub fn at(&self, p: &PhasePoint) -> Result<OneForm> {
        Ok(OneForm(
            self.comps
                .iter()
                .map(|c| c.value(p))
                .collect::<Result<Vec<_>>>()?,
        ))
    }

    fn jets(&self, p: &PhasePoint, order: usize) -> Result<Vec<Jet>> {
        self.comps.iter().map(|c| c.eval_jet(p, order)).collect()
    }
}

/// `d_J f` as a component field.
pub fn d_j_field(f: &ScalarField) -> OneFormField {
    let n = f.n();
    OneFormField::new((0..n).map(|i| f.partial_y_field(i)).collect())
}

/// `d_h f` as a component field (needs `N^j_i` jets from the spray).
pub fn d_h_field(s: &Spray, f: &ScalarField) -> OneFormField {
    let n = s.n;
    let comps = (0..n)
        .map(|i| {
            let s = s.clone();
            let f = f.clone();
            ScalarField::new(n, move |p, order| {
                let g = s.g_jets(p, order + 1)?;
                let fj = f.eval_jet(p, order + 1)?;
                let mut acc = fj.derivative(i);
                for j in 0..n {
                    let nj = g[j].derivative(p.n() + i);
                    let t = &nj * &fj.derivative(p.n() + j);
                    acc = &acc - &t;
                }
                Ok(acc)
            })
        })
        .collect();
    OneFormField::new(comps)
}

/// Jets of `Phi^i_j` at a point.
pub fn phi_jets(s: &Spray, p: &PhasePoint, order: usize) -> Result<Vec<Vec<Jet>>> {
    let n = s.n;
    let g2 = s.g_jets(p, order + 2)?;
    let gt: Vec<Jet> = g2.iter().map(|j| j.truncate(order)).collect();
    let space = jet_space(2 * n, order);
    let yv: Vec<Jet> = (0..n)
        .map(|k| Jet::variable(&space, n + k, p.y()[k]))
        .collect();
    let nj: Vec<Vec<Jet>> = (0..n)
        .map(|i| (0..n).map(|j| g2[i].derivative(n + j)).collect())
        .collect();
    let nt: Vec<Vec<Jet>> = nj
        .iter()
        .map(|row| row.iter().map(|j| j.truncate(order)).collect())
        .collect();
    let mut phi = vec![Vec::with_capacity(n); n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = g2[i].derivative(j).truncate(order).scale(2.0);
            for k in 0..n {
                let t1 = &yv[k] * &nj[i][j].derivative(k);
                acc = &acc - &t1;
                let t2 = &gt[k].scale(2.0) * &nj[i][j].derivative(n + k);
                acc = &acc + &t2;
                let t3 = &nt[i][k] * &nt[k][j];
                acc = &acc - &t3;
            }
            phi[i].push(acc);
        }
    }
    Ok(phi)
}

/// `d_Phi f` as a component field.
pub fn d_phi_field(s: &Spray, f: &ScalarField) -> OneFormField {
    let n = s.n;
    let comps = (0..n)
        .map(|j| {
            let s = s.clone();
            let f = f.clone();
            ScalarField::new(n, move |p, order| {
                let phi = phi_jets(&s, p, order)?;
                let fj = f.eval_jet(p, order + 1)?;
                let mut acc = Jet::constant(&jet_space(2 * n, order), 0.0);
                for i in 0..n {
                    let t = &phi[i][j] * &fj.derivative(p.n() + i);
                    acc = &acc + &t;
                }
                Ok(acc)
            })
        })
        .collect();
    OneFormField::new(comps)
}

/// `(d_h a)_jk = delta_j a_k - delta_k a_j` for a semi-basic 1-form field.
pub fn d_h_on_oneform(s: &Spray, alpha: &OneFormField, p: &PhasePoint) -> Result<TwoForm> {
    let n = s.n;
    let conn = connection(s, p)?;
    let jets = alpha.jets(p, 1)?;
    let mut mu = vec![0u8; 2 * n];
    let mut dax = vec![vec![0.0; n]; n]; // dax[k][j] = d a_k / d x^j
    let mut day = vec![vec![0.0; n]; n]; // day[k][l] = d a_k / d y^l
    for k in 0..n {
        for j in 0..n {
            mu[j] = 1;
            dax[k][j] = jets[k].partial(&mu);
            mu[j] = 0;
            mu[n + j] = 1;
            day[k][j] = jets[k].partial(&mu);
            mu[n + j] = 0;
        }
    }
    let delta = |k: usize, j: usize| -> f64 {
        dax[k][j] - (0..n).map(|l| conn.nmat[l][j] * day[k][l]).sum::<f64>()
    };
    let mut w = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            w[j][k] = delta(k, j) - delta(j, k);
        }
    }
    Ok(TwoForm(w))
}

/// `(d_J a)_jk = d a_k/dy^j - d a_j/dy^k`.
pub fn d_j_on_oneform(alpha: &OneFormField, p: &PhasePoint) -> Result<TwoForm> {
    let n = alpha.n;
    let jets = alpha.jets(p, 1)?;
    let mut mu = vec![0u8; 2 * n];
    let mut day = vec![vec![0.0; n]; n];
    for k in 0..n {
        for j in 0..n {
            mu[n + j] = 1;
            day[k][j] = jets[k].partial(&mu);
            mu[n + j] = 0;
        }
    }
    let mut w = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            w[j][k] = day[k][j] - day[j][k];
        }
    }
    Ok(TwoForm(w))
}

/// `(d_Phi a)_jk = Phi^i_j d a_k/dy^i - Phi^i_k d a_j/dy^i`.
pub fn d_phi_on_oneform(s: &Spray, alpha: &OneFormField, p: &PhasePoint) -> Result<TwoForm> {
    let n = s.n;
    let phi = jacobi(s, p)?;
    let jets = alpha.jets(p, 1)?;
    let mut mu = vec![0u8; 2 * n];
    let mut day = vec![vec![0.0; n]; n];
    for k in 0..n {
        for i in 0..n {
            mu[n + i] = 1;
            day[k][i] = jets[k].partial(&mu);
            mu[n + i] = 0;
        }
    }
    let mut w = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            w[j][k] = (0..n)
                .map(|i| phi.phi[i][j] * day[k][i] - phi.phi[i][k] * day[j][i])
                .sum();
        }
    }
    Ok(TwoForm(w))
}

/// Residuals of the geodesic-spray contract at a point:
/// `d_h F` and the `dx`/`dy` components of `i_S dd_J F^2 + dF^2`.
pub struct GeodesicContract {
    pub d_h_f: OneForm,
    pub euler_lagrange_dx: Vec<f64>,
    pub euler_lagrange_dy: Vec<f64>,
}

pub fn geodesic_contract(f: &ScalarField, s: &Spray, p: &PhasePoint) -> Result<GeodesicContract> {
    let n = f.n();
    let fj = f.eval_jet(p, 2)?;
    let e = &fj * &fj;
    let g = s.g_values(p)?;
    let mut mu = vec![0u8; 2 * n];
    let part = |e: &Jet, mu: &mut Vec<u8>, a: usize, b: Option<usize>| -> f64 {
        mu[a] += 1;
        if let Some(b) = b {
            mu[b] += 1;
        }
        let v = e.partial(mu);
        mu[a] -= 1;
        if let Some(b) = b {
            mu[b] -= 1;
        }
        v
    };
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    for k in 0..n {
        let mut acc = part(&e, &mut mu, k, None); // dE/dx^k
        for j in 0..n {
            acc += p.y()[j] * part(&e, &mut mu, n + k, Some(j)); // y^j E_{y^k x^j}
            acc -= p.y()[j] * part(&e, &mut mu, n + j, Some(k)); // y^i E_{y^i x^k}
            acc -= 2.0 * g[j] * part(&e, &mut mu, n + k, Some(n + j)); // 2G^j E_{y^k y^j}
        }
        dx[k] = acc;
        let mut acc = part(&e, &mut mu, n + k, None); // dE/dy^k
        for i in 0..n {
            acc -= p.y()[i] * part(&e, &mut mu, n + i, Some(n + k));
        }
        dy[k] = acc;
    }
    Ok(GeodesicContract {
        d_h_f: d_h_at(s, f, p)?,
        euler_lagrange_dx: dx,
        euler_lagrange_dy: dy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::metric_field;
    use crate::field::fd_oracle;

    fn p(x: &[f64], y: &[f64]) -> PhasePoint {
        PhasePoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn samples(domain: &SampleDomain, count: usize) -> Vec<PhasePoint> {
        sample_points(domain, 2, count, 314)
    }

    #[test]
    fn flat_spray_is_identically_zero() {
        let s = flat_spray(2);
        let q = p(&[0.3, -0.2], &[1.0, 0.5]);
        assert_eq!(s.g_values(&q).unwrap(), vec![0.0, 0.0]);
        let conn = connection(&s, &q).unwrap();
        assert_eq!(conn.nmat, vec![vec![0.0; 2]; 2]);
        assert_eq!(jacobi(&s, &q).unwrap().max_abs(), 0.0);
        assert_eq!(curvature_r(&s, &q).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn euclidean_geodesic_spray_vanishes() {
        let f = metric_field("euclidean", 2).unwrap();
        let s = geodesic_spray(&f);
        for q in samples(&SampleDomain::boxed(1.0), 20) {
            for g in s.g_values(&q).unwrap() {
                assert!(g.abs() < 1e-12, "G = {g} at {:?}", q.x());
            }
        }
    }

    #[test]
    fn euclidean_metric_tensor_is_identity() {
        let f = metric_field("euclidean", 2).unwrap();
        let m = metric_tensor(&f, &p(&[0.1, 0.2], &[3.0, 4.0])).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((m.g[i][j] - want).abs() < 1e-12);
            }
        }
        assert!((m.condition - 1.0).abs() < 1e-10);
    }

    #[test]
    fn klein_metric_tensor_matches_fd_hessian() {
        let f = metric_field("klein", 2).unwrap();
        let e_half = {
            let f = f.clone();
            ScalarField::new(2, move |q, order| {
                let fj = f.eval_jet(q, order)?;
                Ok((&fj * &fj).scale(0.5))
            })
        };
        for q in samples(&SampleDomain::ball(0.5), 10) {
            let m = metric_tensor(&f, &q).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mut mu = vec![0u8; 4];
                    mu[2 + i] += 1;
                    mu[2 + j] += 1;
                    let fd = fd_oracle(&e_half, &q, &mu).unwrap();
                    assert!(
                        (m.g[i][j] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                        "g[{i}][{j}] = {} vs fd {fd}",
                        m.g[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn sphere_connection_matches_fd_of_coefficients() {
        let f = metric_field("sphere", 2).unwrap();
        let s = geodesic_spray(&f);
        for q in samples(&SampleDomain::boxed(0.8), 5) {
            let conn = connection(&s, &q).unwrap();
            for i in 0..2 {
                let gi = s.coefficient_field(i);
                for j in 0..2 {
                    let mut mu = vec![0u8; 4];
                    mu[2 + j] = 1;
                    let fd = fd_oracle(&gi, &q, &mu).unwrap();
                    assert!(
                        (conn.nmat[i][j] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                        "N[{i}][{j}] = {} vs fd {fd}",
                        conn.nmat[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn horizontal_projector_is_idempotent_and_fixes_s() {
        let f = metric_field("klein", 2).unwrap();
        let s = geodesic_spray(&f);
        let q = p(&[0.2, -0.1], &[1.0, 0.7]);
        let conn = connection(&s, &q).unwrap();
        let h = conn.h_matrix();
        // h^2 = h
        for i in 0..4 {
            for j in 0..4 {
                let hh: f64 = (0..4).map(|k| h[i][k] * h[k][j]).sum();
                assert!((hh - h[i][j]).abs() < 1e-12);
            }
        }
        // The spray vector (y, -2G) is horizontal: h fixes it.
        let g = s.g_values(&q).unwrap();
        let sv = [q.y()[0], q.y()[1], -2.0 * g[0], -2.0 * g[1]];
        for i in 0..4 {
            let hs: f64 = (0..4).map(|k| h[i][k] * sv[k]).sum();
            assert!((hs - sv[i]).abs() < 1e-9, "component {i}: {hs} vs {}", sv[i]);
        }
    }

    #[test]
    fn sphere_jacobi_at_origin() {
        // F = 2|y|/(1+|x|^2) at x = 0, y = (1, 0) has Phi = diag(0, 4).
        let f = metric_field("sphere", 2).unwrap();
        let s = geodesic_spray(&f);
        let phi = jacobi(&s, &p(&[0.0, 0.0], &[1.0, 0.0])).unwrap();
        let want = [[0.0, 0.0], [0.0, 4.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (phi.phi[i][j] - want[i][j]).abs() < 1e-9,
                    "Phi[{i}][{j}] = {}",
                    phi.phi[i][j]
                );
            }
        }
    }

    #[test]
    fn jacobi_annihilates_the_spray() {
        for name in ["sphere", "klein", "funk-ball"] {
            let f = metric_field(name, 2).unwrap();
            let s = geodesic_spray(&f);
            for q in samples(&f.sample_domain(), 20) {
                let phi = jacobi(&s, &q).unwrap();
                let scale = 1.0 + phi.max_abs();
                for v in phi.apply_to_s(&q) {
                    assert!(v.abs() < 1e-8 * scale, "{name}: Phi(S) component {v}");
                }
            }
        }
    }

    #[test]
    fn curvature_contracts_to_jacobi() {
        for name in ["sphere", "klein", "funk-ball"] {
            let f = metric_field(name, 2).unwrap();
            let s = geodesic_spray(&f);
            for q in samples(&f.sample_domain(), 10) {
                let phi = jacobi(&s, &q).unwrap();
                let r = curvature_r(&s, &q).unwrap();
                let c = r.contract_with_s(&q);
                let scale = 1.0 + phi.max_abs();
                for i in 0..2 {
                    for j in 0..2 {
                        assert!(
                            (c[i][j] - phi.phi[i][j]).abs() < 1e-8 * scale,
                            "{name}: y^j R[{i}][j][{j}] = {} vs Phi = {}",
                            c[i][j],
                            phi.phi[i][j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn d_h_squared_equals_d_r() {
        let f = metric_field("sphere", 2).unwrap();
        let s = geodesic_spray(&f);
        let test_field = crate::expr::compile(
            &crate::expr::parse("(1+x1^2)*y1*y2 + x2*y1^2", 2, false).unwrap(),
            2,
            None,
        )
        .unwrap();
        let dhf = d_h_field(&s, &test_field);
        for q in samples(&SampleDomain::boxed(0.8), 10) {
            let lhs = d_h_on_oneform(&s, &dhf, &q).unwrap();
            let rhs = d_r_on_function(&s, &test_field, &q).unwrap();
            let scale = 1.0 + lhs.norm() + rhs.norm();
            assert!(
                lhs.sub(&rhs).norm() < 1e-8 * scale,
                "d_h^2 = {:?} vs d_R = {:?} at {:?}",
                lhs.0,
                rhs.0,
                q.x()
            );
        }
    }

    #[test]
    fn d_j_d_h_anticommute_on_flat() {
        let s = flat_spray(2);
        let test_field = crate::expr::compile(
            &crate::expr::parse("x1*y2^2 + x2^2*y1", 2, false).unwrap(),
            2,
            None,
        )
        .unwrap();
        let dhf = d_h_field(&s, &test_field);
        let djf = d_j_field(&test_field);
        for q in samples(&SampleDomain::boxed(1.0), 10) {
            let a = d_j_on_oneform(&dhf, &q).unwrap();
            let b = d_h_on_oneform(&s, &djf, &q).unwrap();
            assert!(a.add(&b).norm() < 1e-10, "anticommutator norm {}", a.add(&b).norm());
        }
    }

    #[test]
    fn projective_deform_adds_p_times_y() {
        let s = flat_spray(2);
        let p_field = crate::expr::compile(
            &crate::expr::parse("y1", 2, false).unwrap(),
            2,
            None,
        )
        .unwrap()
        .with_homogeneity(1);
        let deformed = projective_deform(&s, &p_field, "y1").unwrap();
        let q = p(&[0.1, 0.2], &[0.7, -0.4]);
        let g = deformed.g_values(&q).unwrap();
        assert!((g[0] - 0.7 * 0.7).abs() < 1e-14);
        assert!((g[1] - 0.7 * -0.4).abs() < 1e-14);
    }

    #[test]
    fn projective_deform_rejects_non_homogeneous_factor() {
        let s = flat_spray(2);
        let p_field = crate::expr::compile(
            &crate::expr::parse("y1^2", 2, false).unwrap(),
            2,
            None,
        )
        .unwrap()
        .with_homogeneity(1);
        assert!(matches!(
            projective_deform(&s, &p_field, "y1^2"),
            Err(Error::Homogeneity { .. })
        ));
    }

    #[test]
    fn deformed_flat_jacobi_closed_form() {
        // S~ = flat - 2 F_euclidean C has Phi~ = F^2 J - F d_JF (x) C,
        // which at y = (1, 0) is diag(0, 1).
        let s = flat_spray(2);
        let f = metric_field("euclidean", 2).unwrap();
        let deformed = projective_deform(&s, &f, "F").unwrap();
        let phi = jacobi(&deformed, &p(&[0.3, -0.4], &[1.0, 0.0])).unwrap();
        let want = [[0.0, 0.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (phi.phi[i][j] - want[i][j]).abs() < 1e-9,
                    "Phi~[{i}][{j}] = {}",
                    phi.phi[i][j]
                );
            }
        }
    }

    #[test]
    fn geodesic_contract_holds_for_catalog_metrics() {
        for name in ["euclidean", "sphere", "klein", "funk-ball"] {
            let f = metric_field(name, 2).unwrap();
            let s = geodesic_spray(&f);
            for q in samples(&f.sample_domain(), 20) {
                let c = geodesic_contract(&f, &s, &q).unwrap();
                assert!(c.d_h_f.norm() < 1e-9, "{name}: |d_h F| = {}", c.d_h_f.norm());
                for v in c.euler_lagrange_dx.iter().chain(&c.euler_lagrange_dy) {
                    assert!(v.abs() < 1e-9, "{name}: Euler-Lagrange residual {v}");
                }
            }
        }
    }

    #[test]
    fn oneform_field_derivations_match_pointwise_values() {
        let f = metric_field("sphere", 2).unwrap();
        let s = geodesic_spray(&f);
        let q = p(&[0.2, 0.1], &[1.1, -0.6]);
        let dj = d_j_field(&f);
        assert!(dj.at(&q).unwrap().sub(&d_j_at(&f, &q).unwrap()).norm() < 1e-12);
        let dh = d_h_field(&s, &f);
        assert!(dh.at(&q).unwrap().sub(&d_h_at(&s, &f, &q).unwrap()).norm() < 1e-10);
        let dphi = d_phi_field(&s, &f);
        assert!(dphi.at(&q).unwrap().sub(&d_phi_at(&s, &f, &q).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn phi_jets_constant_term_matches_jacobi() {
        let f = metric_field("klein", 2).unwrap();
        let s = geodesic_spray(&f);
        let q = p(&[0.2, -0.3], &[0.9, 0.8]);
        let phi = jacobi(&s, &q).unwrap();
        let jets = phi_jets(&s, &q, 1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (jets[i][j].val() - phi.phi[i][j]).abs() < 1e-9,
                    "phi_jets[{i}][{j}] = {} vs {}",
                    jets[i][j].val(),
                    phi.phi[i][j]
                );
            }
        }
    }
}
