//! Detectors and residual evaluators: Funk equation, isotropy, scalar
//! flag curvature, the projective-deformation curvature formula, and the
//! obstruction chain behind the non-existence result.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{
    curvature_r, d_h_at, d_h_field, d_h_on_oneform, d_j_at, d_j_field, d_j_on_oneform, d_phi_at,
    d_phi_field, d_phi_on_oneform, d_r_on_function, geodesic_spray, interior_s, jacobi, Spray,
};
use crate::jets::PhasePoint;
use crate::sampling::fiber_directions;

fn check_one_homogeneous(p_field: &ScalarField, samples: &[PhasePoint]) -> Result<()> {
    let n = p_field.n();
    for q in samples {
        let jet = p_field.eval_jet(q, 1)?;
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
    Ok(())
}

/// Residuals of the Funk equation `d_h P = P d_J P` over a sample set.
#[derive(Clone, Debug, Serialize)]
pub struct FunkResidualReport {
    pub sample_count: usize,
    pub seed: Option<u64>,
    pub sup_norm: f64,
    pub rms: f64,
    /// Sup of `|P| * |d_J P|` over the samples; the natural residual scale.
    pub scale: f64,
    pub samples: Vec<FunkSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FunkSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residual: Vec<f64>,
    pub norm: f64,
}

pub fn funk_residual(
    s: &Spray,
    p_field: &ScalarField,
    samples: &[PhasePoint],
    seed: Option<u64>,
) -> Result<FunkResidualReport> {
    check_one_homogeneous(p_field, samples)?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut sup = 0.0_f64;
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    let mut scale = 0.0_f64;
    for q in samples {
        let dh = d_h_at(s, p_field, q)?;
        let dj = d_j_at(p_field, q)?;
        let pv = p_field.value(q)?;
        let residual: Vec<f64> = dh
            .0
            .iter()
            .zip(&dj.0)
            .map(|(h, j)| h - pv * j)
            .collect();
        let norm = residual.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        sup = sup.max(norm);
        for v in &residual {
            sq_sum += v * v;
            count += 1;
        }
        scale = scale.max(pv.abs() * dj.norm());
        rows.push(FunkSample {
            x: q.x().to_vec(),
            y: q.y().to_vec(),
            residual,
            norm,
        });
    }
    Ok(FunkResidualReport {
        sample_count: samples.len(),
        seed,
        sup_norm: sup,
        rms: (sq_sum / count.max(1) as f64).sqrt(),
        scale,
        samples: rows,
    })
}

/// Rank-1 decomposition `Phi = rho J - alpha (x) C` per sample.
#[derive(Clone, Debug, Serialize)]
pub struct IsotropyReport {
    pub sample_count: usize,
    pub seed: Option<u64>,
    pub max_residual: f64,
    pub max_alpha_s_mismatch: f64,
    pub samples: Vec<IsotropySample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IsotropySample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
    pub alpha: Vec<f64>,
    /// Max-abs reconstruction error of `rho J - alpha (x) C` against `Phi`.
    pub residual: f64,
    /// `|alpha(S) - rho|`; `Phi(S) = 0` forces `alpha(S) = rho`.
    pub alpha_s_mismatch: f64,
}

pub fn isotropy_decompose(
    s: &Spray,
    samples: &[PhasePoint],
    seed: Option<u64>,
) -> Result<IsotropyReport> {
    let n = s.n();
    if n < 2 {
        return Err(Error::Degenerate("isotropy needs n >= 2".into()));
    }
    let mut rows = Vec::with_capacity(samples.len());
    let mut max_residual = 0.0_f64;
    let mut max_mismatch = 0.0_f64;
    for q in samples {
        let phi = jacobi(s, q)?;
        let rho = phi.trace() / (n as f64 - 1.0);
        let y = q.y();
        let y2: f64 = y.iter().map(|v| v * v).sum();
        // Least squares over i of Phi^i_j - rho d^i_j = -alpha_j y^i.
        let alpha: Vec<f64> = (0..n)
            .map(|j| {
                let num: f64 = (0..n)
                    .map(|i| {
                        let d = if i == j { rho } else { 0.0 };
                        (phi.phi[i][j] - d) * y[i]
                    })
                    .sum();
                -num / y2
            })
            .collect();
        let mut residual = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { rho } else { 0.0 };
                let recon = d - alpha[j] * y[i];
                residual = residual.max((phi.phi[i][j] - recon).abs());
            }
        }
        let alpha_s: f64 = alpha.iter().zip(y).map(|(a, v)| a * v).sum();
        let mismatch = (alpha_s - rho).abs();
        max_residual = max_residual.max(residual);
        max_mismatch = max_mismatch.max(mismatch);
        rows.push(IsotropySample {
            x: q.x().to_vec(),
            y: q.y().to_vec(),
            rho,
            alpha,
            residual,
            alpha_s_mismatch: mismatch,
        });
    }
    Ok(IsotropyReport {
        sample_count: samples.len(),
        seed,
        max_residual,
        max_alpha_s_mismatch: max_mismatch,
        samples: rows,
    })
}

/// Scalar flag curvature extraction `Phi = kappa (F^2 J - F d_JF (x) C)`.
#[derive(Clone, Debug, Serialize)]
pub struct FlagCurvatureReport {
    pub sample_count: usize,
    pub seed: Option<u64>,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub kappa_mean: f64,
    pub max_residual: f64,
    /// Residual scale: sup of `1 + |kappa| F^2 + max |Phi|`.
    pub scale: f64,
    pub samples: Vec<FlagSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlagSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub kappa: f64,
    pub residual: f64,
}

pub fn flag_curvature(
    f: &ScalarField,
    samples: &[PhasePoint],
    seed: Option<u64>,
) -> Result<FlagCurvatureReport> {
    let n = f.n();
    let s = geodesic_spray(f);
    let mut rows = Vec::with_capacity(samples.len());
    let (mut kmin, mut kmax, mut ksum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    let mut max_residual = 0.0_f64;
    let mut scale = 1.0_f64;
    for q in samples {
        let phi = jacobi(&s, q)?;
        let fv = f.value(q)?;
        let djf = d_j_at(f, q)?;
        let f2 = fv * fv;
        let kappa = phi.trace() / ((n as f64 - 1.0) * f2);
        let mut residual = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { f2 } else { 0.0 };
                let model = kappa * (d - fv * djf.0[j] * q.y()[i]);
                residual = residual.max((phi.phi[i][j] - model).abs());
            }
        }
        kmin = kmin.min(kappa);
        kmax = kmax.max(kappa);
        ksum += kappa;
        max_residual = max_residual.max(residual);
        scale = scale.max(1.0 + kappa.abs() * f2 + phi.max_abs());
        rows.push(FlagSample {
            x: q.x().to_vec(),
            y: q.y().to_vec(),
            kappa,
            residual,
        });
    }
    Ok(FlagCurvatureReport {
        sample_count: samples.len(),
        seed,
        kappa_min: kmin,
        kappa_max: kmax,
        kappa_mean: ksum / samples.len().max(1) as f64,
        max_residual,
        scale,
        samples: rows,
    })
}

/// Agreement of the two routes to the deformed Jacobi endomorphism:
/// direct recomputation on `S - 2PC` versus the closed-form update.
#[derive(Clone, Debug, Serialize)]
pub struct PhiDeformReport {
    pub sample_count: usize,
    pub seed: Option<u64>,
    pub max_rel_diff: f64,
    pub samples: Vec<PhiDeformSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiDeformSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rel_diff: f64,
}

pub fn verify_phiphi0(
    s: &Spray,
    p_field: &ScalarField,
    samples: &[PhasePoint],
    seed: Option<u64>,
) -> Result<PhiDeformReport> {
    check_one_homogeneous(p_field, samples)?;
    let n = s.n();
    let deformed = crate::geometry::projective_deform(s, p_field, "P")?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut max_rel = 0.0_f64;
    for q in samples {
        let phi_direct = jacobi(&deformed, q)?;
        let phi = jacobi(s, q)?;
        // S(P) - P^2 as an order-1 jet for its fiber derivative.
        let g1 = s.g_jets(q, 1)?;
        let pj = p_field.eval_jet(q, 2)?;
        let space = crate::jets::jet_space(2 * n, 1);
        let mut sp = crate::jets::Jet::constant(&space, 0.0);
        for k in 0..n {
            let yk = crate::jets::Jet::variable(&space, n + k, q.y()[k]);
            let t = &yk * &pj.derivative(k);
            sp = &sp + &t;
            let t = &g1[k].scale(2.0) * &pj.derivative(n + k);
            sp = &sp - &t;
        }
        let p1 = pj.truncate(1);
        let quad = &sp - &(&p1 * &p1);
        let quad_val = quad.val();
        let dh = d_h_at(s, p_field, q)?;
        let dj = d_j_at(p_field, q)?;
        let pv = p_field.value(q)?;
        let mut formula = vec![vec![0.0; n]; n];
        let mut scale = 1.0_f64;
        for i in 0..n {
            for j in 0..n {
                let mut mu = vec![0u8; 2 * n];
                mu[n + j] = 1;
                let d_j_quad = quad.partial(&mu);
                let diag = if i == j { -quad_val } else { 0.0 };
                let semi = d_j_quad + 3.0 * (pv * dj.0[j] - dh.0[j]);
                formula[i][j] = phi.phi[i][j] + diag - semi * q.y()[i];
                scale = scale.max(phi_direct.phi[i][j].abs());
            }
        }
        let mut diff = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                diff = diff.max((phi_direct.phi[i][j] - formula[i][j]).abs());
            }
        }
        let rel = diff / scale;
        max_rel = max_rel.max(rel);
        rows.push(PhiDeformSample {
            x: q.x().to_vec(),
            y: q.y().to_vec(),
            rel_diff: rel,
        });
    }
    Ok(PhiDeformReport {
        sample_count: samples.len(),
        seed,
        max_rel_diff: max_rel,
        samples: rows,
    })
}

/// Report for the obstruction chain of the non-existence argument.
#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub sample_count: usize,
    pub seed: Option<u64>,
    pub kappa_min_abs: f64,
    pub sup_d_r_p: f64,
    pub sup_d_phi_p: f64,
    pub sup_d_j_p_over_f: f64,
    pub max_fiber_variance: f64,
    pub any_a_near_zero: bool,
    pub samples: Vec<ChainSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d_r_p_norm: f64,
    pub d_phi_p_norm: f64,
    pub d_j_p_over_f_norm: f64,
    pub funk_residual: Vec<f64>,
    /// `-F d_J F` at the sample, for comparison with the Funk residual of
    /// candidates of the form `a(x) F`.
    pub minus_f_d_j_f: Vec<f64>,
    /// Fitted base value `a(x) = mean of P/F` over fiber directions.
    pub a_fitted: f64,
    pub fiber_variance: f64,
    pub a_near_zero: bool,
    /// `|| d(-1/a) - d_J F ||` with `d(-1/a)` from base-space differences.
    pub dajf_mismatch: Option<f64>,
}

/// Fit `a(x)` by averaging `P/F` over fixed fiber directions at `x`.
fn fit_base_factor(
    p_field: &ScalarField,
    f: &ScalarField,
    x: &[f64],
    dirs: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let mut vals = Vec::with_capacity(dirs.len());
    for d in dirs {
        let q = PhasePoint::new(x.to_vec(), d.clone())?;
        let pv = p_field.value(&q)?;
        let fv = f.value(&q)?;
        if fv.abs() < 1e-12 {
            return Err(Error::Domain("F vanishes on the fiber sample".into()));
        }
        vals.push(pv / fv);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
    Ok((mean, var))
}

pub fn obstruction_chain(
    f: &ScalarField,
    p_field: &ScalarField,
    samples: &[PhasePoint],
    seed: Option<u64>,
) -> Result<ChainReport> {
    let n = f.n();
    check_one_homogeneous(p_field, samples)?;
    let flag = flag_curvature(f, samples, seed)?;
    let kappa_min_abs = flag
        .samples
        .iter()
        .map(|r| r.kappa.abs())
        .fold(f64::INFINITY, f64::min);
    if !(kappa_min_abs > 0.01) {
        return Err(Error::Precondition(format!(
            "the chain needs non-vanishing scalar flag curvature; min |kappa| = {kappa_min_abs:.3e}"
        )));
    }
    let s = geodesic_spray(f);
    let p_over_f = {
        let pf = p_field.clone();
        let ff = f.clone();
        ScalarField::new(n, move |q, order| {
            pf.eval_jet(q, order)?.div(&ff.eval_jet(q, order)?)
        })
    };
    let dirs = fiber_directions(n, 8);
    let fd_step = 1e-4;
    let mut rows = Vec::with_capacity(samples.len());
    let mut sup_dr = 0.0_f64;
    let mut sup_dphi = 0.0_f64;
    let mut sup_djpf = 0.0_f64;
    let mut max_var = 0.0_f64;
    let mut any_zero = false;
    for q in samples {
        let d_r_p = d_r_on_function(&s, p_field, q)?;
        let d_phi_p = d_phi_at(&s, p_field, q)?;
        let d_j_pf = d_j_at(&p_over_f, q)?;
        let dh = d_h_at(&s, p_field, q)?;
        let dj = d_j_at(p_field, q)?;
        let pv = p_field.value(q)?;
        let funk: Vec<f64> = dh.0.iter().zip(&dj.0).map(|(h, j)| h - pv * j).collect();
        let fv = f.value(q)?;
        let djf = d_j_at(f, q)?;
        let minus_f_djf: Vec<f64> = djf.0.iter().map(|v| -fv * v).collect();
        let (a, var) = fit_base_factor(p_field, f, q.x(), &dirs)?;
        let a_near_zero = a.abs() < 1e-6;
        let mismatch = if a_near_zero {
            any_zero = true;
            None
        } else {
            // d(-1/a) by central differences of the fitted a on the base.
            let mut grad = vec![0.0; n];
            for k in 0..n {
                let mut xp = q.x().to_vec();
                let mut xm = q.x().to_vec();
                xp[k] += fd_step;
                xm[k] -= fd_step;
                let (ap, _) = fit_base_factor(p_field, f, &xp, &dirs)?;
                let (am, _) = fit_base_factor(p_field, f, &xm, &dirs)?;
                grad[k] = ((-1.0 / ap) - (-1.0 / am)) / (2.0 * fd_step);
            }
            let m = grad
                .iter()
                .zip(&djf.0)
                .map(|(g, d)| (g - d).abs())
                .fold(0.0_f64, f64::max);
            Some(m)
        };
        sup_dr = sup_dr.max(d_r_p.norm());
        sup_dphi = sup_dphi.max(d_phi_p.norm());
        sup_djpf = sup_djpf.max(d_j_pf.norm());
        max_var = max_var.max(var);
        rows.push(ChainSample {
            x: q.x().to_vec(),
            y: q.y().to_vec(),
            d_r_p_norm: d_r_p.norm(),
            d_phi_p_norm: d_phi_p.norm(),
            d_j_p_over_f_norm: d_j_pf.norm(),
            funk_residual: funk,
            minus_f_d_j_f: minus_f_djf,
            a_fitted: a,
            fiber_variance: var,
            a_near_zero,
            dajf_mismatch: mismatch,
        });
    }
    Ok(ChainReport {
        sample_count: samples.len(),
        seed,
        kappa_min_abs,
        sup_d_r_p: sup_dr,
        sup_d_phi_p: sup_dphi,
        sup_d_j_p_over_f: sup_djpf,
        max_fiber_variance: max_var,
        any_a_near_zero: any_zero,
        samples: rows,
    })
}

/// Sup-norm residual table for the derivation identities used by the
/// obstruction chain.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub sample_count: usize,
    pub seed: Option<u64>,
    pub rows: Vec<IdentityRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    pub field: String,
    /// `d_J d_h f + d_h d_J f = 0`
    pub anticommutator: f64,
    /// `d_h^2 f = d_R f`
    pub d_h_squared: f64,
    /// `d_J d_Phi f + d_Phi d_J f = 3 d_R f`
    pub three_d_r: f64,
    /// `i_S d_R f = d_Phi f` (1-homogeneous fields only)
    pub interior_d_r: Option<f64>,
}

pub fn identity_suite(
    s: &Spray,
    fields: &[(String, ScalarField)],
    samples: &[PhasePoint],
    seed: Option<u64>,
) -> Result<IdentityReport> {
    let mut rows = Vec::with_capacity(fields.len());
    for (name, f) in fields {
        let dhf = d_h_field(s, f);
        let djf = d_j_field(f);
        let dphif = d_phi_field(s, f);
        let mut r1 = 0.0_f64;
        let mut r2 = 0.0_f64;
        let mut r3 = 0.0_f64;
        let mut r4: Option<f64> = if f.homogeneity() == Some(1) {
            Some(0.0)
        } else {
            None
        };
        for q in samples {
            let a = d_j_on_oneform(&dhf, q)?;
            let b = d_h_on_oneform(s, &djf, q)?;
            let scale = 1.0 + a.norm() + b.norm();
            r1 = r1.max(a.add(&b).norm() / scale);

            let a = d_h_on_oneform(s, &dhf, q)?;
            let b = d_r_on_function(s, f, q)?;
            let scale = 1.0 + a.norm() + b.norm();
            r2 = r2.max(a.sub(&b).norm() / scale);

            let a = d_j_on_oneform(&dphif, q)?;
            let c = d_phi_on_oneform(s, &djf, q)?;
            let b3 = d_r_on_function(s, f, q)?.scale(3.0);
            let scale = 1.0 + a.norm() + c.norm() + b3.norm();
            r3 = r3.max(a.add(&c).sub(&b3).norm() / scale);

            if let Some(acc) = r4 {
                let dr = d_r_on_function(s, f, q)?;
                let lhs = interior_s(&dr, q);
                let rhs = d_phi_at(s, f, q)?;
                let scale = 1.0 + lhs.norm() + rhs.norm();
                r4 = Some(acc.max(lhs.sub(&rhs).norm() / scale));
            }
        }
        rows.push(IdentityRow {
            field: name.clone(),
            anticommutator: r1,
            d_h_squared: r2,
            three_d_r: r3,
            interior_d_r: r4,
        });
    }
    Ok(IdentityReport {
        sample_count: samples.len(),
        seed,
        rows,
    })
}

/// Direct-contraction check for `d_R f`: assemble `R^i_jk df/dy^i` from
/// `curvature_r` by hand at a point (used as an oracle in tests).
pub fn d_r_direct_contraction(
    s: &Spray,
    f: &ScalarField,
    q: &PhasePoint,
) -> Result<crate::geometry::TwoForm> {
    let n = s.n();
    let r = curvature_r(s, q)?;
    let jet = f.eval_jet(q, 1)?;
    let mut mu = vec![0u8; 2 * n];
    let mut w = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            for i in 0..n {
                mu[n + i] = 1;
                let fy = jet.partial(&mu);
                mu[n + i] = 0;
                w[j][k] += r.r[i][j][k] * fy;
            }
        }
    }
    Ok(crate::geometry::TwoForm(w))
}
