//! Least-squares search for Funk functions over a rational 1-homogeneous
//! ansatz `P(x, y) = (u_i + V_ij x^j) y^i / (1 + w_k x^k)`, driven by
//! Levenberg-Marquardt with deterministic multi-start.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{connection, Spray};
use crate::jets::{jet_space, Jet, PhasePoint};
use crate::sampling::sample_points;

/// Normalization penalty weight at the reference point.
const PENALTY_WEIGHT: f64 = 1e3;
/// Minimum admissible denominator value on the sample set.
const MIN_DENOMINATOR: f64 = 0.1;

/// Ansatz parameters. The induced field is exactly 1-homogeneous in `y`
/// for every value of theta.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ansatz {
    pub u: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub w: Vec<f64>,
}

impl Ansatz {
    pub fn dim(n: usize) -> usize {
        2 * n + n * n
    }

    pub fn from_theta(n: usize, theta: &[f64]) -> Ansatz {
        assert_eq!(theta.len(), Self::dim(n));
        let u = theta[..n].to_vec();
        let v = (0..n)
            .map(|i| theta[n + i * n..n + (i + 1) * n].to_vec())
            .collect();
        let w = theta[n + n * n..].to_vec();
        Ansatz { u, v, w }
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.u.clone();
        for row in &self.v {
            t.extend_from_slice(row);
        }
        t.extend_from_slice(&self.w);
        t
    }

    pub fn denominator(&self, x: &[f64]) -> f64 {
        1.0 + self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.u.len();
        let num: f64 = (0..n)
            .map(|i| {
                (self.u[i] + (0..n).map(|j| self.v[i][j] * x[j]).sum::<f64>()) * y[i]
            })
            .sum();
        num / self.denominator(x)
    }

    /// The induced 1-homogeneous scalar field.
    pub fn field(&self, n: usize) -> ScalarField {
        let a = self.clone();
        ScalarField::from_jet_expr(n, move |vars| {
            let space = vars[0].space().clone();
            let mut den = Jet::constant(&space, 1.0);
            for (k, wk) in a.w.iter().enumerate() {
                den = &den + &vars[k].scale(*wk);
            }
            let mut num = Jet::constant(&space, 0.0);
            for i in 0..a.u.len() {
                let mut coef = Jet::constant(&space, a.u[i]);
                for j in 0..a.u.len() {
                    coef = &coef + &vars[j].scale(a.v[i][j]);
                }
                let t = &coef * &vars[a.u.len() + i];
                num = &num + &t;
            }
            num.div(&den)
        })
        .with_homogeneity(1)
    }
}

/// Per-sample data the residuals need but theta does not change.
struct PreparedSample {
    x: Vec<f64>,
    y: Vec<f64>,
    nmat: Vec<Vec<f64>>,
}

fn prepare_samples(s: &Spray, points: &[PhasePoint]) -> Result<Vec<PreparedSample>> {
    points
        .iter()
        .map(|q| {
            let conn = connection(s, q)?;
            Ok(PreparedSample {
                x: q.x().to_vec(),
                y: q.y().to_vec(),
                nmat: conn.nmat,
            })
        })
        .collect()
}

/// Residual rows for one sample as order-1 jets in theta:
/// `r_k = dP/dx^k - N^j_k dP/dy^j - P dP/dy^k`.
fn sample_residual_jets(n: usize, theta_jets: &[Jet], sample: &PreparedSample) -> Result<Vec<Jet>> {
    let space = theta_jets[0].space().clone();
    let u = &theta_jets[..n];
    let v = |i: usize, j: usize| &theta_jets[n + i * n + j];
    let w = &theta_jets[n + n * n..];
    let x = &sample.x;
    let y = &sample.y;

    let mut den = Jet::constant(&space, 1.0);
    for k in 0..n {
        den = &den + &w[k].scale(x[k]);
    }
    if den.val() <= MIN_DENOMINATOR {
        return Err(Error::AnsatzDomain(format!(
            "denominator {:.4} <= {MIN_DENOMINATOR} at x = {:?}",
            den.val(),
            x
        )));
    }
    let den_inv = den.recip()?;

    // a_i = u_i + V_ij x^j, A = a_i y^i
    let mut a_coef = Vec::with_capacity(n);
    let mut a_total = Jet::constant(&space, 0.0);
    for i in 0..n {
        let mut c = u[i].clone();
        for j in 0..n {
            c = &c + &v(i, j).scale(x[j]);
        }
        a_total = &a_total + &c.scale(y[i]);
        a_coef.push(c);
    }
    let p = &a_total * &den_inv;
    let dpdy: Vec<Jet> = a_coef.iter().map(|c| c * &den_inv).collect();
    let mut residuals = Vec::with_capacity(n);
    for k in 0..n {
        // dP/dx^k = (V_ik y^i)/B - A w_k / B^2
        let mut vy = Jet::constant(&space, 0.0);
        for i in 0..n {
            vy = &vy + &v(i, k).scale(y[i]);
        }
        let t1 = &vy * &den_inv;
        let t2 = &(&a_total * &w[k]) * &(&den_inv * &den_inv);
        let mut r = &t1 - &t2;
        for j in 0..n {
            r = &r - &dpdy[j].scale(sample.nmat[j][k]);
        }
        let t = &p * &dpdy[k];
        r = &r - &t;
        residuals.push(r);
    }
    Ok(residuals)
}

fn penalty_jet(theta_jets: &[Jet]) -> Jet {
    // sqrt(lambda) * (P(0, e1) - 1); at the reference point P = u_1.
    theta_jets[0].add_scalar(-1.0).scale(PENALTY_WEIGHT.sqrt())
}

/// Stacked residual vector and objective value for given parameters.
pub fn objective(s: &Spray, ansatz: &Ansatz, points: &[PhasePoint]) -> Result<(f64, Vec<f64>)> {
    let n = s.n();
    let prepared = prepare_samples(s, points)?;
    let theta = ansatz.theta();
    let space = jet_space(theta.len(), 0);
    let theta_jets: Vec<Jet> = theta
        .iter()
        .map(|v| Jet::constant(&space, *v))
        .collect();
    let mut r = Vec::with_capacity(n * prepared.len() + 1);
    for sample in &prepared {
        for jet in sample_residual_jets(n, &theta_jets, sample)? {
            r.push(jet.val());
        }
    }
    r.push(penalty_jet(&theta_jets).val());
    let value = r.iter().map(|v| v * v).sum();
    Ok((value, r))
}

fn residuals_and_jacobian(
    n: usize,
    theta: &[f64],
    prepared: &[PreparedSample],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dim = theta.len();
    let space = jet_space(dim, 1);
    let theta_jets: Vec<Jet> = theta
        .iter()
        .enumerate()
        .map(|(k, v)| Jet::variable(&space, k, *v))
        .collect();
    let rows = n * prepared.len() + 1;
    let mut r = DVector::zeros(rows);
    let mut jac = DMatrix::zeros(rows, dim);
    let mut mu = vec![0u8; dim];
    let mut row = 0;
    let push = |jet: &Jet, row: usize, r: &mut DVector<f64>, jac: &mut DMatrix<f64>, mu: &mut Vec<u8>| {
        r[row] = jet.val();
        for k in 0..dim {
            mu[k] = 1;
            jac[(row, k)] = jet.partial(mu);
            mu[k] = 0;
        }
    };
    for sample in prepared {
        for jet in sample_residual_jets(n, &theta_jets, sample)? {
            push(&jet, row, &mut r, &mut jac, &mut mu);
            row += 1;
        }
    }
    let pen = penalty_jet(&theta_jets);
    push(&pen, row, &mut r, &mut jac, &mut mu);
    Ok((r, jac))
}

/// Outcome of one Levenberg-Marquardt run.
struct LmRun {
    theta: Vec<f64>,
    cost: f64,
    iterations: usize,
    cost_history: Vec<f64>,
}

/// Damped Gauss-Newton with mu *= 10 on reject, mu *= 0.5 on accept;
/// stops at gradient norm < 1e-12 or the iteration cap.
fn lm_minimize(
    n: usize,
    theta0: Vec<f64>,
    prepared: &[PreparedSample],
    max_iter: usize,
) -> Result<LmRun> {
    let dim = theta0.len();
    let mut theta = theta0;
    let (mut r, mut jac) = residuals_and_jacobian(n, &theta, prepared)?;
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut history = vec![cost];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let grad = jac.transpose() * &r;
        if grad.norm() < 1e-12 {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut accepted = false;
        loop {
            let mut damped = jtj.clone();
            for k in 0..dim {
                damped[(k, k)] += mu * (jtj[(k, k)] + 1e-12);
            }
            let Some(step) = damped.clone().lu().solve(&(-&grad)) else {
                mu *= 10.0;
                if mu > 1e14 {
                    break;
                }
                continue;
            };
            let trial: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + s)
                .collect();
            match residuals_and_jacobian(n, &trial, prepared) {
                Ok((r_new, jac_new)) => {
                    let cost_new = r_new.norm_squared();
                    if cost_new < cost {
                        theta = trial;
                        r = r_new;
                        jac = jac_new;
                        cost = cost_new;
                        history.push(cost);
                        mu = (mu * 0.5).max(1e-14);
                        accepted = true;
                        break;
                    }
                    mu *= 10.0;
                }
                Err(Error::AnsatzDomain(_)) => {
                    mu *= 10.0;
                }
                Err(e) => return Err(e),
            }
            if mu > 1e14 {
                break;
            }
        }
        if !accepted {
            break;
        }
        if cost < 1e-28 {
            break;
        }
    }
    Ok(LmRun {
        theta,
        cost,
        iterations,
        cost_history: history,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub samples: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            restarts: 16,
            max_iter: 200,
            seed: 42,
            samples: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchResult {
    pub best: Ansatz,
    pub train_rms: f64,
    pub validation_rms: f64,
    pub validation_sup: f64,
    pub restart_index: usize,
    pub iterations: usize,
    pub restarts_attempted: usize,
    pub seed: u64,
}

const VALIDATION_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn init_theta(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    prepared: &[PreparedSample],
) -> Option<Vec<f64>> {
    let dim = Ansatz::dim(n);
    'outer: for _ in 0..200 {
        let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        let a = Ansatz::from_theta(n, &theta);
        for s in prepared {
            if a.denominator(&s.x) <= MIN_DENOMINATOR {
                continue 'outer;
            }
        }
        return Some(theta);
    }
    None
}

/// Multi-start Funk-function search. Deterministic: a fixed config yields
/// a bit-identical result.
pub fn search_funk(s: &Spray, config: &SearchConfig) -> Result<SearchResult> {
    let n = s.n();
    let train_points = sample_points(&s.domain, n, config.samples, config.seed);
    let val_points = sample_points(
        &s.domain,
        n,
        config.samples,
        config.seed.wrapping_add(VALIDATION_SEED_OFFSET),
    );
    let prepared = prepare_samples(s, &train_points)?;
    let prepared_val = prepare_samples(s, &val_points)?;

    let mut best: Option<(f64, usize, LmRun)> = None;
    for restart in 0..config.restarts {
        let mut rng = crate::sampling::seeded_rng(
            config
                .seed
                .wrapping_add((restart as u64).wrapping_mul(0x2545_F491_4F6C_DD1D)),
        );
        let Some(theta0) = init_theta(&mut rng, n, &prepared) else {
            continue;
        };
        let run = lm_minimize(n, theta0, &prepared, config.max_iter)?;
        // Validation residual (funk components only, no penalty row).
        let space = jet_space(run.theta.len(), 0);
        let theta_jets: Vec<Jet> = run.theta.iter().map(|v| Jet::constant(&space, *v)).collect();
        let mut ok = true;
        let mut sq = 0.0;
        let mut count = 0usize;
        for sample in &prepared_val {
            match sample_residual_jets(n, &theta_jets, sample) {
                Ok(jets) => {
                    for j in jets {
                        let v = j.val();
                        sq += v * v;
                        count += 1;
                    }
                }
                Err(Error::AnsatzDomain(_)) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !ok {
            continue;
        }
        let val_rms = (sq / count.max(1) as f64).sqrt();
        let better = match &best {
            None => true,
            Some((best_rms, best_idx, _)) => {
                (val_rms, restart) < (*best_rms, *best_idx)
            }
        };
        if better {
            let train_rows = (n * prepared.len()) as f64;
            let train_rms = (run.cost / (train_rows + 1.0)).sqrt();
            best = Some((
                val_rms,
                restart,
                LmRun {
                    cost: train_rms,
                    ..run
                },
            ));
        }
    }
    let Some((val_rms, restart_index, run)) = best else {
        return Err(Error::NoProgress(
            "no restart produced a feasible parameter vector".into(),
        ));
    };
    // Recompute validation sup for the winner (cost_history stash is not
    // part of the public result).
    let space = jet_space(run.theta.len(), 0);
    let theta_jets: Vec<Jet> = run.theta.iter().map(|v| Jet::constant(&space, *v)).collect();
    let mut sup = 0.0_f64;
    for sample in &prepared_val {
        for j in sample_residual_jets(n, &theta_jets, sample)? {
            sup = sup.max(j.val().abs());
        }
    }
    Ok(SearchResult {
        best: Ansatz::from_theta(n, &run.theta),
        train_rms: run.cost,
        validation_rms: val_rms,
        validation_sup: sup,
        restart_index,
        iterations: run.iterations,
        restarts_attempted: config.restarts,
        seed: config.seed,
    })
}

/// Accepted-step cost history of a single LM run; exposed for the
/// monotonicity property test.
pub fn lm_cost_history(
    s: &Spray,
    theta0: Vec<f64>,
    points: &[PhasePoint],
    max_iter: usize,
) -> Result<Vec<f64>> {
    let prepared = prepare_samples(s, points)?;
    Ok(lm_minimize(s.n(), theta0, &prepared, max_iter)?.cost_history)
}
