//! Truncated multivariate Taylor ("jet") arithmetic over phase-space
//! coordinates, plus a finite-difference cross-check oracle.
//!
//! A jet of order `m` in `d` variables stores one coefficient per
//! multi-index of total degree `<= m`. The coefficient of a multi-index
//! `mu` is the mixed partial derivative divided by `mu!`, so arithmetic
//! on jets propagates exact derivatives of composite functions.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// A point of the slit tangent space: chart coordinates `x` and nonzero
/// fiber coordinates `y`, both of length `n >= 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::Degenerate(format!(
                "dimension must be at least 2, got {}",
                x.len()
            )));
        }
        if x.len() != y.len() {
            return Err(Error::Degenerate(format!(
                "x has length {} but y has length {}",
                x.len(),
                y.len()
            )));
        }
        if y.iter().all(|v| *v == 0.0) {
            return Err(Error::Domain("y = 0 is outside the slit tangent space".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        Ok(PhasePoint { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Flat coordinate access: variables `0..n` are `x`, `n..2n` are `y`.
    pub fn coord(&self, var: usize) -> f64 {
        let n = self.n();
        if var < n {
            self.x[var]
        } else {
            self.y[var - n]
        }
    }
}

/// Shared per-(dim, order) tables: the graded list of multi-indices,
/// the position map, and the sparse multiplication table.
pub struct JetSpace {
    dim: usize,
    order: usize,
    indices: Vec<Vec<u8>>,
    pos: HashMap<Vec<u8>, usize>,
    /// Triples (i, j, k) with indices[i] + indices[j] = indices[k].
    products: Vec<(u32, u32, u32)>,
}

impl JetSpace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> &[Vec<u8>] {
        &self.indices
    }

    pub fn position(&self, mu: &[u8]) -> Option<usize> {
        self.pos.get(mu).copied()
    }
}

fn gen_indices(dim: usize, order: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for deg in 0..=order {
        let mut cur = vec![0u8; dim];
        gen_degree(dim, deg as u8, 0, &mut cur, &mut out);
    }
    out
}

fn gen_degree(dim: usize, remaining: u8, at: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if at == dim - 1 {
        cur[at] = remaining;
        out.push(cur.clone());
        cur[at] = 0;
        return;
    }
    for v in (0..=remaining).rev() {
        cur[at] = v;
        gen_degree(dim, remaining - v, at + 1, cur, out);
    }
    cur[at] = 0;
}

fn space_cache() -> &'static Mutex<HashMap<(usize, usize), Arc<JetSpace>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Get (and memoize) the jet space for a given dimension and truncation order.
pub fn jet_space(dim: usize, order: usize) -> Arc<JetSpace> {
    assert!(dim >= 1, "jet dimension must be positive");
    let mut cache = space_cache().lock().unwrap();
    if let Some(s) = cache.get(&(dim, order)) {
        return Arc::clone(s);
    }
    let indices = gen_indices(dim, order);
    let mut pos = HashMap::with_capacity(indices.len());
    for (k, mu) in indices.iter().enumerate() {
        pos.insert(mu.clone(), k);
    }
    let degree: Vec<usize> = indices
        .iter()
        .map(|mu| mu.iter().map(|&v| v as usize).sum())
        .collect();
    let mut products = Vec::new();
    let mut sum = vec![0u8; dim];
    for i in 0..indices.len() {
        for j in 0..indices.len() {
            if degree[i] + degree[j] > order {
                continue;
            }
            for d in 0..dim {
                sum[d] = indices[i][d] + indices[j][d];
            }
            let k = pos[&sum];
            products.push((i as u32, j as u32, k as u32));
        }
    }
    let space = Arc::new(JetSpace {
        dim,
        order,
        indices,
        pos,
        products,
    });
    cache.insert((dim, order), Arc::clone(&space));
    space
}

/// A truncated Taylor expansion of a scalar quantity.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    c: Vec<f64>,
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Jet(dim={}, order={}, val={})",
            self.space.dim,
            self.space.order,
            self.val()
        )
    }
}

fn multi_factorial(mu: &[u8]) -> f64 {
    let mut f = 1.0;
    for &m in mu {
        for k in 2..=(m as u64) {
            f *= k as f64;
        }
    }
    f
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, v: f64) -> Jet {
        let mut c = vec![0.0; space.len()];
        c[0] = v;
        Jet {
            space: Arc::clone(space),
            c,
        }
    }

    /// The coordinate function of variable `var`, expanded at value `val`.
    pub fn variable(space: &Arc<JetSpace>, var: usize, val: f64) -> Jet {
        assert!(var < space.dim);
        let mut j = Jet::constant(space, val);
        if space.order >= 1 {
            let mut mu = vec![0u8; space.dim];
            mu[var] = 1;
            let k = space.position(&mu).unwrap();
            j.c[k] = 1.0;
        }
        j
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    /// The value (constant term) of the expansion.
    pub fn val(&self) -> f64 {
        self.c[0]
    }

    /// All Taylor coefficients in the space's graded index order.
    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Taylor coefficient of a multi-index (zero if absent from storage).
    pub fn coeff(&self, mu: &[u8]) -> f64 {
        match self.space.position(mu) {
            Some(k) => self.c[k],
            None => 0.0,
        }
    }

    /// Exact mixed partial derivative for a multi-index of total degree
    /// within the truncation order.
    pub fn partial(&self, mu: &[u8]) -> f64 {
        let deg: usize = mu.iter().map(|&v| v as usize).sum();
        assert!(
            deg <= self.space.order,
            "partial of degree {} requested from an order-{} jet",
            deg,
            self.space.order
        );
        self.coeff(mu) * multi_factorial(mu)
    }

    /// Jet of the first derivative with respect to `var`, one order lower.
    pub fn derivative(&self, var: usize) -> Jet {
        assert!(self.space.order >= 1, "cannot differentiate an order-0 jet");
        let child = jet_space(self.space.dim, self.space.order - 1);
        let mut c = vec![0.0; child.len()];
        let mut parent_mu = vec![0u8; self.space.dim];
        for (k, mu) in child.indices().iter().enumerate() {
            parent_mu.copy_from_slice(mu);
            parent_mu[var] += 1;
            let p = self.space.position(&parent_mu).unwrap();
            c[k] = self.c[p] * f64::from(mu[var] + 1);
        }
        Jet { space: child, c }
    }

    /// Drop coefficients above `new_order`.
    pub fn truncate(&self, new_order: usize) -> Jet {
        assert!(new_order <= self.space.order);
        if new_order == self.space.order {
            return self.clone();
        }
        let child = jet_space(self.space.dim, new_order);
        let mut c = vec![0.0; child.len()];
        for (k, mu) in child.indices().iter().enumerate() {
            c[k] = self.c[self.space.position(mu).unwrap()];
        }
        Jet { space: child, c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = self.clone();
        for v in &mut out.c {
            *v *= s;
        }
        out
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    pub fn is_same_space(&self, other: &Jet) -> bool {
        self.space.dim == other.space.dim && self.space.order == other.space.order
    }

    /// Compose with a univariate analytic series: `series[k]` must be
    /// `g^(k)(a0)/k!` where `a0` is this jet's constant term. Evaluated by
    /// Horner's rule in the nilpotent part.
    fn compose_series(&self, series: &[f64]) -> Jet {
        let order = self.space.order;
        debug_assert_eq!(series.len(), order + 1);
        let mut u = self.clone();
        u.c[0] = 0.0;
        let mut acc = Jet::constant(&self.space, series[order]);
        for k in (0..order).rev() {
            acc = &acc * &u;
            acc.c[0] += series[k];
        }
        acc
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn recip(&self) -> Result<Jet> {
        let a0 = self.val();
        if a0 == 0.0 || !a0.is_finite() {
            return Err(Error::Domain(
                "division by a jet with zero constant term".into(),
            ));
        }
        let order = self.space.order;
        let mut series = Vec::with_capacity(order + 1);
        let mut s = 1.0 / a0;
        series.push(s);
        for _ in 0..order {
            s = -s / a0;
            series.push(s);
        }
        Ok(self.compose_series(&series))
    }

    /// Square root; requires a positive constant term.
    pub fn sqrt(&self) -> Result<Jet> {
        let a0 = self.val();
        if !(a0 > 0.0) {
            return Err(Error::Domain(format!(
                "sqrt of a jet with non-positive constant term {a0}"
            )));
        }
        let order = self.space.order;
        let mut series = Vec::with_capacity(order + 1);
        // binom(1/2, k) * a0^(1/2 - k)
        let mut s = a0.sqrt();
        series.push(s);
        for k in 1..=order {
            let kf = k as f64;
            s = s * (0.5 - (kf - 1.0)) / kf / a0;
            series.push(s);
        }
        Ok(self.compose_series(&series))
    }

    /// Integer power; negative exponents go through `recip`.
    pub fn powi(&self, e: i32) -> Result<Jet> {
        if e < 0 {
            return self.recip()?.powi(-e);
        }
        let mut acc = Jet::constant(&self.space, 1.0);
        let mut base = self.clone();
        let mut e = e as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        Ok(acc)
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        Ok(self * &other.recip()?)
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        assert!(self.is_same_space(rhs), "jet space mismatch in add");
        let mut out = self.clone();
        for (a, b) in out.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
        out
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        assert!(self.is_same_space(rhs), "jet space mismatch in sub");
        let mut out = self.clone();
        for (a, b) in out.c.iter_mut().zip(rhs.c.iter()) {
            *a -= b;
        }
        out
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        assert!(self.is_same_space(rhs), "jet space mismatch in mul");
        let mut c = vec![0.0; self.space.len()];
        for &(i, j, k) in &self.space.products {
            c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        Jet {
            space: Arc::clone(&self.space),
            c,
        }
    }
}

/// Build the 2n variable jets for a phase point at the requested order.
pub fn phase_variables(p: &PhasePoint, order: usize) -> Vec<Jet> {
    let dim = 2 * p.n();
    let space = jet_space(dim, order);
    (0..dim)
        .map(|v| Jet::variable(&space, v, p.coord(v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(x: &[f64], y: &[f64]) -> PhasePoint {
        PhasePoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn phase_point_validates_input() {
        assert!(PhasePoint::new(vec![0.0], vec![1.0]).is_err()); // n < 2
        assert!(PhasePoint::new(vec![0.0, 0.0], vec![1.0]).is_err()); // length mismatch
        assert!(PhasePoint::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err()); // y = 0
        assert!(PhasePoint::new(vec![0.0, f64::NAN], vec![1.0, 0.0]).is_err());
        assert!(PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn space_cache_returns_shared_instances() {
        let a = jet_space(4, 3);
        let b = jet_space(4, 3);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.len(), 35); // C(4+3, 3)
    }

    #[test]
    fn variable_jet_has_unit_linear_coefficient() {
        let space = jet_space(4, 2);
        let j = Jet::variable(&space, 1, 7.5);
        assert_eq!(j.val(), 7.5);
        assert_eq!(j.coeff(&[0, 1, 0, 0]), 1.0);
        assert_eq!(j.coeff(&[1, 0, 0, 0]), 0.0);
    }

    #[test]
    fn product_and_partials_of_polynomial() {
        // f = x1 * y1^2 at x1 = 2, y1 = 3: d^2 f / dx1 dy1 = 2 y1 = 6.
        let q = pt(&[2.0, 0.0], &[3.0, 1.0]);
        let v = phase_variables(&q, 3);
        let f = &v[0] * &(&v[2] * &v[2]);
        assert_eq!(f.val(), 18.0);
        assert_eq!(f.partial(&[1, 0, 1, 0]), 6.0);
        assert_eq!(f.partial(&[0, 0, 2, 0]), 4.0); // 2 x1
        assert_eq!(f.partial(&[1, 0, 2, 0]), 2.0);
    }

    #[test]
    fn sphere_energy_second_fiber_partial() {
        // F^2 = 4(y1^2+y2^2)/(1+|x|^2)^2 at x = 0: d^2/dy1^2 = 8.
        let q = pt(&[0.0, 0.0], &[1.0, 0.5]);
        let v = phase_variables(&q, 2);
        let sy = &(&v[2] * &v[2]) + &(&v[3] * &v[3]);
        let sx = &(&v[0] * &v[0]) + &(&v[1] * &v[1]);
        let denom = sx.add_scalar(1.0);
        let f2 = &sy.scale(4.0) * &(&denom * &denom).recip().unwrap();
        assert!((f2.partial(&[0, 0, 2, 0]) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_lowers_the_order() {
        let q = pt(&[2.0, 0.0], &[3.0, 1.0]);
        let v = phase_variables(&q, 3);
        let f = &v[0] * &(&v[2] * &v[2]); // x1 y1^2
        let d = f.derivative(2); // 2 x1 y1
        assert_eq!(d.order(), 2);
        assert_eq!(d.val(), 12.0);
        assert_eq!(d.partial(&[1, 0, 0, 0]), 6.0); // 2 y1
    }

    #[test]
    fn recip_matches_series() {
        let space = jet_space(2, 4);
        let a = Jet::variable(&space, 0, 2.0); // 2 + t
        let r = a.recip().unwrap();
        // 1/(2+t) = 1/2 - t/4 + t^2/8 - ...
        assert!((r.val() - 0.5).abs() < 1e-15);
        assert!((r.coeff(&[1, 0]) + 0.25).abs() < 1e-15);
        assert!((r.coeff(&[2, 0]) - 0.125).abs() < 1e-15);
        let one = &a * &r;
        assert!((one.val() - 1.0).abs() < 1e-15);
        assert!(one.coeff(&[1, 0]).abs() < 1e-15);
        assert!(one.coeff(&[2, 0]).abs() < 1e-15);
    }

    #[test]
    fn recip_and_sqrt_reject_bad_constant_terms() {
        let space = jet_space(2, 2);
        assert!(Jet::constant(&space, 0.0).recip().is_err());
        assert!(Jet::constant(&space, -1.0).sqrt().is_err());
        assert!(Jet::constant(&space, 0.0).sqrt().is_err());
    }

    #[test]
    fn sqrt_squares_back() {
        let space = jet_space(3, 3);
        let a = {
            let x = Jet::variable(&space, 0, 1.5);
            let y = Jet::variable(&space, 1, -0.5);
            (&(&x * &x) + &(&y * &y)).add_scalar(1.0)
        };
        let s = a.sqrt().unwrap();
        let sq = &s * &s;
        for (i, (want, got)) in a.coeffs().iter().zip(sq.coeffs()).enumerate() {
            assert!((want - got).abs() < 1e-13, "coefficient {i}: {want} vs {got}");
        }
    }

    #[test]
    fn powi_handles_negative_exponents() {
        let space = jet_space(2, 3);
        let a = Jet::variable(&space, 0, 2.0);
        let inv2 = a.powi(-2).unwrap();
        let direct = a.recip().unwrap();
        let direct = &direct * &direct;
        for (x, y) in inv2.coeffs().iter().zip(direct.coeffs()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(Jet::constant(&space, 0.0).powi(-1).is_err());
    }

    proptest! {
        #[test]
        fn product_rule_on_derivative(
            seed in 0u64..200,
            var in 0usize..4,
        ) {
            // d(fg) = f dg + g df for random cubic jets in 4 variables.
            use rand::Rng;
            let mut rng = crate::sampling::seeded_rng(seed);
            let space = jet_space(4, 3);
            let rand_jet = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut a = Jet::constant(&space, rng.gen_range(-2.0..2.0));
                for v in 0..4 {
                    let t = Jet::variable(&space, v, rng.gen_range(-1.0..1.0))
                        .scale(rng.gen_range(-1.0..1.0));
                    a = &a + &t;
                }
                &(&a * &a) + &a
            };
            let f = rand_jet(&mut rng);
            let g = rand_jet(&mut rng);
            let lhs = (&f * &g).derivative(var);
            let t1 = &f.truncate(2) * &g.derivative(var);
            let t2 = &g.truncate(2) * &f.derivative(var);
            let rhs = &t1 + &t2;
            for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}
