//! Deterministic phase-space sampling for residual reports and tests.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::jets::PhasePoint;

/// The box/annulus a metric or spray is sampled on: `x` uniform in
/// `[-x_box, x_box]^n` (optionally restricted to the ball `|x| <= x_ball`),
/// `y` a uniform direction with `|y|` uniform in `[y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleDomain {
    pub x_box: f64,
    pub x_ball: Option<f64>,
    pub y_min: f64,
    pub y_max: f64,
}

impl SampleDomain {
    pub const fn boxed(x_box: f64) -> Self {
        SampleDomain {
            x_box,
            x_ball: None,
            y_min: 0.5,
            y_max: 2.0,
        }
    }

    pub const fn ball(radius: f64) -> Self {
        SampleDomain {
            x_box: radius,
            x_ball: Some(radius),
            y_min: 0.5,
            y_max: 2.0,
        }
    }

    /// Intersection of two domains (used for deformed sprays).
    pub fn intersect(&self, other: &SampleDomain) -> SampleDomain {
        let x_ball = match (self.x_ball, other.x_ball) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        SampleDomain {
            x_box: self.x_box.min(other.x_box),
            x_ball,
            y_min: self.y_min.max(other.y_min),
            y_max: self.y_max.min(other.y_max),
        }
    }

    pub fn contains_x(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| v.abs() > self.x_box + 1e-12) {
            return false;
        }
        if let Some(r) = self.x_ball {
            let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > r + 1e-12 {
                return false;
            }
        }
        true
    }
}

impl Default for SampleDomain {
    fn default() -> Self {
        SampleDomain::ball(0.6)
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sample_x(rng: &mut ChaCha8Rng, domain: &SampleDomain, n: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(-domain.x_box..=domain.x_box))
            .collect();
        match domain.x_ball {
            Some(r) => {
                let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= r {
                    return x;
                }
            }
            None => return x,
        }
    }
}

fn sample_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Rejection from the cube, then normalize; avoids a rand_distr dependency.
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm: f64 = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > 0.2 && norm <= 1.0 {
            return v.iter().map(|t| t / norm).collect();
        }
    }
}

/// Deterministic sample list for a domain: fixed seed gives a fixed list.
pub fn sample_points(domain: &SampleDomain, n: usize, count: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let x = sample_x(&mut rng, domain, n);
            let dir = sample_direction(&mut rng, n);
            let r = rng.gen_range(domain.y_min..=domain.y_max);
            let y: Vec<f64> = dir.iter().map(|d| d * r).collect();
            PhasePoint::new(x, y).expect("sampled point is valid")
        })
        .collect()
}

/// Fixed fiber directions used when fitting a base function `a(x)` from
/// values of `P/F` along the fiber.
pub fn fiber_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        (0..count)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * (k as f64) / (count as f64);
                vec![t.cos(), t.sin()]
            })
            .collect()
    } else {
        let mut rng = seeded_rng(0x5EED_F1BE);
        (0..count).map(|_| sample_direction(&mut rng, n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let d = SampleDomain::boxed(1.0);
        let a = sample_points(&d, 2, 10, 42);
        let b = sample_points(&d, 2, 10, 42);
        assert_eq!(a, b);
        let c = sample_points(&d, 2, 10, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn samples_respect_domain() {
        let d = SampleDomain::ball(0.6);
        for p in sample_points(&d, 3, 200, 7) {
            assert!(d.contains_x(p.x()));
            let ynorm: f64 = p.y().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(ynorm >= 0.5 && ynorm <= 2.0 + 1e-12);
        }
    }
}
