//! Analytic test objectives with exact constants: a diagonal quadratic
//! (convex, L = largest eigenvalue, f* = 0) and a quadratic-plus-cosine
//! ripple (non-convex once a*b^2 > 1, L = 1 + a*b^2, f >= -a*d).

use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{derive_rng, kahan_sum, stream};

use super::{Constant, Objective, OracleSpec, ProblemBundle};

/// f(x) = (1/2) x' A x with diagonal A; eigenvalues log-spaced in
/// [eigmin, eigmax].
pub struct NoisyQuadratic {
    eigs: Vec<f64>,
    init: Vec<f64>,
}

impl NoisyQuadratic {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigs
    }
}

impl Objective for NoisyQuadratic {
    fn name(&self) -> &str {
        "noisy_quadratic"
    }

    fn dim(&self) -> usize {
        self.eigs.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.eigs.len());
        0.5 * kahan_sum(self.eigs.iter().zip(x).map(|(l, xi)| l * xi * xi))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.eigs.len());
        self.eigs.iter().zip(x).map(|(l, xi)| l * xi).collect()
    }

    fn smoothness(&self) -> Constant {
        Constant::Declared(*self.eigs.last().unwrap())
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn x_init(&self) -> Vec<f64> {
        self.init.clone()
    }
}

/// Quadratic with Gaussian gradient noise of total variance sigma^2 exactly.
pub fn make_noisy_quadratic(
    dim: usize,
    eigmin: f64,
    eigmax: f64,
    sigma: f64,
    seed: u64,
) -> Result<ProblemBundle> {
    if dim == 0 {
        return Err(Error::Domain("dim must be >= 1".into()));
    }
    if !(eigmin > 0.0 && eigmin <= eigmax && eigmax.is_finite()) {
        return Err(Error::Domain(format!(
            "need 0 < eigmin <= eigmax, got [{eigmin}, {eigmax}]"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("sigma = {sigma} must be >= 0")));
    }
    let eigs: Vec<f64> = if dim == 1 {
        vec![eigmax]
    } else {
        (0..dim)
            .map(|i| eigmin * (eigmax / eigmin).powf(i as f64 / (dim - 1) as f64))
            .collect()
    };
    let mut rng = derive_rng(seed, stream::INIT);
    let start = Normal::new(0.0, 2.0).unwrap();
    let init: Vec<f64> = (0..dim).map(|_| start.sample(&mut rng)).collect();
    Ok(ProblemBundle {
        objective: Arc::new(NoisyQuadratic { eigs, init }),
        oracle: OracleSpec::Gaussian { sigma },
    })
}

/// f(x) = sum_i x_i^2/2 + a cos(b x_i): smooth, bounded below by -a*d, and
/// riddled with stationary points when the ripple dominates (a*b^2 > 1).
pub struct QuadCosine {
    dim: usize,
    a: f64,
    b: f64,
    init: Vec<f64>,
}

impl Objective for QuadCosine {
    fn name(&self) -> &str {
        "quad_cosine"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        kahan_sum(
            x.iter()
                .map(|&xi| 0.5 * xi * xi + self.a * (self.b * xi).cos()),
        )
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&xi| xi - self.a * self.b * (self.b * xi).sin())
            .collect()
    }

    fn smoothness(&self) -> Constant {
        // per-coordinate |f''| = |1 - a b^2 cos(b x)| <= 1 + a b^2
        Constant::Declared(1.0 + self.a * self.b * self.b)
    }

    fn lower_bound(&self) -> f64 {
        -self.a * self.dim as f64
    }

    fn x_init(&self) -> Vec<f64> {
        self.init.clone()
    }
}

pub fn make_quad_cosine(
    dim: usize,
    a: f64,
    b: f64,
    sigma: f64,
    seed: u64,
) -> Result<ProblemBundle> {
    if dim == 0 {
        return Err(Error::Domain("dim must be >= 1".into()));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("a = {a} must be >= 0")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("b = {b} must be positive")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("sigma = {sigma} must be >= 0")));
    }
    let mut rng = derive_rng(seed, stream::INIT);
    let start = Normal::new(0.0, 2.0).unwrap();
    let init: Vec<f64> = (0..dim).map(|_| start.sample(&mut rng)).collect();
    Ok(ProblemBundle {
        objective: Arc::new(QuadCosine { dim, a, b, init }),
        oracle: OracleSpec::Gaussian { sigma },
    })
}
