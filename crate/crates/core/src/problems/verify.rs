//! Independent checks that the analytic pieces of a problem tell the truth:
//! gradients against central finite differences, declared smoothness against
//! measured gradient ratios, oracle moments against their stated bounds.
//! These run in tests and in the strict report path; they are deliberately
//! free of any knowledge of how the objectives compute their values.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::{derive_rng, norm_sq, stream};

use super::{Objective, StochasticOracle};

/// Central finite-difference gradient with per-coordinate step
/// h_i = 1e-5 * (1 + |x_i|): large enough to clear round-off on O(1)
/// values, small enough that the O(h^2) truncation term stays near 1e-10.
pub fn finite_diff_gradient(f: &dyn Objective, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let up = f.value(&probe);
        probe[i] = x[i] - h;
        let down = f.value(&probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Worst relative gradient error over seeded Gaussian probes around x_init.
pub fn max_rel_grad_error(f: &dyn Objective, points: usize, spread: f64, seed: u64) -> f64 {
    let mut rng = derive_rng(seed, stream::PROBE);
    let normal = Normal::new(0.0, spread).unwrap();
    let x0 = f.x_init();
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x: Vec<f64> = x0.iter().map(|&v| v + normal.sample(&mut rng)).collect();
        let analytic = f.gradient(&x);
        let fd = finite_diff_gradient(f, &x);
        let mut num = 0.0;
        for (a, b) in analytic.iter().zip(&fd) {
            num += (a - b) * (a - b);
        }
        let denom = norm_sq(&fd).sqrt().max(1e-10);
        worst = worst.max(num.sqrt() / denom);
    }
    worst
}

/// Max of ||grad f(x) - grad f(y)|| / ||x - y|| over seeded random pairs.
/// For declared-L problems this must stay at or below L.
pub fn max_lipschitz_ratio(f: &dyn Objective, pairs: usize, spread: f64, seed: u64) -> f64 {
    let mut rng = derive_rng(seed, stream::PROBE);
    let x0 = f.x_init();
    let dim = f.dim();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x: Vec<f64> = x0.iter().map(|&v| v + rng.gen_range(-spread..spread)).collect();
        let y: Vec<f64> = x0.iter().map(|&v| v + rng.gen_range(-spread..spread)).collect();
        let gx = f.gradient(&x);
        let gy = f.gradient(&y);
        let mut dg = 0.0;
        let mut dx = 0.0;
        for i in 0..dim {
            dg += (gx[i] - gy[i]) * (gx[i] - gy[i]);
            dx += (x[i] - y[i]) * (x[i] - y[i]);
        }
        if dx > 0.0 {
            worst = worst.max((dg / dx).sqrt());
        }
    }
    worst
}

/// Empirical first and second moments of an oracle at one point.
#[derive(Debug, Clone, Copy)]
pub struct OracleMoments {
    /// ||mean draw - full gradient||
    pub bias_norm: f64,
    /// Standard error scale for the bias norm: sqrt(variance / draws).
    pub bias_se: f64,
    /// Mean of ||draw - full gradient||^2.
    pub variance: f64,
    pub draws: usize,
}

pub fn measure_oracle_moments(
    oracle: &mut dyn StochasticOracle,
    f: &dyn Objective,
    x: &[f64],
    draws: usize,
) -> OracleMoments {
    let full = f.gradient(x);
    let mut mean_diff = vec![0.0; x.len()];
    let mut var_acc = 0.0;
    for _ in 0..draws {
        let g = oracle.draw(x);
        for ((m, gi), fi) in mean_diff.iter_mut().zip(&g).zip(&full) {
            *m += gi - fi;
        }
        var_acc += g
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let variance = var_acc / draws as f64;
    let bias_norm = norm_sq(&mean_diff).sqrt() / draws as f64;
    OracleMoments {
        bias_norm,
        bias_se: (variance / draws as f64).sqrt(),
        variance,
        draws,
    }
}

/// Wrapper that enforces the lower-bound contract on every evaluation.
/// The tolerance absorbs summation round-off when f sits exactly at f_lb.
pub struct CheckedObjective {
    inner: Arc<dyn Objective>,
}

impl CheckedObjective {
    pub fn new(inner: Arc<dyn Objective>) -> Self {
        CheckedObjective { inner }
    }
}

impl Objective for CheckedObjective {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let v = self.inner.value(x);
        let lb = self.inner.lower_bound();
        let slack = 1e-9 * (1.0 + lb.abs());
        assert!(
            v >= lb - slack,
            "{}: f = {v} dipped below its certified lower bound {lb}",
            self.inner.name()
        );
        v
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.inner.gradient(x)
    }

    fn smoothness(&self) -> super::Constant {
        self.inner.smoothness()
    }

    fn lower_bound(&self) -> f64 {
        self.inner.lower_bound()
    }

    fn x_init(&self) -> Vec<f64> {
        self.inner.x_init()
    }

    fn val_metric(&self, x: &[f64]) -> f64 {
        self.inner.val_metric(x)
    }

    fn validation_loss(&self, x: &[f64]) -> f64 {
        self.inner.validation_loss(x)
    }
}
