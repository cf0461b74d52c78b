//! Stochastic gradient oracles: unbiased, variance-bounded estimators of the
//! full gradient, each owning its rng so independent runs never share state.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::{derive_rng, dot, norm_sq, stream};

use super::{FiniteSumObjective, Objective};

/// An unbiased gradient estimator. `component_value` exposes the loss of the
/// most recently sampled component so a line search can re-evaluate the same
/// random function at trial points; calling it before the first draw is a
/// contract violation.
pub trait StochasticOracle: Send {
    fn draw(&mut self, x: &[f64]) -> Vec<f64>;
    fn component_value(&self, y: &[f64]) -> f64;
}

/// Full gradient plus isotropic Gaussian noise: per-coordinate standard
/// deviation sigma/sqrt(d), so E||g - grad f||^2 = sigma^2 exactly. The
/// sampled component is f_xi(y) = f(y) + <xi, y>, whose gradient is the
/// drawn estimate and whose expectation is f.
pub struct GaussianOracle {
    objective: Arc<dyn Objective>,
    sigma: f64,
    rng: ChaCha8Rng,
    last_noise: Vec<f64>,
    drawn: bool,
}

impl GaussianOracle {
    pub fn new(objective: Arc<dyn Objective>, sigma: f64, seed: u64) -> Self {
        assert!(sigma >= 0.0, "noise bound must be nonnegative");
        let d = objective.dim();
        GaussianOracle {
            objective,
            sigma,
            rng: derive_rng(seed, stream::ORACLE),
            last_noise: vec![0.0; d],
            drawn: false,
        }
    }
}

impl StochasticOracle for GaussianOracle {
    fn draw(&mut self, x: &[f64]) -> Vec<f64> {
        let mut g = self.objective.gradient(x);
        self.drawn = true;
        if self.sigma == 0.0 {
            // bit-for-bit the full gradient
            self.last_noise.iter_mut().for_each(|v| *v = 0.0);
            return g;
        }
        let per_coord = Normal::new(0.0, self.sigma / (g.len() as f64).sqrt()).unwrap();
        for (gi, ni) in g.iter_mut().zip(self.last_noise.iter_mut()) {
            *ni = per_coord.sample(&mut self.rng);
            *gi += *ni;
        }
        g
    }

    fn component_value(&self, y: &[f64]) -> f64 {
        assert!(self.drawn, "component_value before the first draw");
        self.objective.value(y) + dot(&self.last_noise, y)
    }
}

/// Uniform-with-replacement minibatch over a finite sum. A batch of size B
/// averages B i.i.d. per-sample gradients, so its variance is exactly the
/// single-sample variance divided by B.
pub struct MinibatchOracle {
    finite: Arc<dyn FiniteSumObjective>,
    batch_size: usize,
    rng: ChaCha8Rng,
    last_idx: Vec<usize>,
}

impl MinibatchOracle {
    pub fn new(finite: Arc<dyn FiniteSumObjective>, batch_size: usize, seed: u64) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        assert!(
            batch_size <= finite.n_samples(),
            "batch size exceeds the dataset"
        );
        MinibatchOracle {
            finite,
            batch_size,
            rng: derive_rng(seed, stream::ORACLE),
            last_idx: Vec::new(),
        }
    }
}

impl StochasticOracle for MinibatchOracle {
    fn draw(&mut self, x: &[f64]) -> Vec<f64> {
        let n = self.finite.n_samples();
        self.last_idx.clear();
        if self.batch_size == n {
            // a full batch is the deterministic full gradient, variance zero
            self.last_idx.extend(0..n);
        } else {
            for _ in 0..self.batch_size {
                self.last_idx.push(self.rng.gen_range(0..n));
            }
        }
        self.finite.batch_gradient(x, &self.last_idx)
    }

    fn component_value(&self, y: &[f64]) -> f64 {
        assert!(
            !self.last_idx.is_empty(),
            "component_value before the first draw"
        );
        self.finite.batch_value(y, &self.last_idx)
    }
}

/// Max over probe points of the exact single-sample gradient variance,
/// inflated by a 1.2 safety factor. Probes are the initial point plus
/// Gaussian perturbations around it; the result is an empirical bound, and
/// anything derived from it stays advisory.
pub fn probe_sigma1_sq(finite: &dyn FiniteSumObjective, probes: usize, probe_seed: u64) -> f64 {
    let n = finite.n_samples();
    let d = finite.dim();
    let x0 = finite.x_init();
    let mut rng = derive_rng(probe_seed, stream::PROBE);
    let normal = Normal::new(0.0, 0.25).unwrap();
    let all: Vec<usize> = (0..n).collect();
    let mut worst = 0.0f64;
    let mut x = vec![0.0; d];
    for p in 0..probes {
        x.copy_from_slice(&x0);
        if p > 0 {
            for xi in x.iter_mut() {
                *xi += normal.sample(&mut rng);
            }
        }
        let mean = finite.batch_gradient(&x, &all);
        let mut acc = 0.0;
        for i in 0..n {
            let gi = finite.batch_gradient(&x, &[i]);
            let diff: Vec<f64> = gi.iter().zip(&mean).map(|(a, b)| a - b).collect();
            acc += norm_sq(&diff);
        }
        worst = worst.max(acc / n as f64);
    }
    worst * 1.2
}

pub const DEFAULT_SIGMA_PROBES: usize = 50;
