//! Smooth test objectives with stochastic gradient oracles whose constants
//! (smoothness L, noise bound sigma, lower bound on f) are either certified
//! analytically or estimated and labeled as such. The bound checks treat
//! declared constants as hard and empirical ones as advisory.

pub mod dataset;
pub mod logreg;
pub mod mlp;
pub mod oracle;
pub mod quadratic;
mod softmax;
pub mod verify;

use std::sync::Arc;

pub use dataset::{load_idx, synth_classification, DatasetSplit};
pub use logreg::{make_logreg, make_logreg_with_validation};
pub use mlp::{make_smooth_mlp, make_smooth_mlp_with_validation};
pub use oracle::{GaussianOracle, MinibatchOracle, StochasticOracle};
pub use quadratic::{make_noisy_quadratic, make_quad_cosine};

use crate::error::{Error, Result};

/// A problem constant that is either proven or merely measured.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Constant {
    /// Analytically certified; bound checks may assert against it.
    Declared(f64),
    /// Estimated from probes; bound checks report, never assert.
    Empirical(f64),
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Declared(v) | Constant::Empirical(v) => v,
        }
    }

    pub fn is_declared(self) -> bool {
        matches!(self, Constant::Declared(_))
    }
}

impl std::fmt::Display for Constant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Constant::Declared(v) => write!(f, "{v}"),
            Constant::Empirical(v) => write!(f, "{v} (empirical)"),
        }
    }
}

/// A differentiable objective, bounded below, with a known starting point.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Lipschitz constant of the gradient.
    fn smoothness(&self) -> Constant;
    /// Certified lower bound on f; every evaluation satisfies f(x) >= this.
    fn lower_bound(&self) -> f64;
    fn x_init(&self) -> Vec<f64>;
    /// Scalar reported in the val_metric trace column. Classifiers report
    /// held-out accuracy; analytic problems default to the objective value.
    fn val_metric(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
    /// Loss used for model selection (grid search); defaults to f itself.
    fn validation_loss(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

/// Finite-sum structure f = (1/n) sum f_i, the shape minibatch oracles need.
/// Per-sample losses include the l2 term, so batch means are unbiased for f.
pub trait FiniteSumObjective: Objective {
    fn n_samples(&self) -> usize;
    fn batch_value(&self, x: &[f64], idx: &[usize]) -> f64;
    fn batch_gradient(&self, x: &[f64], idx: &[usize]) -> Vec<f64>;
}

/// How a problem's stochastic gradients are produced.
#[derive(Clone)]
pub enum OracleSpec {
    /// Exact gradient plus isotropic Gaussian noise with E||noise||^2 equal
    /// to sigma^2 exactly.
    Gaussian { sigma: f64 },
    /// Uniform-with-replacement minibatch of a finite sum. `sigma1_sq_bound`
    /// is the probed upper bound on the single-sample gradient variance;
    /// a batch of B then has variance bound sigma1_sq_bound / B.
    Minibatch {
        finite: Arc<dyn FiniteSumObjective>,
        batch_size: usize,
        sigma1_sq_bound: f64,
    },
}

/// An objective paired with its oracle recipe: everything a run needs.
#[derive(Clone)]
pub struct ProblemBundle {
    pub objective: Arc<dyn Objective>,
    pub oracle: OracleSpec,
}

impl ProblemBundle {
    /// Noise bound sigma of the configured oracle. Declared for Gaussian
    /// noise (exact by construction), empirical for minibatches.
    pub fn sigma(&self) -> Constant {
        match &self.oracle {
            OracleSpec::Gaussian { sigma } => Constant::Declared(*sigma),
            OracleSpec::Minibatch {
                batch_size,
                sigma1_sq_bound,
                ..
            } => Constant::Empirical((sigma1_sq_bound / *batch_size as f64).sqrt()),
        }
    }

    pub fn smoothness(&self) -> Constant {
        self.objective.smoothness()
    }

    /// Fresh oracle for one run. Seeds derive from the run seed; two oracles
    /// with the same seed replay identical noise.
    pub fn make_oracle(&self, seed: u64) -> Box<dyn StochasticOracle> {
        match &self.oracle {
            OracleSpec::Gaussian { sigma } => Box::new(GaussianOracle::new(
                Arc::clone(&self.objective),
                *sigma,
                seed,
            )),
            OracleSpec::Minibatch {
                finite, batch_size, ..
            } => Box::new(MinibatchOracle::new(Arc::clone(finite), *batch_size, seed)),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        match &mut self.oracle {
            OracleSpec::Gaussian { .. } => Err(Error::Config(
                "batch size applies to minibatch oracles only".into(),
            )),
            OracleSpec::Minibatch {
                batch_size: b,
                finite,
                ..
            } => {
                if batch_size == 0 || batch_size > finite.n_samples() {
                    return Err(Error::Config(format!(
                        "batch size {batch_size} outside [1, n={}]",
                        finite.n_samples()
                    )));
                }
                *b = batch_size;
                Ok(self)
            }
        }
    }

    /// Oracle calls per epoch: ceil(n/batch) for finite sums, 1 otherwise.
    pub fn default_batches_per_epoch(&self) -> usize {
        match &self.oracle {
            OracleSpec::Gaussian { .. } => 1,
            OracleSpec::Minibatch {
                finite, batch_size, ..
            } => finite.n_samples().div_ceil(*batch_size),
        }
    }
}
