//! Multinomial logistic regression with an appended bias feature and l2
//! penalty. The smoothness constant is certified: the Hessian of the
//! cross-entropy part is (1/n) sum_i H_i kron x~_i x~_i' with the softmax
//! Hessian H_i = diag(p) - p p' bounded by (1/2) I, so
//! L = ||X~||_op^2 / (2n) + l2 where X~ stacks the bias-augmented rows.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::norm_sq;

use super::dataset::DatasetSplit;
use super::oracle::{probe_sigma1_sq, DEFAULT_SIGMA_PROBES};
use super::softmax::{argmax, log_sum_exp, softmax_in_place};
use super::{Constant, FiniteSumObjective, Objective, OracleSpec, ProblemBundle};

pub const DEFAULT_BATCH_SIZE: usize = 128;

pub struct LogisticRegression {
    train: Arc<DatasetSplit>,
    val: Option<Arc<DatasetSplit>>,
    l2: f64,
    smoothness: f64,
}

impl LogisticRegression {
    fn n_classes(&self) -> usize {
        self.train.n_classes()
    }

    fn row_dim(&self) -> usize {
        self.train.dim() + 1
    }

    /// Logits for one bias-augmented sample under flat weights W (class-major
    /// K x (d+1), row-major).
    fn logits(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let k = self.n_classes();
        let rd = self.row_dim();
        let mut z = vec![0.0; k];
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &w[c * rd..(c + 1) * rd];
            let mut acc = row[rd - 1]; // bias feature is an implicit 1
            for (wj, xj) in row[..rd - 1].iter().zip(x) {
                acc += wj * xj;
            }
            *zc = acc;
        }
        z
    }

    fn accuracy(&self, w: &[f64], split: &DatasetSplit) -> f64 {
        let mut correct = 0usize;
        for i in 0..split.len() {
            let (x, y) = split.sample(i);
            if argmax(&self.logits(w, x)) == y {
                correct += 1;
            }
        }
        correct as f64 / split.len() as f64
    }

    fn mean_ce(&self, w: &[f64], split: &DatasetSplit) -> f64 {
        let mut acc = 0.0;
        for i in 0..split.len() {
            let (x, y) = split.sample(i);
            let z = self.logits(w, x);
            acc += log_sum_exp(&z) - z[y];
        }
        acc / split.len() as f64
    }
}

impl Objective for LogisticRegression {
    fn name(&self) -> &str {
        "logreg"
    }

    fn dim(&self) -> usize {
        self.n_classes() * self.row_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.mean_ce(x, &self.train) + 0.5 * self.l2 * norm_sq(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        self.batch_gradient(x, &all)
    }

    fn smoothness(&self) -> Constant {
        Constant::Declared(self.smoothness)
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn x_init(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn val_metric(&self, x: &[f64]) -> f64 {
        let split = self.val.as_deref().unwrap_or(&self.train);
        self.accuracy(x, split)
    }

    fn validation_loss(&self, x: &[f64]) -> f64 {
        match &self.val {
            Some(v) => self.mean_ce(x, v),
            None => self.value(x),
        }
    }
}

impl FiniteSumObjective for LogisticRegression {
    fn n_samples(&self) -> usize {
        self.train.len()
    }

    fn batch_value(&self, x: &[f64], idx: &[usize]) -> f64 {
        assert!(!idx.is_empty());
        let mut acc = 0.0;
        for &i in idx {
            let (xi, y) = self.train.sample(i);
            let z = self.logits(x, xi);
            acc += log_sum_exp(&z) - z[y];
        }
        acc / idx.len() as f64 + 0.5 * self.l2 * norm_sq(x)
    }

    fn batch_gradient(&self, x: &[f64], idx: &[usize]) -> Vec<f64> {
        assert!(!idx.is_empty());
        let rd = self.row_dim();
        let mut g = vec![0.0; x.len()];
        for &i in idx {
            let (xi, y) = self.train.sample(i);
            let mut p = self.logits(x, xi);
            softmax_in_place(&mut p);
            p[y] -= 1.0;
            for (c, &pc) in p.iter().enumerate() {
                let row = &mut g[c * rd..(c + 1) * rd];
                for (gj, xj) in row[..rd - 1].iter_mut().zip(xi) {
                    *gj += pc * xj;
                }
                row[rd - 1] += pc;
            }
        }
        let inv = 1.0 / idx.len() as f64;
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj = *gj * inv + self.l2 * xj;
        }
        g
    }
}

/// Largest eigenvalue of M'M via power iteration on v -> M'(Mv), where M is
/// the n x (d+1) bias-augmented feature matrix. Converges from below, so the
/// result is nudged up by a hair before being declared an upper bound.
fn spectral_norm_sq(split: &DatasetSplit) -> f64 {
    let n = split.len();
    let rd = split.dim() + 1;
    let mut v = vec![1.0 / (rd as f64).sqrt(); rd];
    let mut lambda = 0.0f64;
    let mut w = vec![0.0; n];
    for _ in 0..500 {
        for (i, wi) in w.iter_mut().enumerate() {
            let (x, _) = split.sample(i);
            let mut acc = v[rd - 1];
            for (xj, vj) in x.iter().zip(&v[..rd - 1]) {
                acc += xj * vj;
            }
            *wi = acc;
        }
        let mut u = vec![0.0; rd];
        for (i, &wi) in w.iter().enumerate() {
            let (x, _) = split.sample(i);
            for (uj, xj) in u[..rd - 1].iter_mut().zip(x) {
                *uj += xj * wi;
            }
            u[rd - 1] += wi;
        }
        let next = norm_sq(&u).sqrt();
        if next == 0.0 {
            return 0.0;
        }
        for (vj, uj) in v.iter_mut().zip(&u) {
            *vj = uj / next;
        }
        if (next - lambda).abs() <= 1e-13 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda * (1.0 + 1e-9)
}

pub fn make_logreg(train: DatasetSplit, l2: f64) -> Result<ProblemBundle> {
    make_logreg_with_validation(train, None, l2)
}

pub fn make_logreg_with_validation(
    train: DatasetSplit,
    val: Option<DatasetSplit>,
    l2: f64,
) -> Result<ProblemBundle> {
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::Domain(format!("l2 = {l2} must be >= 0")));
    }
    if let Some(v) = &val {
        if v.dim() != train.dim() || v.n_classes() != train.n_classes() {
            return Err(Error::Input(format!(
                "validation split shape ({}, {}) does not match train ({}, {})",
                v.dim(),
                v.n_classes(),
                train.dim(),
                train.n_classes()
            )));
        }
    }
    let smoothness = spectral_norm_sq(&train) / (2.0 * train.len() as f64) + l2;
    let problem = Arc::new(LogisticRegression {
        train: Arc::new(train),
        val: val.map(Arc::new),
        l2,
        smoothness,
    });
    let batch_size = DEFAULT_BATCH_SIZE.min(problem.n_samples());
    let sigma1_sq_bound = probe_sigma1_sq(problem.as_ref(), DEFAULT_SIGMA_PROBES, 0);
    Ok(ProblemBundle {
        objective: Arc::clone(&problem) as Arc<dyn Objective>,
        oracle: OracleSpec::Minibatch {
            finite: problem,
            batch_size,
            sigma1_sq_bound,
        },
    })
}
