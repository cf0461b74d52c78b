//! One-hidden-layer classifier with softplus activation. Softplus keeps the
//! objective L-smooth (a ReLU net is not differentiable, which would void
//! the smoothness assumption every bound here rests on), at the price of an
//! L that is only measured, never certified: the reported constant is the
//! max gradient ratio over probe pairs times a 1.5 margin, labeled
//! empirical, and nothing asserts against it.
//!
//! Parameter layout, flat: W1 (hidden x (d+1), row-major) then W2
//! (classes x (hidden+1), row-major). Biases ride along as the last column
//! of each block, fed by an implicit constant-1 feature.

use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{derive_rng, norm_sq, stream};

use super::dataset::DatasetSplit;
use super::oracle::{probe_sigma1_sq, DEFAULT_SIGMA_PROBES};
use super::softmax::{argmax, log_sum_exp, softmax_in_place};
use super::{Constant, FiniteSumObjective, Objective, OracleSpec, ProblemBundle};

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub struct SoftplusMlp {
    train: Arc<DatasetSplit>,
    val: Option<Arc<DatasetSplit>>,
    hidden: usize,
    l2: f64,
    init: Vec<f64>,
    smoothness_est: f64,
}

impl SoftplusMlp {
    fn d_in(&self) -> usize {
        self.train.dim()
    }

    fn k_out(&self) -> usize {
        self.train.n_classes()
    }

    fn w1_len(&self) -> usize {
        self.hidden * (self.d_in() + 1)
    }

    /// Hidden pre-activations z1 and output logits z2 for one sample.
    fn forward(&self, theta: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.d_in();
        let h = self.hidden;
        let k = self.k_out();
        let (w1, w2) = theta.split_at(self.w1_len());
        let mut z1 = vec![0.0; h];
        for (j, zj) in z1.iter_mut().enumerate() {
            let row = &w1[j * (d + 1)..(j + 1) * (d + 1)];
            let mut acc = row[d];
            for (wj, xj) in row[..d].iter().zip(x) {
                acc += wj * xj;
            }
            *zj = acc;
        }
        let mut z2 = vec![0.0; k];
        for (c, zc) in z2.iter_mut().enumerate() {
            let row = &w2[c * (h + 1)..(c + 1) * (h + 1)];
            let mut acc = row[h];
            for (wj, zj) in row[..h].iter().zip(&z1) {
                acc += wj * softplus(*zj);
            }
            *zc = acc;
        }
        (z1, z2)
    }

    fn accuracy(&self, theta: &[f64], split: &DatasetSplit) -> f64 {
        let mut correct = 0usize;
        for i in 0..split.len() {
            let (x, y) = split.sample(i);
            let (_, z2) = self.forward(theta, x);
            if argmax(&z2) == y {
                correct += 1;
            }
        }
        correct as f64 / split.len() as f64
    }

    fn mean_ce_on(&self, theta: &[f64], split: &DatasetSplit) -> f64 {
        let mut acc = 0.0;
        for i in 0..split.len() {
            let (x, y) = split.sample(i);
            let (_, z2) = self.forward(theta, x);
            acc += log_sum_exp(&z2) - z2[y];
        }
        acc / split.len() as f64
    }
}

impl Objective for SoftplusMlp {
    fn name(&self) -> &str {
        "smooth_mlp"
    }

    fn dim(&self) -> usize {
        self.w1_len() + self.k_out() * (self.hidden + 1)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.mean_ce_on(x, &self.train) + 0.5 * self.l2 * norm_sq(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        self.batch_gradient(x, &all)
    }

    fn smoothness(&self) -> Constant {
        Constant::Empirical(self.smoothness_est)
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn x_init(&self) -> Vec<f64> {
        self.init.clone()
    }

    fn val_metric(&self, x: &[f64]) -> f64 {
        let split = self.val.as_deref().unwrap_or(&self.train);
        self.accuracy(x, split)
    }

    fn validation_loss(&self, x: &[f64]) -> f64 {
        match &self.val {
            Some(v) => self.mean_ce_on(x, v),
            None => self.value(x),
        }
    }
}

impl FiniteSumObjective for SoftplusMlp {
    fn n_samples(&self) -> usize {
        self.train.len()
    }

    fn batch_value(&self, x: &[f64], idx: &[usize]) -> f64 {
        assert!(!idx.is_empty());
        let mut acc = 0.0;
        for &i in idx {
            let (xi, y) = self.train.sample(i);
            let (_, z2) = self.forward(x, xi);
            acc += log_sum_exp(&z2) - z2[y];
        }
        acc / idx.len() as f64 + 0.5 * self.l2 * norm_sq(x)
    }

    fn batch_gradient(&self, theta: &[f64], idx: &[usize]) -> Vec<f64> {
        assert!(!idx.is_empty());
        let d = self.d_in();
        let h = self.hidden;
        let w1_len = self.w1_len();
        let w2 = &theta[w1_len..];
        let mut g = vec![0.0; theta.len()];
        for &i in idx {
            let (xi, y) = self.train.sample(i);
            let (z1, mut p) = self.forward(theta, xi);
            softmax_in_place(&mut p);
            p[y] -= 1.0; // dL/dz2
            let a: Vec<f64> = z1.iter().map(|&z| softplus(z)).collect();
            // output layer: dL/dW2[c][j] = p_c * a_j (bias feature = 1)
            for (c, &pc) in p.iter().enumerate() {
                let row = &mut g[w1_len + c * (h + 1)..w1_len + (c + 1) * (h + 1)];
                for (gj, aj) in row[..h].iter_mut().zip(&a) {
                    *gj += pc * aj;
                }
                row[h] += pc;
            }
            // backprop into the hidden layer: da_j = sum_c p_c W2[c][j],
            // dz1_j = da_j * sigmoid(z1_j)
            for j in 0..h {
                let mut da = 0.0;
                for (c, &pc) in p.iter().enumerate() {
                    da += pc * w2[c * (h + 1) + j];
                }
                let dz = da * sigmoid(z1[j]);
                let row = &mut g[j * (d + 1)..(j + 1) * (d + 1)];
                for (gj, xj) in row[..d].iter_mut().zip(xi) {
                    *gj += dz * xj;
                }
                row[d] += dz;
            }
        }
        let inv = 1.0 / idx.len() as f64;
        for (gj, tj) in g.iter_mut().zip(theta) {
            *gj = *gj * inv + self.l2 * tj;
        }
        g
    }
}

/// Max gradient-difference ratio over seeded probe pairs around the init,
/// times a 1.5 margin. Advisory only.
fn estimate_smoothness(problem: &SoftplusMlp, pairs: usize, seed: u64) -> f64 {
    let mut rng = derive_rng(seed, stream::PROBE);
    let normal = Normal::new(0.0, 0.3).unwrap();
    let x0 = &problem.init;
    let dim = x0.len();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let a: Vec<f64> = x0.iter().map(|&v| v + normal.sample(&mut rng)).collect();
        let b: Vec<f64> = x0.iter().map(|&v| v + normal.sample(&mut rng)).collect();
        let ga = problem.gradient(&a);
        let gb = problem.gradient(&b);
        let mut dg = 0.0;
        let mut dx = 0.0;
        for i in 0..dim {
            dg += (ga[i] - gb[i]) * (ga[i] - gb[i]);
            dx += (a[i] - b[i]) * (a[i] - b[i]);
        }
        if dx > 0.0 {
            worst = worst.max((dg / dx).sqrt());
        }
    }
    worst * 1.5
}

pub fn make_smooth_mlp(
    train: DatasetSplit,
    hidden: usize,
    l2: f64,
    seed: u64,
) -> Result<ProblemBundle> {
    make_smooth_mlp_with_validation(train, None, hidden, l2, seed)
}

pub fn make_smooth_mlp_with_validation(
    train: DatasetSplit,
    val: Option<DatasetSplit>,
    hidden: usize,
    l2: f64,
    seed: u64,
) -> Result<ProblemBundle> {
    if hidden == 0 {
        return Err(Error::Domain("hidden width must be >= 1".into()));
    }
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
    let d = train.dim();
    let k = train.n_classes();
    let mut rng = derive_rng(seed, stream::INIT);
    let w1_std = 1.0 / ((d + 1) as f64).sqrt();
    let w2_std = 1.0 / ((hidden + 1) as f64).sqrt();
    let n1 = Normal::new(0.0, w1_std).unwrap();
    let n2 = Normal::new(0.0, w2_std).unwrap();
    let mut init = Vec::with_capacity(hidden * (d + 1) + k * (hidden + 1));
    for _ in 0..hidden * (d + 1) {
        init.push(n1.sample(&mut rng));
    }
    for _ in 0..k * (hidden + 1) {
        init.push(n2.sample(&mut rng));
    }
    let mut problem = SoftplusMlp {
        train: Arc::new(train),
        val: val.map(Arc::new),
        hidden,
        l2,
        init,
        smoothness_est: 0.0,
    };
    problem.smoothness_est = estimate_smoothness(&problem, 16, seed);
    let problem = Arc::new(problem);
    let batch_size = super::logreg::DEFAULT_BATCH_SIZE.min(problem.n_samples());
    let sigma1_sq_bound = probe_sigma1_sq(problem.as_ref(), DEFAULT_SIGMA_PROBES, seed);
    Ok(ProblemBundle {
        objective: Arc::clone(&problem) as Arc<dyn Objective>,
        oracle: OracleSpec::Minibatch {
            finite: problem,
            batch_size,
            sigma1_sq_bound,
        },
    })
}
