//! The output-iterate distribution: which epoch's iterate gets reported.
//!
//! A run of T epochs reports the iterate of a randomly chosen epoch, drawn
//! with probability proportional to that epoch's step size. Schedules that
//! end at zero (logarithmic, cosine) therefore never report the final
//! iterate: p_T = 0. That is faithful to the scheme, not a bug.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::kahan_sum;
use crate::schedules::StepSchedule;

/// Probabilities p_t = eta_t / sum(eta), 1-indexed by epoch. Immutable after
/// construction; the cumulative vector is precomputed for inverse-CDF draws.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution {
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl OutputDistribution {
    /// Normalizes raw nonnegative weights. One division per weight at
    /// construction keeps accumulated error below the 1e-12 sum tolerance.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Input("empty weight vector".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Input(format!(
                    "weight[{i}] = {w} must be finite and nonnegative"
                )));
            }
        }
        let total = kahan_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::Degenerate(
                "all weights are zero; nothing to normalize".into(),
            ));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cum.push(acc);
        }
        // the terminal cumulative is 1 by construction; pin it so u in [0,1)
        // can never fall past the end
        *cum.last_mut().unwrap() = 1.0;
        Ok(OutputDistribution { probs, cum })
    }

    /// The Theorem-1 distribution of a schedule: p_t proportional to eta_t.
    pub fn from_schedule(schedule: &StepSchedule) -> Result<Self> {
        OutputDistribution::from_weights(&schedule.table()?)
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of epoch t (1-indexed).
    pub fn prob(&self, t: usize) -> f64 {
        self.probs[t - 1]
    }

    /// Inverse-CDF draw; returns an epoch index in [1, T]. Deterministic
    /// given the rng state. A draw u lands on the smallest t whose
    /// cumulative mass reaches u, so boundary ties go to the smaller index
    /// and zero-probability epochs are never produced by interior draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen_range(0.0..1.0);
        let idx = self.cum.partition_point(|&c| c < u);
        idx.min(self.probs.len() - 1) + 1
    }

    /// Total mass of the last `fraction` of the horizon: epochs t with
    /// t > ceil((1-fraction)*T).
    pub fn tail_mass(&self, fraction: f64) -> Result<f64> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Domain(format!(
                "tail fraction {fraction} outside (0, 1]"
            )));
        }
        let t_len = self.probs.len();
        let cut = ((1.0 - fraction) * t_len as f64).ceil() as usize;
        Ok(kahan_sum(self.probs[cut.min(t_len)..].iter().copied()))
    }

    /// Expectation of per-epoch values under this distribution. With squared
    /// full-gradient norms as values this is exactly the quantity the
    /// convergence bound controls.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.probs.len() {
            return Err(Error::Input(format!(
                "value trace length {} != horizon {}",
                values.len(),
                self.probs.len()
            )));
        }
        Ok(kahan_sum(
            self.probs.iter().zip(values).map(|(p, v)| p * v),
        ))
    }
}
