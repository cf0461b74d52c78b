//! Closed-form evaluators for the convergence guarantees of the logarithmic
//! schedule, plus direct-summation verification of the two series bounds.
//!
//! The evaluators are transcriptions of stated inequalities, kept as pure
//! functions so property tests can hammer them against brute-force sums.
//! Two quirks are deliberate and documented rather than patched:
//!
//! * The lower bound on the step-size sum fails for T in {2, 3, 4}; the
//!   smallest horizon where it holds is T = 5 (see
//!   [`smallest_horizon_for_sum_lower_bound`]). Its proof compares against
//!   an integral that only dominates once T is large enough.
//! * The guarantee for a single run carries a 1/(Lc) factor on the noise
//!   term where the preceding derivation produces 1/c. We evaluate the
//!   stated final form exactly; with L near 1 (our test problems) the
//!   difference is immaterial and the bound still holds empirically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::kahan_sum;
use crate::schedules::log_step;

/// Constants feeding the guarantees: eta0 = 1/(cL) with c > 1, smoothness L,
/// noise bound sigma, initial gap delta1 = f(x_1) - f_lb, horizon T, and for
/// restarted runs the cycle count l with the worst initial gap over cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub c: f64,
    pub big_l: f64,
    pub sigma: f64,
    pub delta1: f64,
    pub horizon: usize,
    #[serde(default = "one")]
    pub cycles: usize,
    #[serde(default)]
    pub delta1_max: f64,
}

fn one() -> usize {
    1
}

impl TheoremInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0) {
            return Err(Error::Precondition(format!(
                "c = {} must exceed 1 (eta0 = 1/(cL) must sit below 1/L)",
                self.c
            )));
        }
        if !(self.big_l > 0.0 && self.big_l.is_finite()) {
            return Err(Error::Precondition(format!(
                "L = {} must be positive",
                self.big_l
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Precondition(format!(
                "sigma = {} must be >= 0",
                self.sigma
            )));
        }
        if !(self.delta1 >= 0.0) {
            return Err(Error::Precondition(format!(
                "delta1 = {} must be >= 0",
                self.delta1
            )));
        }
        if self.horizon < 2 {
            return Err(Error::Precondition(format!(
                "T = {} must be >= 2",
                self.horizon
            )));
        }
        if self.cycles < 1 {
            return Err(Error::Precondition("cycle count must be >= 1".into()));
        }
        if !(self.delta1_max >= 0.0) {
            return Err(Error::Precondition(format!(
                "delta1_max = {} must be >= 0",
                self.delta1_max
            )));
        }
        Ok(())
    }

    pub fn eta0(&self) -> f64 {
        1.0 / (self.c * self.big_l)
    }
}

/// The bound (x-1)/x <= ln x for x >= 1. Returns the left side; callers
/// assert ln x against it.
pub fn lemma1_ln_lower(x: f64) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(Error::Domain(format!("x = {x} must be >= 1")));
    }
    Ok((x - 1.0) / x)
}

/// Lower bound on sum of eta_t: eta0 * (T+1) / (2 ln T). Holds for T >= 5;
/// fails below (direct sum at T=2 is eta0 while this evaluates to 2.16 eta0).
pub fn lemma2_lower_bound(eta0: f64, horizon: usize) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::Domain(format!("T = {horizon} must be >= 2")));
    }
    Ok(eta0 * (horizon as f64 + 1.0) / (2.0 * (horizon as f64).ln()))
}

/// Upper bound on sum of eta_t^2: eta0^2 * 2T / ln^2 T. Holds for all T >= 2.
pub fn lemma3_upper_bound(eta0: f64, horizon: usize) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::Domain(format!("T = {horizon} must be >= 2")));
    }
    let ln_t = (horizon as f64).ln();
    Ok(eta0 * eta0 * 2.0 * horizon as f64 / (ln_t * ln_t))
}

/// Right-hand side of the per-step descent inequality: expected decrease
/// plus the noise floor L eta^2 sigma^2 / 2. Callers assert
/// (eta/2) E||grad||^2 against it. Requires eta <= 1/L.
pub fn lemma4_descent_rhs(eta: f64, big_l: f64, sigma: f64, decrease: f64) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("eta = {eta} must be >= 0")));
    }
    if !(big_l > 0.0) {
        return Err(Error::Domain(format!("L = {big_l} must be positive")));
    }
    if eta > 1.0 / big_l {
        return Err(Error::Precondition(format!(
            "eta = {eta} exceeds 1/L = {}; the descent inequality needs eta <= 1/(cL), c >= 1",
            1.0 / big_l
        )));
    }
    Ok(decrease + big_l * eta * eta * sigma * sigma / 2.0)
}

/// Single-run guarantee on the expected squared gradient of the reported
/// iterate: 4cL ln T/(T+1) * delta1 + 4 sigma^2 T / (Lc (T+1) ln T).
pub fn theorem1_bound(inp: &TheoremInputs) -> Result<f64> {
    inp.validate()?;
    let t = inp.horizon as f64;
    let ln_t = t.ln();
    let opt_term = 4.0 * inp.c * inp.big_l * ln_t / (t + 1.0) * inp.delta1;
    let noise_term =
        4.0 * inp.sigma * inp.sigma * t / (inp.big_l * inp.c * (t + 1.0) * ln_t);
    Ok(opt_term + noise_term)
}

/// The sigma != 0 specialization with c = sqrt(T)/ln T:
/// 4L delta1/sqrt(T) + 4 sigma^2/(L sqrt(T)). Also reports the implied c.
pub fn corollary1_bound(big_l: f64, sigma: f64, delta1: f64, horizon: usize) -> Result<(f64, f64)> {
    if horizon < 2 {
        return Err(Error::Domain(format!("T = {horizon} must be >= 2")));
    }
    if !(big_l > 0.0) {
        return Err(Error::Domain(format!("L = {big_l} must be positive")));
    }
    if sigma == 0.0 {
        return Err(Error::Precondition(
            "sigma = 0 has no noise term to balance; evaluate theorem1_bound directly".into(),
        ));
    }
    if !(sigma > 0.0 && delta1 >= 0.0) {
        return Err(Error::Domain("sigma and delta1 must be nonnegative".into()));
    }
    let sqrt_t = (horizon as f64).sqrt();
    let implied_c = sqrt_t / (horizon as f64).ln();
    let bound = 4.0 * big_l * delta1 / sqrt_t + 4.0 * sigma * sigma / (big_l * sqrt_t);
    Ok((bound, implied_c))
}

/// Restarted-run guarantee over l equal cycles of T epochs:
/// 4lcL ln T/T * delta1_max + 4 sigma^2 l/(Lc ln T).
pub fn corollary2_bound(inp: &TheoremInputs) -> Result<f64> {
    inp.validate()?;
    let t = inp.horizon as f64;
    let l = inp.cycles as f64;
    let ln_t = t.ln();
    let opt_term = 4.0 * l * inp.c * inp.big_l * ln_t / t * inp.delta1_max;
    let noise_term = 4.0 * inp.sigma * inp.sigma * l / (inp.big_l * inp.c * ln_t);
    Ok(opt_term + noise_term)
}

/// Direct-summation check of the two series bounds for one (eta0, T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumBoundsReport {
    pub eta0: f64,
    pub horizon: usize,
    pub direct_sum: f64,
    pub direct_sum_sq: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// Sums the schedule by explicit loop (compensated, so T = 1e6 stays clean)
/// and compares against the closed-form bounds.
pub fn verify_sum_bounds(eta0: f64, horizon: usize) -> Result<SumBoundsReport> {
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(Error::Domain(format!("eta0 = {eta0} must be positive")));
    }
    let steps: Vec<f64> = (1..=horizon)
        .map(|t| log_step(t, horizon, eta0))
        .collect::<Result<_>>()?;
    let direct_sum = kahan_sum(steps.iter().copied());
    let direct_sum_sq = kahan_sum(steps.iter().map(|e| e * e));
    let lower_bound = lemma2_lower_bound(eta0, horizon)?;
    let upper_bound = lemma3_upper_bound(eta0, horizon)?;
    Ok(SumBoundsReport {
        eta0,
        horizon,
        direct_sum,
        direct_sum_sq,
        lower_bound,
        upper_bound,
        lower_holds: direct_sum >= lower_bound,
        upper_holds: direct_sum_sq <= upper_bound,
    })
}

/// Scans horizons upward and returns the smallest T whose direct sum clears
/// the closed-form lower bound. Equals 5: T in {2,3,4} all fail.
pub fn smallest_horizon_for_sum_lower_bound() -> usize {
    for horizon in 2.. {
        if verify_sum_bounds(1.0, horizon).unwrap().lower_holds {
            return horizon;
        }
    }
    unreachable!()
}
