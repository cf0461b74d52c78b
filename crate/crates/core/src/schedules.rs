//! Step-size rules and the warm-restart index map.
//!
//! All rules map an epoch index `t` in `[1, T]` to a step size. Epochs are
//! 1-indexed; the step size is held constant across the mini-batches of an
//! epoch. The logarithmic rule is exact at both ends: `eta_1 = eta0` because
//! `ln 1 = 0`, and `eta_T = 0` because `ln T / ln T` divides identical
//! operands. The terminal zero step is still executed as a (no-op) update,
//! never skipped, so cycle lengths stay uniform.
//!
//! Everything except [`PlateauState`] is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    InvT,
    InvSqrtT,
    Cosine,
    Exponential,
    Logarithmic,
    Stagewise,
    Plateau,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 8] = [
        ScheduleKind::Constant,
        ScheduleKind::InvT,
        ScheduleKind::InvSqrtT,
        ScheduleKind::Cosine,
        ScheduleKind::Exponential,
        ScheduleKind::Logarithmic,
        ScheduleKind::Stagewise,
        ScheduleKind::Plateau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::InvT => "inv_t",
            ScheduleKind::InvSqrtT => "inv_sqrt_t",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Exponential => "exponential",
            ScheduleKind::Logarithmic => "logarithmic",
            ScheduleKind::Stagewise => "stagewise",
            ScheduleKind::Plateau => "plateau",
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown schedule kind {s:?}")))
    }
}

fn check_epoch(t: usize, horizon: usize) -> Result<()> {
    if horizon < 2 {
        return Err(Error::Domain(format!("horizon T={horizon} must be >= 2")));
    }
    if t < 1 || t > horizon {
        return Err(Error::Domain(format!(
            "epoch t={t} outside [1, {horizon}]"
        )));
    }
    Ok(())
}

/// eta0 * (1 - ln t / ln T). Equals eta0 at t=1 and 0 at t=T, both exactly.
pub fn log_step(t: usize, horizon: usize, eta0: f64) -> Result<f64> {
    check_epoch(t, horizon)?;
    debug_assert!(eta0 > 0.0);
    Ok(eta0 * (1.0 - (t as f64).ln() / (horizon as f64).ln()))
}

/// eta0/2 * (1 + cos(t/T * pi)). The angle is formed as (t/T)*pi so that
/// t=T evaluates cos at the exact f64 pi, which gives -1 and a zero step.
pub fn cosine_step(t: usize, horizon: usize, eta0: f64) -> Result<f64> {
    check_epoch(t, horizon)?;
    debug_assert!(eta0 > 0.0);
    let angle = (t as f64 / horizon as f64) * std::f64::consts::PI;
    Ok(eta0 / 2.0 * (1.0 + angle.cos()))
}

pub fn constant_step(eta0: f64) -> f64 {
    debug_assert!(eta0 > 0.0);
    eta0
}

/// eta0 / (1 + alpha*t)
pub fn inv_t_step(t: usize, eta0: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha={alpha} must be >= 0")));
    }
    debug_assert!(eta0 > 0.0);
    Ok(eta0 / (1.0 + alpha * t as f64))
}

/// eta0 / (1 + alpha*sqrt(t))
pub fn inv_sqrt_t_step(t: usize, eta0: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha={alpha} must be >= 0")));
    }
    debug_assert!(eta0 > 0.0);
    Ok(eta0 / (1.0 + alpha * (t as f64).sqrt()))
}

/// eta0 * (beta/T)^(t/T), decaying from eta0 toward eta0*beta/T.
///
/// Unlike the other rules this accepts t=0 (the exponent-zero extrapolation
/// that table dumps may show); runs themselves only ever pass t >= 1.
pub fn exponential_step(t: usize, horizon: usize, eta0: f64, beta: f64) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::Domain(format!("horizon T={horizon} must be >= 2")));
    }
    if t > horizon {
        return Err(Error::Domain(format!(
            "epoch t={t} outside [0, {horizon}]"
        )));
    }
    if !(beta > 0.0 && beta < horizon as f64) {
        return Err(Error::Domain(format!(
            "beta={beta} must lie in (0, T={horizon}) for the schedule to decay"
        )));
    }
    debug_assert!(eta0 > 0.0);
    Ok(eta0 * (beta / horizon as f64).powf(t as f64 / horizon as f64))
}

/// eta0 * alpha^k where k counts milestones <= t. The reduction applies at
/// the milestone epoch itself.
pub fn stagewise_step(t: usize, eta0: f64, alpha: f64, milestones: &[usize]) -> f64 {
    debug_assert!(eta0 > 0.0);
    let k = milestones.iter().filter(|&&m| m <= t).count();
    eta0 * alpha.powi(k as i32)
}

/// Global epoch counter k >= 0 to (cycle, inner epoch): (k/T, k%T + 1).
/// Bijective from [0, l*T) onto {0..l-1} x [1, T]; every cycle restarts the
/// inner schedule at t=1 where it returns exactly eta0.
pub fn warm_restart_index(k: usize, horizon: usize) -> (usize, usize) {
    debug_assert!(horizon >= 2);
    (k / horizon, k % horizon + 1)
}

/// Default milestone placement for stagewise decay: one- and two-milestone
/// variants are the common baselines, so center them in the horizon.
pub fn default_milestones(horizon: usize, count: usize) -> Result<Vec<usize>> {
    let ms = match count {
        1 => vec![horizon.div_ceil(2)],
        2 => vec![horizon.div_ceil(3), (2 * horizon).div_ceil(3)],
        _ => {
            return Err(Error::Config(format!(
                "default milestones exist for 1 or 2 stages, not {count}"
            )))
        }
    };
    validate_milestones(&ms, horizon)?;
    Ok(ms)
}

fn validate_milestones(milestones: &[usize], horizon: usize) -> Result<()> {
    for w in milestones.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "milestones must be strictly increasing, got {milestones:?}"
            )));
        }
    }
    for &m in milestones {
        if m <= 1 || m >= horizon {
            return Err(Error::Config(format!(
                "milestone {m} outside the open interval (1, {horizon})"
            )));
        }
    }
    Ok(())
}

pub const DEFAULT_PLATEAU_PATIENCE: usize = 10;
pub const DEFAULT_PLATEAU_THRESHOLD: f64 = 1e-4;

/// A step-size rule with all of its parameters. `alpha` is the decay or
/// reduction factor (inv_t, inv_sqrt_t, stagewise, plateau), `beta` the
/// exponential rate, `milestones` the stagewise switch epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub eta0: f64,
    /// Inner horizon T: epochs per cycle.
    pub horizon: usize,
    #[serde(default = "StepSchedule::default_alpha")]
    pub alpha: f64,
    #[serde(default = "StepSchedule::default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub milestones: Vec<usize>,
    #[serde(default = "StepSchedule::default_patience")]
    pub patience: usize,
    #[serde(default = "StepSchedule::default_threshold")]
    pub threshold: f64,
}

impl StepSchedule {
    fn default_alpha() -> f64 {
        0.1
    }
    fn default_beta() -> f64 {
        1.0
    }
    fn default_patience() -> usize {
        DEFAULT_PLATEAU_PATIENCE
    }
    fn default_threshold() -> f64 {
        DEFAULT_PLATEAU_THRESHOLD
    }

    /// A schedule with defaulted parameters: alpha 0.1 (0.5 for plateau,
    /// the usual halve-on-stall factor), beta 1, centered milestones for
    /// stagewise.
    pub fn new(kind: ScheduleKind, eta0: f64, horizon: usize) -> Result<Self> {
        let mut s = StepSchedule {
            kind,
            eta0,
            horizon,
            alpha: Self::default_alpha(),
            beta: Self::default_beta(),
            milestones: Vec::new(),
            patience: Self::default_patience(),
            threshold: Self::default_threshold(),
        };
        match kind {
            ScheduleKind::Stagewise => s.milestones = default_milestones(horizon, 2)?,
            ScheduleKind::Plateau => s.alpha = 0.5,
            _ => {}
        }
        s.validate()?;
        Ok(s)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_milestones(mut self, milestones: Vec<usize>) -> Self {
        self.milestones = milestones;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::Config(format!(
                "eta0={} must be positive and finite",
                self.eta0
            )));
        }
        if self.horizon < 2 {
            return Err(Error::Config(format!(
                "horizon T={} must be >= 2",
                self.horizon
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha={} must be >= 0", self.alpha)));
        }
        match self.kind {
            ScheduleKind::Exponential => {
                if !(self.beta > 0.0 && self.beta < self.horizon as f64) {
                    return Err(Error::Config(format!(
                        "beta={} must lie in (0, T={})",
                        self.beta, self.horizon
                    )));
                }
            }
            ScheduleKind::Stagewise => validate_milestones(&self.milestones, self.horizon)?,
            ScheduleKind::Plateau => {
                if self.patience == 0 {
                    return Err(Error::Config("plateau patience must be >= 1".into()));
                }
                if !(self.threshold > 0.0 && self.threshold.is_finite()) {
                    return Err(Error::Config(format!(
                        "plateau threshold={} must be positive",
                        self.threshold
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Step size at inner epoch t, for the stateless kinds. The plateau rule
    /// depends on the observed metric stream; drive it through
    /// [`PlateauState`] instead.
    pub fn step(&self, t: usize) -> Result<f64> {
        match self.kind {
            ScheduleKind::Constant => {
                check_epoch(t, self.horizon)?;
                Ok(constant_step(self.eta0))
            }
            ScheduleKind::InvT => {
                check_epoch(t, self.horizon)?;
                inv_t_step(t, self.eta0, self.alpha)
            }
            ScheduleKind::InvSqrtT => {
                check_epoch(t, self.horizon)?;
                inv_sqrt_t_step(t, self.eta0, self.alpha)
            }
            ScheduleKind::Cosine => cosine_step(t, self.horizon, self.eta0),
            ScheduleKind::Exponential => {
                check_epoch(t, self.horizon)?;
                exponential_step(t, self.horizon, self.eta0, self.beta)
            }
            ScheduleKind::Logarithmic => log_step(t, self.horizon, self.eta0),
            ScheduleKind::Stagewise => {
                check_epoch(t, self.horizon)?;
                Ok(stagewise_step(t, self.eta0, self.alpha, &self.milestones))
            }
            ScheduleKind::Plateau => Err(Error::Precondition(
                "plateau is metric-driven; evaluate it through PlateauState".into(),
            )),
        }
    }

    /// The full table eta_1..eta_T.
    pub fn table(&self) -> Result<Vec<f64>> {
        self.validate()?;
        (1..=self.horizon).map(|t| self.step(t)).collect()
    }
}

/// Mutable state of the metric-driven plateau rule. `best_metric` starts at
/// +inf so the first observation always counts as an improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub current_eta: f64,
    pub best_metric: f64,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub threshold: f64,
}

impl PlateauState {
    pub fn new(eta0: f64, patience: usize, threshold: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::Config(format!("eta0={eta0} must be positive")));
        }
        if patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::Config(format!("threshold={threshold} must be positive")));
        }
        Ok(PlateauState {
            current_eta: eta0,
            best_metric: f64::INFINITY,
            epochs_since_improvement: 0,
            patience,
            threshold,
        })
    }

    pub fn from_schedule(s: &StepSchedule) -> Result<Self> {
        PlateauState::new(s.eta0, s.patience, s.threshold)
    }

    /// Feed one metric observation; returns the step size in force after it.
    /// Improvement means `metric < best * (1 - threshold)`, strictly: a
    /// metric landing exactly on the threshold does not reset the counter.
    /// Once the counter exceeds `patience`, eta is multiplied by `alpha` and
    /// the counter restarts.
    pub fn update(&mut self, metric: f64, alpha: f64) -> Result<f64> {
        if !metric.is_finite() {
            return Err(Error::Input(format!("plateau metric {metric} is not finite")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha={alpha} must be >= 0")));
        }
        if metric < self.best_metric * (1.0 - self.threshold) {
            self.best_metric = metric;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement > self.patience {
                self.current_eta *= alpha;
                self.epochs_since_improvement = 0;
            }
        }
        Ok(self.current_eta)
    }
}
