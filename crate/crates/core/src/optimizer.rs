//! The training loop: SGD with optional Nesterov momentum, an Armijo
//! line-search variant, and Adam, driven by a step schedule with warm
//! restarts.
//!
//! An epoch is the unit the schedule ticks over. For oracle problems
//! (noisy quadratics) an epoch is a single update; for finite sums it is
//! `batches_per_epoch` minibatch updates sharing one step size. Traces log
//! the full objective, full squared gradient norm, and the eval metric once
//! per epoch, at epoch start, so row t describes the iterate x_t that the
//! convergence statements quantify over. Schedules that end at zero have
//! their final epoch executed as a no-op update, never skipped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{all_finite, derive_rng, norm_sq, stream};
use crate::problems::{ProblemBundle, StochasticOracle};
use crate::sampling::OutputDistribution;
use crate::schedules::{warm_restart_index, PlateauState, ScheduleKind, StepSchedule};
use crate::trace::{RunStatus, RunTrace, TraceRow};

/// Runs whose loss exceeds this are declared diverged and truncated.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Line-search trial cap; on exhaustion the smallest trial is returned with
/// a warning flag rather than an error.
pub const MAX_BACKTRACKS: u32 = 50;

/// Stage-one grid for step-size search.
pub const COARSE_GRID: [f64; 14] = [
    1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd,
    SgdArmijo,
    Adam,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sgd, Method::SgdArmijo, Method::Adam];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::SgdArmijo => "sgd_armijo",
            Method::Adam => "adam",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmijoParams {
    /// Step the search restarts from every update.
    pub eta_max: f64,
    /// Sufficient-decrease constant in (0,1).
    pub c_armijo: f64,
    /// Trial shrink factor in (0,1).
    pub backtrack: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            eta_max: 1.0,
            c_armijo: 0.1,
            backtrack: 0.5,
        }
    }
}

impl ArmijoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_max > 0.0 && self.eta_max.is_finite()) {
            return Err(Error::Config(format!(
                "armijo eta_max={} must be positive and finite",
                self.eta_max
            )));
        }
        if !(self.c_armijo > 0.0 && self.c_armijo < 1.0) {
            return Err(Error::Config(format!(
                "armijo c={} must lie in (0,1)",
                self.c_armijo
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!(
                "armijo backtrack={} must lie in (0,1)",
                self.backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    /// Fixed rate the reference Adam baseline runs use (pair with a constant
    /// schedule to reproduce them).
    pub const DEFAULT_ETA: f64 = 0.0009;

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("adam {name}={b} must lie in [0,1)")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!(
                "adam eps={} must be positive",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Everything one training run needs besides the problem and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: StepSchedule,
    #[serde(default = "RunConfig::default_method")]
    pub method: Method,
    /// Warm-restart cycle count l; the run lasts l * T epochs.
    #[serde(default = "RunConfig::default_restarts")]
    pub restarts: usize,
    #[serde(default = "RunConfig::default_batches")]
    pub batches_per_epoch: usize,
    /// Nesterov momentum. Zero means plain SGD steps.
    #[serde(default)]
    pub mu: f64,
    /// Line-search settings; ignored unless method is sgd_armijo, in which
    /// case the schedule only supplies the horizon and the logged eta is the
    /// mean accepted step per epoch.
    #[serde(default)]
    pub armijo: ArmijoParams,
    #[serde(default)]
    pub adam: AdamParams,
    /// Zero the momentum buffers at every restart boundary instead of
    /// carrying them across (carrying is the default; the restart rule is
    /// silent on the buffers, so both behaviors are available).
    #[serde(default)]
    pub reset_momentum: bool,
}

impl RunConfig {
    fn default_method() -> Method {
        Method::Sgd
    }
    fn default_restarts() -> usize {
        1
    }
    fn default_batches() -> usize {
        1
    }

    pub fn new(schedule: StepSchedule) -> Self {
        RunConfig {
            schedule,
            method: Method::Sgd,
            restarts: 1,
            batches_per_epoch: 1,
            mu: 0.0,
            armijo: ArmijoParams::default(),
            adam: AdamParams::default(),
            reset_momentum: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        if self.batches_per_epoch == 0 {
            return Err(Error::Config("batches_per_epoch must be >= 1".into()));
        }
        if !(self.mu >= 0.0 && self.mu < 1.0) {
            return Err(Error::Config(format!("mu={} must lie in [0,1)", self.mu)));
        }
        self.armijo.validate()?;
        self.adam.validate()?;
        match self.method {
            Method::SgdArmijo if self.mu != 0.0 => Err(Error::Config(
                "sgd_armijo certifies the plain gradient step; set mu = 0".into(),
            )),
            Method::Adam if self.mu != 0.0 => Err(Error::Config(
                "adam tracks momentum through beta1; set mu = 0".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Default trace label, e.g. "sgd+logarithmic".
    pub fn label(&self) -> String {
        format!("{}+{}", self.method, self.schedule.kind)
    }
}

/// Content hash identifying a (problem, config) pair in trace headers.
pub fn config_fingerprint(problem: &str, config: &RunConfig) -> String {
    #[derive(Serialize)]
    struct Input<'a> {
        problem: &'a str,
        config: &'a RunConfig,
    }
    let json = serde_json::to_string(&Input { problem, config })
        .expect("run config serializes infallibly");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Iterate plus momentum/moment buffers. Buffers stay zero for methods that
/// do not use them.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub x: Vec<f64>,
    velocity: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
}

impl OptimizerState {
    pub fn new(x: Vec<f64>) -> Self {
        let d = x.len();
        OptimizerState {
            x,
            velocity: vec![0.0; d],
            adam_m: vec![0.0; d],
            adam_v: vec![0.0; d],
            adam_t: 0,
        }
    }

    /// Forget accumulated momentum and moment estimates.
    pub fn reset_momentum(&mut self) {
        self.velocity.iter_mut().for_each(|v| *v = 0.0);
        self.adam_m.iter_mut().for_each(|v| *v = 0.0);
        self.adam_v.iter_mut().for_each(|v| *v = 0.0);
        self.adam_t = 0;
    }
}

fn check_step_inputs(state: &OptimizerState, g: &[f64], eta: f64) -> Result<()> {
    if g.len() != state.x.len() {
        return Err(Error::Input(format!(
            "gradient length {} != state dimension {}",
            g.len(),
            state.x.len()
        )));
    }
    if !all_finite(g) {
        return Err(Error::Domain("non-finite gradient".into()));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta={eta} must be finite and >= 0")));
    }
    Ok(())
}

/// One (possibly momentum-accelerated) gradient step. With mu=0 this is
/// exactly x <- x - eta*g; otherwise the Nesterov form
/// v <- mu*v + g, x <- x - eta*(g + mu*v).
pub fn sgd_step(state: &mut OptimizerState, g: &[f64], eta: f64, mu: f64) -> Result<()> {
    check_step_inputs(state, g, eta)?;
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::Domain(format!("mu={mu} must lie in [0,1)")));
    }
    if mu == 0.0 {
        for (xi, gi) in state.x.iter_mut().zip(g) {
            *xi -= eta * gi;
        }
    } else {
        for ((xi, vi), gi) in state.x.iter_mut().zip(&mut state.velocity).zip(g) {
            *vi = mu * *vi + gi;
            *xi -= eta * (gi + mu * *vi);
        }
    }
    Ok(())
}

/// Bias-corrected Adam update.
pub fn adam_step(state: &mut OptimizerState, g: &[f64], eta: f64, params: &AdamParams) -> Result<()> {
    check_step_inputs(state, g, eta)?;
    params.validate()?;
    state.adam_t += 1;
    let bc1 = 1.0 - params.beta1.powi(state.adam_t as i32);
    let bc2 = 1.0 - params.beta2.powi(state.adam_t as i32);
    for i in 0..state.x.len() {
        state.adam_m[i] = params.beta1 * state.adam_m[i] + (1.0 - params.beta1) * g[i];
        state.adam_v[i] = params.beta2 * state.adam_v[i] + (1.0 - params.beta2) * g[i] * g[i];
        let m_hat = state.adam_m[i] / bc1;
        let v_hat = state.adam_v[i] / bc2;
        state.x[i] -= eta * m_hat / (v_hat.sqrt() + params.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoOutcome {
    pub eta: f64,
    /// True when no trial passed within the backtrack budget; `eta` is then
    /// the smallest trial rather than an accepted one.
    pub exhausted: bool,
}

/// Backtracking search for the largest eta in {eta_max * backtrack^k}
/// satisfying f_i(x - eta*g) <= f_i(x) - c * eta * ||g||^2, where f_i is the
/// sampled component the oracle used for its last draw. A zero gradient
/// accepts eta_max outright.
pub fn armijo_search(
    oracle: &dyn StochasticOracle,
    x: &[f64],
    g: &[f64],
    params: &ArmijoParams,
) -> Result<ArmijoOutcome> {
    params.validate()?;
    let gnorm_sq = norm_sq(g);
    if gnorm_sq == 0.0 {
        return Ok(ArmijoOutcome {
            eta: params.eta_max,
            exhausted: false,
        });
    }
    let fx = oracle.component_value(x);
    let mut eta = params.eta_max;
    let mut trial = vec![0.0; x.len()];
    for k in 0..=MAX_BACKTRACKS {
        for (ti, (xi, gi)) in trial.iter_mut().zip(x.iter().zip(g)) {
            *ti = xi - eta * gi;
        }
        let ftrial = oracle.component_value(&trial);
        // A NaN objective fails this comparison and keeps backtracking.
        if ftrial <= fx - params.c_armijo * eta * gnorm_sq {
            return Ok(ArmijoOutcome {
                eta,
                exhausted: false,
            });
        }
        if k < MAX_BACKTRACKS {
            eta *= params.backtrack;
        }
    }
    Ok(ArmijoOutcome {
        eta,
        exhausted: true,
    })
}

/// A finished run: the persistable trace plus in-memory extras the trace
/// does not carry.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    /// Iterate after the last epoch (the trace only holds epoch-start
    /// scalars). Empty if the run diverged.
    pub final_x: Vec<f64>,
    /// Line-search exhaustion count across all updates (always 0 for other
    /// methods).
    pub armijo_exhausted: usize,
}

/// Executes l cycles of T epochs each and returns the trace. Divergence
/// (non-finite state or loss above [`DIVERGENCE_THRESHOLD`]) truncates the
/// trace and marks it, it never errors. Fully deterministic in (config, seed).
pub fn run(bundle: &ProblemBundle, config: &RunConfig, seed: u64) -> Result<RunOutcome> {
    config.validate()?;
    let objective = &bundle.objective;
    let schedule = &config.schedule;
    let horizon = schedule.horizon;
    let total_epochs = config.restarts * horizon;

    let mut oracle = bundle.make_oracle(seed);
    let mut state = OptimizerState::new(objective.x_init());
    // The plateau rule reacts to the logged train loss; every other kind is
    // a pure function of t. Line-search runs pick their own step.
    let mut plateau = match (config.method, schedule.kind) {
        (Method::SgdArmijo, _) => None,
        (_, ScheduleKind::Plateau) => Some(PlateauState::from_schedule(schedule)?),
        _ => None,
    };

    let mut rows: Vec<TraceRow> = Vec::with_capacity(total_epochs);
    let mut status = RunStatus::Completed;
    let mut armijo_exhausted = 0usize;

    'epochs: for global_epoch in 1..=total_epochs {
        let (cycle, t) = warm_restart_index(global_epoch - 1, horizon);
        if t == 1 && cycle > 0 {
            if config.reset_momentum {
                state.reset_momentum();
            }
            // A restart re-runs the schedule from eta0, so the plateau state
            // machine starts over too.
            if let Some(p) = &mut plateau {
                *p = PlateauState::from_schedule(schedule)?;
            }
        }

        let train_loss = objective.value(&state.x);
        let grad_norm_sq = norm_sq(&objective.gradient(&state.x));
        if !train_loss.is_finite()
            || train_loss > DIVERGENCE_THRESHOLD
            || !grad_norm_sq.is_finite()
            || !all_finite(&state.x)
        {
            status = RunStatus::Diverged {
                at_global_epoch: global_epoch,
            };
            break 'epochs;
        }
        let val_metric = objective.val_metric(&state.x);

        let eta_nominal = match (config.method, &mut plateau) {
            // Unused; the logged eta is the mean accepted step below.
            (Method::SgdArmijo, _) => 0.0,
            (_, Some(p)) => p.update(train_loss, schedule.alpha)?,
            (_, None) => schedule.step(t)?,
        };

        let mut accepted_sum = 0.0;
        let mut accepted_n = 0usize;
        for _ in 0..config.batches_per_epoch {
            let g = oracle.draw(&state.x);
            let stepped = match config.method {
                Method::Sgd => sgd_step(&mut state, &g, eta_nominal, config.mu),
                Method::Adam => adam_step(&mut state, &g, eta_nominal, &config.adam),
                Method::SgdArmijo => {
                    match armijo_search(oracle.as_ref(), &state.x, &g, &config.armijo) {
                        Ok(outcome) => {
                            accepted_sum += outcome.eta;
                            accepted_n += 1;
                            if outcome.exhausted {
                                armijo_exhausted += 1;
                            }
                            sgd_step(&mut state, &g, outcome.eta, 0.0)
                        }
                        Err(e) => Err(e),
                    }
                }
            };
            if stepped.is_err() {
                // A non-finite gradient mid-epoch is divergence, not a bug.
                status = RunStatus::Diverged {
                    at_global_epoch: global_epoch,
                };
                break 'epochs;
            }
        }

        let eta = match config.method {
            Method::SgdArmijo => accepted_sum / accepted_n as f64,
            _ => eta_nominal,
        };
        rows.push(TraceRow {
            seed,
            global_epoch,
            cycle,
            t,
            eta,
            train_loss,
            grad_norm_sq,
            val_metric,
        });
    }

    // Reported-iterate draws, per cycle and overall, weighted by the steps
    // the run actually used (identical to the schedule table for scheduled
    // methods). Skipped on divergence.
    let (sampled_iterate, cycle_draws) = if status.is_completed() {
        let mut rng = derive_rng(seed, stream::SAMPLER);
        let mut draws = Vec::with_capacity(config.restarts);
        for cycle in 0..config.restarts {
            let etas: Vec<f64> = rows[cycle * horizon..(cycle + 1) * horizon]
                .iter()
                .map(|r| r.eta)
                .collect();
            let dist = OutputDistribution::from_weights(&etas)?;
            draws.push(cycle * horizon + dist.sample(&mut rng));
        }
        let all_etas: Vec<f64> = rows.iter().map(|r| r.eta).collect();
        let overall = OutputDistribution::from_weights(&all_etas)?.sample(&mut rng);
        (Some(overall), draws)
    } else {
        (None, Vec::new())
    };

    let final_x = if status.is_completed() {
        state.x
    } else {
        Vec::new()
    };
    Ok(RunOutcome {
        trace: RunTrace {
            fingerprint: config_fingerprint(objective.name(), config),
            label: config.label(),
            seed,
            status,
            sampled_iterate,
            cycle_draws,
            rows,
        },
        final_x,
        armijo_exhausted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStage {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub eta0: f64,
    pub stage: GridStage,
    /// Mean validation loss of the final iterate over completed seeds;
    /// absent when every seed diverged.
    pub mean_val_loss: Option<f64>,
    pub completed: usize,
    pub diverged: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best_eta0: f64,
    pub best_mean_val_loss: f64,
    /// Every scanned point in scan order; the winner is their argmin.
    pub points: Vec<GridPoint>,
}

fn evaluate_grid_point(
    bundle: &ProblemBundle,
    template: &RunConfig,
    seeds: &[u64],
    eta0: f64,
    stage: GridStage,
) -> Result<GridPoint> {
    let mut config = template.clone();
    config.schedule.eta0 = eta0;
    config.validate()?;
    let losses: Vec<Option<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let outcome = run(bundle, &config, seed)?;
            Ok(match outcome.trace.status {
                RunStatus::Completed => {
                    let loss = bundle.objective.validation_loss(&outcome.final_x);
                    loss.is_finite().then_some(loss)
                }
                RunStatus::Diverged { .. } => None,
            })
        })
        .collect::<Result<_>>()?;
    let completed: Vec<f64> = losses.iter().copied().flatten().collect();
    let n_completed = completed.len();
    Ok(GridPoint {
        eta0,
        stage,
        mean_val_loss: (n_completed > 0)
            .then(|| completed.iter().sum::<f64>() / n_completed as f64),
        completed: n_completed,
        diverged: seeds.len() - n_completed,
    })
}

fn grid_argmin(points: &[GridPoint]) -> Option<&GridPoint> {
    points
        .iter()
        .filter(|p| p.mean_val_loss.is_some())
        .min_by(|a, b| {
            let (la, lb) = (a.mean_val_loss.unwrap(), b.mean_val_loss.unwrap());
            // Ties go to the smaller step for stability.
            la.total_cmp(&lb).then(a.eta0.total_cmp(&b.eta0))
        })
}

/// Two-stage step-size search: evaluate `coarse`, then rescan around the
/// stage-one winner at `fine_step` spacing within `fine_radius`. The winner
/// is the argmin of mean validation loss over everything scanned. A zero
/// radius or step skips the fine stage.
pub fn grid_search(
    bundle: &ProblemBundle,
    template: &RunConfig,
    seeds: &[u64],
    coarse: &[f64],
    fine_radius: f64,
    fine_step: f64,
) -> Result<GridOutcome> {
    if coarse.is_empty() {
        return Err(Error::Input("empty coarse grid".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Input("no seeds".into()));
    }
    if !(fine_radius >= 0.0 && fine_radius.is_finite()) || !(fine_step >= 0.0 && fine_step.is_finite())
    {
        return Err(Error::Config(
            "fine_radius and fine_step must be finite and >= 0".into(),
        ));
    }
    for &v in coarse {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("coarse grid value {v} must be > 0")));
        }
    }

    let mut points = Vec::new();
    for &eta0 in coarse {
        points.push(evaluate_grid_point(bundle, template, seeds, eta0, GridStage::Coarse)?);
    }
    let stage1 = grid_argmin(&points)
        .ok_or_else(|| Error::NoWinner("every coarse candidate diverged on all seeds".into()))?
        .eta0;

    if fine_radius > 0.0 && fine_step > 0.0 {
        let lo = stage1 - fine_radius;
        let n = (2.0 * fine_radius / fine_step).round() as usize;
        for i in 0..=n {
            let eta0 = lo + i as f64 * fine_step;
            if eta0 <= 0.0 || points.iter().any(|p| p.eta0 == eta0) {
                continue;
            }
            points.push(evaluate_grid_point(bundle, template, seeds, eta0, GridStage::Fine)?);
        }
    }

    let best = grid_argmin(&points)
        .ok_or_else(|| Error::NoWinner("every candidate diverged on all seeds".into()))?;
    Ok(GridOutcome {
        best_eta0: best.eta0,
        best_mean_val_loss: best.mean_val_loss.unwrap(),
        points,
    })
}
