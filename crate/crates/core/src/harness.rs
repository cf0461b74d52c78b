//! Experiment orchestration: JSON experiment configs, multi-seed parallel
//! execution with CSV persistence, confidence-interval summaries, and the
//! comparison of measured convergence quantities against their proved
//! bounds.
//!
//! One experiment = one problem, several method variants, `seeds` runs each.
//! Every run writes `<label>_seed<seed>.csv` (plus a gnuplot-friendly `.dat`
//! companion) into the output directory, alongside `config.json` (the
//! resolved config echoed back) and `summary.json`. Reruns of the same
//! config produce byte-identical trace files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bounds::{corollary2_bound, theorem1_bound, TheoremInputs};
use crate::error::{Error, Result};
use crate::numerics::{fmt_f64, kahan_sum};
use crate::optimizer::{run, Method, RunConfig};
use crate::problems::{
    load_idx, make_logreg_with_validation, make_noisy_quadratic, make_quad_cosine,
    make_smooth_mlp_with_validation, synth_classification, DatasetSplit, ProblemBundle,
};
use crate::sampling::OutputDistribution;
use crate::schedules::ScheduleKind;
use crate::trace::RunTrace;

/// IDX file names the image-classification problems expect inside the data
/// directory (the MNIST-family convention, uncompressed).
pub const TRAIN_IMAGES_FILE: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS_FILE: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES_FILE: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS_FILE: &str = "t10k-labels-idx1-ubyte";

fn default_l2() -> f64 {
    1e-4
}
fn default_max_n() -> usize {
    2000
}

/// Problem construction recipe, JSON-taggable. Synthetic classification
/// problems carve out a held-out split drawn with the follow-up seed; IDX
/// problems use the companion test files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    NoisyQuadratic {
        dim: usize,
        eigmin: f64,
        eigmax: f64,
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    QuadCosine {
        dim: usize,
        a: f64,
        b: f64,
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    LogregSynth {
        n: usize,
        dim: usize,
        classes: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        val_n: Option<usize>,
        #[serde(default)]
        batch_size: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    MlpSynth {
        n: usize,
        dim: usize,
        classes: usize,
        hidden: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        val_n: Option<usize>,
        #[serde(default)]
        batch_size: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    LogregFashion {
        #[serde(default)]
        data_dir: Option<PathBuf>,
        #[serde(default = "default_max_n")]
        max_n: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        batch_size: Option<usize>,
    },
    MlpFashion {
        #[serde(default)]
        data_dir: Option<PathBuf>,
        #[serde(default = "default_max_n")]
        max_n: usize,
        hidden: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        batch_size: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

impl ProblemConfig {
    pub fn problem_name(&self) -> &'static str {
        match self {
            ProblemConfig::NoisyQuadratic { .. } => "noisy_quadratic",
            ProblemConfig::QuadCosine { .. } => "quad_cosine",
            ProblemConfig::LogregSynth { .. } => "logreg_synth",
            ProblemConfig::MlpSynth { .. } => "mlp_synth",
            ProblemConfig::LogregFashion { .. } => "logreg_fashion",
            ProblemConfig::MlpFashion { .. } => "mlp_fashion",
        }
    }

    /// Fill in the data directory on problems that read files; a no-op for
    /// the self-contained ones.
    pub fn set_data_dir(&mut self, dir: PathBuf) {
        match self {
            ProblemConfig::LogregFashion { data_dir, .. }
            | ProblemConfig::MlpFashion { data_dir, .. } => *data_dir = Some(dir),
            _ => {}
        }
    }

    pub fn needs_data_dir(&self) -> bool {
        matches!(
            self,
            ProblemConfig::LogregFashion { data_dir: None, .. }
                | ProblemConfig::MlpFashion { data_dir: None, .. }
        )
    }

    fn synth_splits(
        n: usize,
        dim: usize,
        classes: usize,
        val_n: Option<usize>,
        seed: u64,
    ) -> Result<(DatasetSplit, Option<DatasetSplit>)> {
        let train = synth_classification(n, dim, classes, seed)?;
        // Default held-out size n/5 (at least one sample per class);
        // val_n = 0 opts out. The split draws from the follow-up seed so
        // it never duplicates the training data.
        let v = match val_n {
            Some(explicit) => explicit,
            None => (n / 5).max(classes),
        };
        let val = if v == 0 {
            None
        } else {
            Some(synth_classification(v, dim, classes, seed.wrapping_add(1))?)
        };
        Ok((train, val))
    }

    fn idx_splits(
        data_dir: &Option<PathBuf>,
        max_n: usize,
    ) -> Result<(DatasetSplit, Option<DatasetSplit>)> {
        let dir = data_dir.as_ref().ok_or_else(|| {
            Error::Config(
                "data directory required: set problem.data_dir, --data-dir, or LOGSTEP_DATA_DIR"
                    .into(),
            )
        })?;
        let train = load_idx(
            &dir.join(TRAIN_IMAGES_FILE),
            &dir.join(TRAIN_LABELS_FILE),
            max_n,
        )?;
        let val = load_idx(
            &dir.join(TEST_IMAGES_FILE),
            &dir.join(TEST_LABELS_FILE),
            max_n,
        )?;
        Ok((train, Some(val)))
    }

    pub fn build(&self) -> Result<ProblemBundle> {
        let apply_batch = |bundle: ProblemBundle, batch: &Option<usize>| match batch {
            Some(b) => bundle.with_batch_size(*b),
            None => Ok(bundle),
        };
        match self {
            ProblemConfig::NoisyQuadratic {
                dim,
                eigmin,
                eigmax,
                sigma,
                seed,
            } => make_noisy_quadratic(*dim, *eigmin, *eigmax, *sigma, *seed),
            ProblemConfig::QuadCosine {
                dim,
                a,
                b,
                sigma,
                seed,
            } => make_quad_cosine(*dim, *a, *b, *sigma, *seed),
            ProblemConfig::LogregSynth {
                n,
                dim,
                classes,
                l2,
                val_n,
                batch_size,
                seed,
            } => {
                let (train, val) = Self::synth_splits(*n, *dim, *classes, *val_n, *seed)?;
                apply_batch(make_logreg_with_validation(train, val, *l2)?, batch_size)
            }
            ProblemConfig::MlpSynth {
                n,
                dim,
                classes,
                hidden,
                l2,
                val_n,
                batch_size,
                seed,
            } => {
                let (train, val) = Self::synth_splits(*n, *dim, *classes, *val_n, *seed)?;
                apply_batch(
                    make_smooth_mlp_with_validation(train, val, *hidden, *l2, *seed)?,
                    batch_size,
                )
            }
            ProblemConfig::LogregFashion {
                data_dir,
                max_n,
                l2,
                batch_size,
            } => {
                let (train, val) = Self::idx_splits(data_dir, *max_n)?;
                apply_batch(make_logreg_with_validation(train, val, *l2)?, batch_size)
            }
            ProblemConfig::MlpFashion {
                data_dir,
                max_n,
                hidden,
                l2,
                batch_size,
                seed,
            } => {
                let (train, val) = Self::idx_splits(data_dir, *max_n)?;
                apply_batch(
                    make_smooth_mlp_with_validation(train, val, *hidden, *l2, *seed)?,
                    batch_size,
                )
            }
        }
    }
}

/// Env var that overrides any --data-dir flag.
pub const DATA_DIR_ENV: &str = "LOGSTEP_DATA_DIR";

/// Flag/env resolution for the data directory: the environment wins.
pub fn resolve_data_dir(flag: Option<PathBuf>) -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .or(flag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    /// Unique name; becomes part of trace file names.
    pub label: String,
    pub run: RunConfig,
}

/// A whole experiment: one problem, several variants, `seeds` runs each
/// (seeds 0..seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemConfig,
    pub seeds: u64,
    pub variants: Vec<Variant>,
}

fn label_ok(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '+'))
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        // serde_json reports the offending field with line and column.
        let config: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("experiment name must not be empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for variant in &self.variants {
            if !label_ok(&variant.label) {
                return Err(Error::Config(format!(
                    "variant label {:?} must be nonempty [A-Za-z0-9_+-]",
                    variant.label
                )));
            }
            if !seen.insert(variant.label.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate variant label {:?}",
                    variant.label
                )));
            }
            variant.run.validate().map_err(|e| {
                let msg = match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                };
                Error::Config(format!("variant {:?}: {msg}", variant.label))
            })?;
        }
        Ok(())
    }

    /// Content hash of the resolved config, embedded in every output file.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes infallibly");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Per-method statistics over the final epoch of each completed run.
/// The margin fields are half-widths of the Student-t confidence interval
/// at the requested level (95% in all default reporting, hence the names).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_final_loss: f64,
    pub loss_margin95: f64,
    pub mean_final_metric: f64,
    pub metric_margin95: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub summary: RunSummary,
    /// Seeds whose runs diverged; excluded from the means, reported apart.
    pub diverged_seeds: Vec<u64>,
}

fn t_quantile(confidence: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    dist.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

fn mean_and_margin(values: &[f64], confidence: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = kahan_sum(values.iter().copied()) / n;
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    let margin = t_quantile(confidence, n - 1.0) * var.sqrt() / n.sqrt();
    (mean, margin)
}

fn group_by_label(traces: &[RunTrace]) -> Result<BTreeMap<&str, Vec<&RunTrace>>> {
    let mut groups: BTreeMap<&str, Vec<&RunTrace>> = BTreeMap::new();
    for trace in traces {
        groups.entry(trace.label.as_str()).or_default().push(trace);
    }
    for (label, group) in &mut groups {
        // Canonical seed order makes the statistics independent of input
        // order down to the last bit.
        group.sort_by_key(|t| t.seed);
        for pair in group.windows(2) {
            if pair[0].seed == pair[1].seed {
                return Err(Error::Summary(format!(
                    "{label}: duplicate trace for seed {}",
                    pair[0].seed
                )));
            }
        }
    }
    Ok(groups)
}

fn summarize_group(
    label: &str,
    group: &[&RunTrace],
    confidence: f64,
) -> (Vec<u64>, Result<RunSummary>) {
    let diverged: Vec<u64> = group
        .iter()
        .filter(|t| !t.status.is_completed())
        .map(|t| t.seed)
        .collect();
    let completed: Vec<&&RunTrace> = group.iter().filter(|t| t.status.is_completed()).collect();
    if completed.len() < 2 {
        return (
            diverged,
            Err(Error::Summary(format!(
                "{label}: need >= 2 completed runs for a confidence interval, have {}",
                completed.len()
            ))),
        );
    }
    let mut losses = Vec::with_capacity(completed.len());
    let mut metrics = Vec::with_capacity(completed.len());
    for trace in &completed {
        match trace.final_row() {
            Some(row) => {
                losses.push(row.train_loss);
                metrics.push(row.val_metric);
            }
            None => {
                return (
                    diverged,
                    Err(Error::Summary(format!(
                        "{label}: completed trace for seed {} has no rows",
                        trace.seed
                    ))),
                )
            }
        }
    }
    let (mean_final_loss, loss_margin95) = mean_and_margin(&losses, confidence);
    let (mean_final_metric, metric_margin95) = mean_and_margin(&metrics, confidence);
    (
        diverged,
        Ok(RunSummary {
            mean_final_loss,
            loss_margin95,
            mean_final_metric,
            metric_margin95,
            n_seeds: losses.len(),
        }),
    )
}

/// Per-method means and Student-t confidence margins over final-epoch loss
/// and metric. Diverged runs are excluded from the statistics and listed.
/// Errors if any method has fewer than two completed runs.
pub fn summarize_with_confidence(
    traces: &[RunTrace],
    confidence: f64,
) -> Result<Vec<MethodSummary>> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Input(format!(
            "confidence {confidence} must lie in (0,1)"
        )));
    }
    let groups = group_by_label(traces)?;
    if groups.is_empty() {
        return Err(Error::Summary("no traces to summarize".into()));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (label, group) in &groups {
        let (diverged_seeds, summary) = summarize_group(label, group, confidence);
        out.push(MethodSummary {
            label: (*label).to_string(),
            summary: summary?,
            diverged_seeds,
        });
    }
    Ok(out)
}

pub fn summarize(traces: &[RunTrace]) -> Result<Vec<MethodSummary>> {
    summarize_with_confidence(traces, 0.95)
}

/// Lenient per-label summary used inside experiment execution: labels with
/// too few completed runs carry a note instead of failing the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: String,
    pub diverged_seeds: Vec<u64>,
    pub summary: Option<RunSummary>,
    pub note: Option<String>,
}

pub fn summarize_lenient(traces: &[RunTrace], confidence: f64) -> Result<Vec<LabelSummary>> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Input(format!(
            "confidence {confidence} must lie in (0,1)"
        )));
    }
    let groups = group_by_label(traces)?;
    let mut out = Vec::with_capacity(groups.len());
    for (label, group) in &groups {
        let (diverged_seeds, summary) = summarize_group(label, group, confidence);
        let (summary, note) = match summary {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        out.push(LabelSummary {
            label: (*label).to_string(),
            diverged_seeds,
            summary,
            note,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SummaryDoc<'a> {
    name: &'a str,
    fingerprint: &'a str,
    confidence: f64,
    seeds: u64,
    problem: &'a ProblemConfig,
    methods: &'a [LabelSummary],
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub fingerprint: String,
    pub out_dir: PathBuf,
    pub traces: Vec<RunTrace>,
    pub summaries: Vec<LabelSummary>,
    pub any_diverged: bool,
}

fn write_dat_companion(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut out = String::from("# global_epoch eta train_loss grad_norm_sq val_metric\n");
    for r in &trace.rows {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            r.global_epoch,
            fmt_f64(r.eta),
            fmt_f64(r.train_loss),
            fmt_f64(r.grad_norm_sq),
            fmt_f64(r.val_metric),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Runs every (variant, seed) pair of the experiment in parallel, persists
/// one trace CSV (and .dat companion) per run plus `config.json` and
/// `summary.json`, and returns everything in memory. Diverged runs yield
/// marked traces, never a failed experiment.
pub fn execute_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResult> {
    config.validate()?;
    let bundle = config.problem.build()?;
    let fingerprint = config.fingerprint();
    std::fs::create_dir_all(out_dir)?;

    let jobs: Vec<(usize, u64)> = (0..config.variants.len())
        .flat_map(|vi| (0..config.seeds).map(move |seed| (vi, seed)))
        .collect();
    let mut outcomes = jobs
        .par_iter()
        .map(|&(vi, seed)| {
            let outcome = run(&bundle, &config.variants[vi].run, seed)?;
            Ok((vi, seed, outcome))
        })
        .collect::<Result<Vec<_>>>()?;
    outcomes.sort_by_key(|(vi, seed, _)| (*vi, *seed));

    let mut traces = Vec::with_capacity(outcomes.len());
    let mut any_diverged = false;
    for (vi, seed, outcome) in outcomes {
        let mut trace = outcome.trace;
        trace.label = config.variants[vi].label.clone();
        trace.fingerprint = fingerprint.clone();
        any_diverged |= !trace.status.is_completed();
        let stem = format!("{}_seed{seed}", config.variants[vi].label);
        trace.write_csv(&out_dir.join(format!("{stem}.csv")))?;
        write_dat_companion(&out_dir.join(format!("{stem}.dat")), &trace)?;
        traces.push(trace);
    }

    let summaries = summarize_lenient(&traces, 0.95)?;
    let doc = SummaryDoc {
        name: &config.name,
        fingerprint: &fingerprint,
        confidence: 0.95,
        seeds: config.seeds,
        problem: &config.problem,
        methods: &summaries,
    };
    std::fs::write(
        out_dir.join("summary.json"),
        format!("{}\n", serde_json::to_string_pretty(&doc)?),
    )?;
    std::fs::write(
        out_dir.join("config.json"),
        format!("{}\n", serde_json::to_string_pretty(config)?),
    )?;

    Ok(ExperimentResult {
        fingerprint,
        out_dir: out_dir.to_path_buf(),
        traces,
        summaries,
        any_diverged,
    })
}

/// Loads every `*.csv` trace in a directory, sorted by file name.
pub fn read_traces_dir(dir: &Path) -> Result<Vec<RunTrace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!(
            "no trace CSVs found in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|path| {
            RunTrace::read_csv(path).map_err(|e| match e {
                Error::TraceParse { line, msg } => Error::TraceParse {
                    line,
                    msg: format!("{}: {msg}", path.display()),
                },
                other => other,
            })
        })
        .collect()
}

/// One seed's bound comparison. `satisfied` is absent in advisory mode
/// (some constant only empirical), where no hard claim is made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub seed: u64,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub satisfied: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub per_seed: Vec<BoundCheck>,
    pub mean_measured: f64,
    pub mean_bound: f64,
    pub mean_slack: f64,
    /// All seeds satisfied; absent in advisory mode.
    pub satisfied: Option<bool>,
    pub advisory: bool,
    /// c recovered from eta0 = 1/(cL).
    pub implied_c: f64,
    pub cycles: usize,
}

/// Compares each trace's step-weighted squared-gradient measure against the
/// single-run bound (one cycle) or the restarted bound (several cycles,
/// where the measured value is the best cycle and delta1 is the worst
/// cycle-start gap). Preconditions: plain SGD (mu=0, one update per epoch)
/// under the logarithmic schedule with eta0 = 1/(cL) for some c > 1, and
/// completed traces. Empirical constants switch the report to advisory.
pub fn bound_report(
    traces: &[RunTrace],
    bundle: &ProblemBundle,
    config: &RunConfig,
) -> Result<BoundReport> {
    config.validate()?;
    if traces.is_empty() {
        return Err(Error::Input("no traces to check".into()));
    }
    if config.schedule.kind != ScheduleKind::Logarithmic {
        return Err(Error::Precondition(format!(
            "the guarantee covers the logarithmic schedule, not {}",
            config.schedule.kind
        )));
    }
    if config.method != Method::Sgd || config.mu != 0.0 {
        return Err(Error::Precondition(
            "the guarantee covers plain SGD (method sgd, mu = 0)".into(),
        ));
    }
    if config.batches_per_epoch != 1 {
        return Err(Error::Precondition(
            "the guarantee indexes one stochastic step per epoch; set batches_per_epoch = 1"
                .into(),
        ));
    }
    let big_l = bundle.smoothness();
    let sigma = bundle.sigma();
    let f_lb = bundle.objective.lower_bound();
    if !f_lb.is_finite() {
        return Err(Error::Precondition(format!(
            "problem lower bound {f_lb} must be finite"
        )));
    }
    let implied_c = 1.0 / (config.schedule.eta0 * big_l.value());
    if !(implied_c > 1.0) {
        return Err(Error::Precondition(format!(
            "eta0 = {} is not 1/(cL) for any c > 1 (L = {}, implied c = {implied_c})",
            config.schedule.eta0,
            big_l.value()
        )));
    }
    let advisory = !(big_l.is_declared() && sigma.is_declared());

    let horizon = config.schedule.horizon;
    let cycles = config.restarts;
    let probs = OutputDistribution::from_schedule(&config.schedule)?;

    let mut per_seed = Vec::with_capacity(traces.len());
    for trace in traces {
        if !trace.status.is_completed() {
            return Err(Error::Precondition(format!(
                "trace for seed {} diverged; the bound check needs completed runs",
                trace.seed
            )));
        }
        if trace.rows.len() != cycles * horizon {
            return Err(Error::Precondition(format!(
                "trace for seed {} has {} rows, config implies {}",
                trace.seed,
                trace.rows.len(),
                cycles * horizon
            )));
        }
        let mut best_cycle_measure = f64::INFINITY;
        let mut delta1_first = 0.0;
        let mut delta1_max = 0.0f64;
        for cycle in 0..cycles {
            let rows = trace.cycle_rows(cycle);
            let measure = kahan_sum(
                rows.iter()
                    .enumerate()
                    .map(|(i, r)| probs.prob(i + 1) * r.grad_norm_sq),
            );
            best_cycle_measure = best_cycle_measure.min(measure);
            let delta1 = rows[0].train_loss - f_lb;
            if cycle == 0 {
                delta1_first = delta1;
            }
            delta1_max = delta1_max.max(delta1);
        }
        let inputs = TheoremInputs {
            c: implied_c,
            big_l: big_l.value(),
            sigma: sigma.value(),
            delta1: delta1_first,
            horizon,
            cycles,
            delta1_max,
        };
        let bound = if cycles == 1 {
            theorem1_bound(&inputs)?
        } else {
            corollary2_bound(&inputs)?
        };
        let measured = best_cycle_measure;
        per_seed.push(BoundCheck {
            seed: trace.seed,
            measured,
            bound,
            slack: bound / measured,
            satisfied: (!advisory).then_some(measured <= bound),
        });
    }

    let n = per_seed.len() as f64;
    let mean_measured = kahan_sum(per_seed.iter().map(|c| c.measured)) / n;
    let mean_bound = kahan_sum(per_seed.iter().map(|c| c.bound)) / n;
    Ok(BoundReport {
        mean_measured,
        mean_bound,
        mean_slack: mean_bound / mean_measured,
        satisfied: (!advisory).then(|| per_seed.iter().all(|c| c.satisfied == Some(true))),
        advisory,
        implied_c,
        cycles,
        per_seed,
    })
}

/// Least-squares slope of ln(value) against ln(T). Needs >= 3 pairs with
/// positive coordinates; a 1/sqrt(T) law comes out as -0.5.
pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::Precondition(format!(
            "rate fit needs >= 3 (T, value) pairs, have {}",
            pairs.len()
        )));
    }
    for &(t, v) in pairs {
        if !(t > 0.0 && v > 0.0 && t.is_finite() && v.is_finite()) {
            return Err(Error::Domain(format!(
                "rate fit needs positive finite pairs, got ({t}, {v})"
            )));
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, v)| v.ln()).collect();
    let n = pairs.len() as f64;
    let x_mean = kahan_sum(xs.iter().copied()) / n;
    let y_mean = kahan_sum(ys.iter().copied()) / n;
    let sxx = kahan_sum(xs.iter().map(|x| (x - x_mean) * (x - x_mean)));
    if sxx == 0.0 {
        return Err(Error::Domain(
            "rate fit needs at least two distinct T values".into(),
        ));
    }
    let sxy = kahan_sum(xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)));
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::StepSchedule;
    use crate::trace::RunStatus;

    fn quad_config(eta0: f64, horizon: usize) -> RunConfig {
        RunConfig::new(StepSchedule::new(ScheduleKind::Logarithmic, eta0, horizon).unwrap())
    }

    fn quad_traces(sigma: f64, config: &RunConfig, seeds: std::ops::Range<u64>) -> Vec<RunTrace> {
        let bundle = make_noisy_quadratic(6, 1.0, 4.0, sigma, 2).unwrap();
        seeds
            .map(|s| run(&bundle, config, s).unwrap().trace)
            .collect()
    }

    #[test]
    fn t_quantiles_match_reference_values() {
        // 97.5% Student-t quantiles from an external statistics oracle.
        assert!((t_quantile(0.95, 1.0) - 12.706204736432095).abs() < 1e-8);
        assert!((t_quantile(0.95, 4.0) - 2.7764451051977987).abs() < 1e-9);
    }

    #[test]
    fn identical_finals_have_zero_margin() {
        let config = quad_config(0.05, 20);
        let trace = quad_traces(0.0, &config, 0..1).pop().unwrap();
        let mut twin = trace.clone();
        twin.seed = 1; // same rows, different seed: zero variance
        let summaries = summarize(&[trace, twin]).unwrap();
        assert_eq!(summaries.len(), 1);
        let s = summaries[0].summary;
        assert_eq!(s.loss_margin95, 0.0);
        assert_eq!(s.metric_margin95, 0.0);
        assert_eq!(s.n_seeds, 2);
    }

    #[test]
    fn two_point_margin_matches_the_closed_form() {
        // finals {0.1, 0.3}: mean 0.2, margin t(.975, df=1) * sd/sqrt(2)
        // = 12.7062... * 0.1. Synthesize traces with those final losses.
        let config = quad_config(0.05, 10);
        let mut traces = quad_traces(0.0, &config, 0..2);
        traces[0].rows.last_mut().unwrap().train_loss = 0.1;
        traces[1].rows.last_mut().unwrap().train_loss = 0.3;
        let s = summarize(&traces).unwrap()[0].summary;
        assert!((s.mean_final_loss - 0.2).abs() < 1e-16);
        assert!(
            (s.loss_margin95 - 1.2706204736432094).abs() < 1e-8,
            "margin {}",
            s.loss_margin95
        );
    }

    #[test]
    fn summarize_is_permutation_invariant_bitwise() {
        let config = quad_config(0.08, 15);
        let traces = quad_traces(0.5, &config, 0..5);
        let forward = summarize(&traces).unwrap();
        let mut shuffled = traces.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let back = summarize(&shuffled).unwrap();
        assert_eq!(forward, back);
    }

    #[test]
    fn summarize_needs_two_completed_runs() {
        let config = quad_config(0.05, 10);
        let mut traces = quad_traces(0.3, &config, 0..2);
        traces[1].status = RunStatus::Diverged { at_global_epoch: 5 };
        match summarize(&traces) {
            Err(Error::Summary(msg)) => assert!(msg.contains(">= 2"), "{msg}"),
            other => panic!("expected summary error, got {other:?}"),
        }
        // Duplicate seeds are rejected too.
        let mut dup = quad_traces(0.3, &config, 0..2);
        dup[1].seed = 0;
        assert!(matches!(summarize(&dup), Err(Error::Summary(_))));
    }

    #[test]
    fn diverged_runs_are_excluded_and_listed() {
        let config = quad_config(0.05, 12);
        let mut traces = quad_traces(0.4, &config, 0..4);
        traces[3].status = RunStatus::Diverged { at_global_epoch: 9 };
        traces[3].rows.truncate(8);
        let finals: Vec<f64> = traces[..3]
            .iter()
            .map(|t| t.final_row().unwrap().train_loss)
            .collect();
        let summaries = summarize(&traces).unwrap();
        let s = &summaries[0];
        assert_eq!(s.diverged_seeds, vec![3]);
        assert_eq!(s.summary.n_seeds, 3);
        let mean = finals.iter().sum::<f64>() / 3.0;
        assert!((s.summary.mean_final_loss - mean).abs() < 1e-15);
    }

    #[test]
    fn five_seed_summary_matches_a_spreadsheet_recomputation() {
        // Dual path: read the finals back out of the CSV text and redo the
        // statistics with plain arithmetic and a frozen t quantile.
        let config = quad_config(0.06, 25);
        let traces = quad_traces(0.6, &config, 0..5);
        let s = summarize(&traces).unwrap()[0].summary;

        let mut finals = Vec::new();
        for trace in &traces {
            let text = trace.to_csv_string();
            let last = text.lines().last().unwrap();
            let fields: Vec<&str> = last.split(',').collect();
            finals.push(fields[5].parse::<f64>().unwrap());
        }
        let n = finals.len() as f64;
        let mean: f64 = finals.iter().sum::<f64>() / n;
        let sd = (finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let margin = 2.7764451051977987 * sd / n.sqrt();
        assert!((s.mean_final_loss - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((s.loss_margin95 - margin).abs() <= 1e-8 * margin.max(1e-30));
    }

    #[test]
    fn experiment_config_errors_name_the_field_and_line() {
        let bad = r#"{
  "name": "x",
  "problem": {"name": "noisy_quadratic", "dim": 4, "eigmin": 1.0, "eigmax": 4.0, "sigma": 0.5},
  "seeds": 2,
  "variants": [],
  "mystery": 1
}"#;
        match ExperimentConfig::from_json_str(bad) {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("mystery"), "{msg}");
                assert!(msg.contains("line"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }

        let syntactically_broken = "{ \"name\": ";
        match ExperimentConfig::from_json_str(syntactically_broken) {
            Err(Error::Config(msg)) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    fn small_experiment() -> ExperimentConfig {
        let sgd = Variant {
            label: "sgd+logarithmic".into(),
            run: quad_config(0.05, 12),
        };
        let mut adam_run = quad_config(0.01, 12);
        adam_run.method = Method::Adam;
        let adam = Variant {
            label: "adam".into(),
            run: adam_run,
        };
        ExperimentConfig {
            name: "smoke".into(),
            problem: ProblemConfig::NoisyQuadratic {
                dim: 4,
                eigmin: 1.0,
                eigmax: 4.0,
                sigma: 0.4,
                seed: 0,
            },
            seeds: 3,
            variants: vec![sgd, adam],
        }
    }

    #[test]
    fn experiment_validation_rejects_label_problems() {
        let mut config = small_experiment();
        config.variants[1].label = "sgd+logarithmic".into();
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let mut config = small_experiment();
        config.variants[0].label = "bad label!".into();
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let mut config = small_experiment();
        config.variants[0].run.mu = 2.0;
        match config.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("sgd+logarithmic"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn execute_writes_one_trace_per_variant_seed_and_reruns_identically() {
        let config = small_experiment();
        let dir_a = tempfile::tempdir().unwrap();
        let result = execute_experiment(&config, dir_a.path()).unwrap();
        assert_eq!(result.traces.len(), 6); // 2 variants x 3 seeds
        assert!(!result.any_diverged);
        assert_eq!(result.summaries.len(), 2);
        assert!(result.summaries.iter().all(|s| s.summary.is_some()));

        let mut csvs: Vec<PathBuf> = std::fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        csvs.sort();
        assert_eq!(csvs.len(), 6);
        assert!(dir_a.path().join("summary.json").is_file());
        assert!(dir_a.path().join("config.json").is_file());
        assert!(dir_a.path().join("adam_seed0.dat").is_file());

        // Rerun into a fresh directory: byte-identical artifacts.
        let dir_b = tempfile::tempdir().unwrap();
        execute_experiment(&config, dir_b.path()).unwrap();
        for path in &csvs {
            let name = path.file_name().unwrap();
            let a = std::fs::read(path).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between reruns");
        }
        let a = std::fs::read(dir_a.path().join("summary.json")).unwrap();
        let b = std::fs::read(dir_b.path().join("summary.json")).unwrap();
        assert_eq!(a, b);

        // Traces embed the experiment fingerprint and round-trip from disk.
        let loaded = read_traces_dir(dir_a.path()).unwrap();
        assert_eq!(loaded.len(), 6);
        assert!(loaded.iter().all(|t| t.fingerprint == result.fingerprint));
        let resummarized = summarize(&loaded).unwrap();
        assert_eq!(resummarized.len(), 2);
    }

    #[test]
    fn shipped_comparison_fixture_parses_and_validates() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs/fashion_mlp_comparison.json");
        let config = ExperimentConfig::from_json_file(&path).unwrap();
        assert_eq!(config.seeds, 5);
        assert!(config.problem.needs_data_dir());
        let logarithmic = config
            .variants
            .iter()
            .find(|v| v.run.schedule.kind == ScheduleKind::Logarithmic)
            .expect("fixture compares against the logarithmic schedule");
        assert_eq!(logarithmic.run.mu, 0.9);
    }

    #[test]
    fn problem_config_round_trips_and_builds() {
        let configs = vec![
            ProblemConfig::NoisyQuadratic {
                dim: 3,
                eigmin: 1.0,
                eigmax: 2.0,
                sigma: 0.1,
                seed: 7,
            },
            ProblemConfig::LogregSynth {
                n: 40,
                dim: 6,
                classes: 4,
                l2: 1e-3,
                val_n: None,
                batch_size: Some(8),
                seed: 1,
            },
        ];
        for (config, objective_name) in configs.iter().zip(["noisy_quadratic", "logreg"]) {
            let json = serde_json::to_string(config).unwrap();
            let back: ProblemConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(*config, back);
            let bundle = config.build().unwrap();
            assert_eq!(bundle.objective.name(), objective_name);
        }

        // Missing data dir on an IDX problem is a config error.
        let fashion = ProblemConfig::LogregFashion {
            data_dir: None,
            max_n: 100,
            l2: 1e-4,
            batch_size: None,
        };
        assert!(fashion.needs_data_dir());
        assert!(matches!(fashion.build(), Err(Error::Config(_))));
    }

    #[test]
    fn bound_report_gd_on_quadratic_is_satisfied_with_slack() {
        // sigma=0, one cycle: exact GD under the logarithmic schedule must
        // sit strictly inside the guarantee.
        let bundle = make_noisy_quadratic(6, 1.0, 4.0, 0.0, 2).unwrap();
        let config = quad_config(0.05, 100); // c = 1/(0.05*4) = 5
        let traces: Vec<RunTrace> = (0..2)
            .map(|s| run(&bundle, &config, s).unwrap().trace)
            .collect();
        let report = bound_report(&traces, &bundle, &config).unwrap();
        assert!(!report.advisory);
        assert_eq!(report.satisfied, Some(true));
        assert!((report.implied_c - 5.0).abs() < 1e-12);
        assert!(report.mean_slack > 1.0);
        for check in &report.per_seed {
            assert_eq!(check.satisfied, Some(true));
            assert!(check.slack > 1.0);
        }
    }

    #[test]
    fn bound_report_refuses_oversized_eta0_and_wrong_configs() {
        let bundle = make_noisy_quadratic(4, 1.0, 4.0, 0.0, 2).unwrap();
        let config = quad_config(0.05, 50);
        let traces: Vec<RunTrace> = vec![run(&bundle, &config, 0).unwrap().trace];

        // eta0 = 0.5 on L=4 gives c = 0.5 < 1: refused.
        let mut big = config.clone();
        big.schedule.eta0 = 0.5;
        let trace_big = run(&bundle, &big, 0).unwrap().trace;
        assert!(matches!(
            bound_report(&[trace_big], &bundle, &big),
            Err(Error::Precondition(_))
        ));

        let mut wrong_kind = config.clone();
        wrong_kind.schedule.kind = ScheduleKind::Constant;
        assert!(matches!(
            bound_report(&traces, &bundle, &wrong_kind),
            Err(Error::Precondition(_))
        ));

        let mut with_momentum = config.clone();
        with_momentum.mu = 0.9;
        assert!(matches!(
            bound_report(&traces, &bundle, &with_momentum),
            Err(Error::Precondition(_))
        ));

        let mut batched = config.clone();
        batched.batches_per_epoch = 4;
        assert!(matches!(
            bound_report(&traces, &bundle, &batched),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bound_report_goes_advisory_on_empirical_constants() {
        // Logistic regression declares L but only probes sigma, so the
        // report must not assert a hard boolean.
        let problem = ProblemConfig::LogregSynth {
            n: 60,
            dim: 5,
            classes: 3,
            l2: 1e-3,
            val_n: Some(0),
            batch_size: Some(60),
            seed: 3,
        };
        let bundle = problem.build().unwrap();
        let eta0 = 0.5 / bundle.smoothness().value();
        let config = quad_config(eta0, 40);
        let traces: Vec<RunTrace> = (0..2)
            .map(|s| run(&bundle, &config, s).unwrap().trace)
            .collect();
        let report = bound_report(&traces, &bundle, &config).unwrap();
        assert!(report.advisory);
        assert_eq!(report.satisfied, None);
        assert!(report.per_seed.iter().all(|c| c.satisfied.is_none()));
        assert!(report.mean_measured.is_finite() && report.mean_bound.is_finite());
    }

    #[test]
    fn bound_report_restarted_uses_best_cycle_and_worst_start() {
        let bundle = make_noisy_quadratic(5, 1.0, 4.0, 0.3, 9).unwrap();
        let mut config = quad_config(0.04, 40);
        config.restarts = 3;
        let trace = run(&bundle, &config, 1).unwrap().trace;
        let report = bound_report(std::slice::from_ref(&trace), &bundle, &config).unwrap();

        // Recompute by hand from the trace and the schedule distribution.
        let probs = OutputDistribution::from_schedule(&config.schedule).unwrap();
        let mut measures = Vec::new();
        let mut delta1s = Vec::new();
        for cycle in 0..3 {
            let rows = trace.cycle_rows(cycle);
            measures.push(kahan_sum(
                rows.iter()
                    .enumerate()
                    .map(|(i, r)| probs.prob(i + 1) * r.grad_norm_sq),
            ));
            delta1s.push(rows[0].train_loss);
        }
        let expected_measure = measures.iter().copied().fold(f64::INFINITY, f64::min);
        let expected_delta1_max = delta1s.iter().copied().fold(0.0f64, f64::max);
        let inputs = TheoremInputs {
            c: report.implied_c,
            big_l: 4.0,
            sigma: 0.3,
            delta1: delta1s[0],
            horizon: 40,
            cycles: 3,
            delta1_max: expected_delta1_max,
        };
        let expected_bound = corollary2_bound(&inputs).unwrap();
        let check = report.per_seed[0];
        assert_eq!(check.measured, expected_measure);
        assert_eq!(check.bound, expected_bound);
        assert_eq!(check.satisfied, Some(expected_measure <= expected_bound));
    }

    #[test]
    fn bound_report_rejects_diverged_traces() {
        let bundle = make_noisy_quadratic(3, 4.0, 4.0, 0.0, 0).unwrap();
        let config = quad_config(0.2, 30); // c = 1.25, but eta0*L = 0.8: fine
        let mut trace = run(&bundle, &config, 0).unwrap().trace;
        trace.status = RunStatus::Diverged { at_global_epoch: 7 };
        trace.rows.truncate(6);
        assert!(matches!(
            bound_report(&[trace], &bundle, &config),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn rate_fit_recovers_exact_power_laws() {
        let inv_sqrt: Vec<(f64, f64)> = [100.0, 1000.0, 10000.0]
            .iter()
            .map(|&t: &f64| (t, 3.7 / t.sqrt()))
            .collect();
        let slope = rate_fit(&inv_sqrt).unwrap();
        assert!((slope - (-0.5)).abs() < 1e-12, "slope {slope}");

        let constant: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 10000.0]
            .iter()
            .map(|&t| (t, 0.42))
            .collect();
        let slope = rate_fit(&constant).unwrap();
        assert!(slope.abs() < 1e-12, "slope {slope}");
    }

    #[test]
    fn rate_fit_input_errors() {
        assert!(matches!(
            rate_fit(&[(10.0, 1.0), (100.0, 0.5)]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            rate_fit(&[(10.0, 1.0), (100.0, 0.5), (1000.0, -0.1)]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            rate_fit(&[(10.0, 1.0), (10.0, 0.5), (10.0, 0.3)]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn data_dir_env_overrides_flag() {
        // Serialized env access: this test owns the variable.
        let key = DATA_DIR_ENV;
        let old = std::env::var_os(key);
        std::env::set_var(key, "/tmp/env-data");
        let got = resolve_data_dir(Some(PathBuf::from("/tmp/flag-data")));
        assert_eq!(got, Some(PathBuf::from("/tmp/env-data")));
        std::env::remove_var(key);
        let got = resolve_data_dir(Some(PathBuf::from("/tmp/flag-data")));
        assert_eq!(got, Some(PathBuf::from("/tmp/flag-data")));
        match old {
            Some(v) => std::env::set_var(key, v),
            None => std::env::remove_var(key),
        }
    }
}
