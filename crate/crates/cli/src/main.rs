//! logstep: step-size schedules, convergence-bound checks, and multi-seed
//! training runs from the command line.
//!
//! Exit codes: 0 success, 2 bad configuration or input, 3 at least one run
//! diverged (and nothing worse happened), 4 a strict bound check failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use logstep::bounds::{
    corollary1_bound, corollary2_bound, theorem1_bound, verify_sum_bounds, TheoremInputs,
};
use logstep::harness::{
    bound_report, execute_experiment, read_traces_dir, resolve_data_dir, summarize_lenient,
    ExperimentConfig, LabelSummary, ProblemConfig, Variant,
};
use logstep::numerics::fmt_f64;
use logstep::optimizer::{grid_search, GridPoint, Method, RunConfig, COARSE_GRID};
use logstep::sampling::OutputDistribution;
use logstep::schedules::{ScheduleKind, StepSchedule};
use logstep::trace::RunTrace;
use logstep::{Error, Result};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_BOUND: u8 = 4;

#[derive(Parser)]
#[command(
    name = "logstep",
    version,
    about = "Step-size schedules with provable guarantees: dump tables, verify bounds, train, compare"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect step-size schedules.
    #[command(subcommand)]
    Schedules(SchedulesCmd),
    /// Compare iterate-output distributions across schedules.
    #[command(subcommand)]
    Dist(DistCmd),
    /// Verify step-sum bounds and evaluate the closed-form guarantees.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Train on a named problem; one trace CSV per (variant, seed).
    Run(RunArgs),
    /// Two-stage step-size grid search on a named problem.
    Grid(GridArgs),
    /// Summarize a directory of trace CSVs.
    Report(ReportArgs),
}

/// Schedule parameters shared by the table-producing commands.
#[derive(Args, Clone)]
struct ScheduleArgs {
    /// One of: constant, inv_t, inv_sqrt_t, exponential, stagewise,
    /// cosine, logarithmic (plateau is metric-driven and has no table).
    #[arg(long)]
    kind: ScheduleKind,
    #[arg(long)]
    eta0: f64,
    /// Epochs per cycle.
    #[arg(long = "T")]
    horizon: usize,
    /// Decay factor (inv_t, inv_sqrt_t) or stage reduction (stagewise).
    #[arg(long)]
    alpha: Option<f64>,
    /// Terminal ratio eta_T/eta0 for the exponential schedule.
    #[arg(long)]
    beta: Option<f64>,
    /// Stagewise switch epochs, comma separated, strictly inside (1, T).
    #[arg(long, value_delimiter = ',')]
    milestones: Option<Vec<usize>>,
}

fn build_schedule(
    kind: ScheduleKind,
    eta0: f64,
    horizon: usize,
    alpha: Option<f64>,
    beta: Option<f64>,
    milestones: Option<&Vec<usize>>,
) -> Result<StepSchedule> {
    let mut schedule = StepSchedule::new(kind, eta0, horizon)?;
    if let Some(a) = alpha {
        schedule.alpha = a;
    }
    if let Some(b) = beta {
        schedule.beta = b;
    }
    if let Some(m) = milestones {
        schedule.milestones = m.clone();
    }
    schedule.validate()?;
    Ok(schedule)
}

impl ScheduleArgs {
    fn build(&self) -> Result<StepSchedule> {
        build_schedule(
            self.kind,
            self.eta0,
            self.horizon,
            self.alpha,
            self.beta,
            self.milestones.as_ref(),
        )
    }
}

#[derive(Subcommand)]
enum SchedulesCmd {
    /// Write per-epoch step sizes as CSV (global_epoch,cycle,t,eta).
    Dump(DumpArgs),
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Warm-restart cycles; the table repeats once per cycle.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DistCmd {
    /// Tabulate P[output = x_t] for several schedules side by side.
    Compare(CompareArgs),
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated schedule kinds, e.g. logarithmic,cosine.
    #[arg(long, value_delimiter = ',', required = true)]
    kinds: Vec<ScheduleKind>,
    /// Initial step. The normalized probabilities do not depend on it.
    #[arg(long, default_value_t = 1.0)]
    eta0: f64,
    #[arg(long = "T")]
    horizon: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// Check the step-sum lower/upper bounds over a list of horizons.
    Verify(VerifyArgs),
    /// Evaluate one closed-form bound from JSON parameters.
    Eval(EvalArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// The sum bounds scale by eta0 (linearly) and eta0^2; 1 is canonical.
    #[arg(long, default_value_t = 1.0)]
    eta0: f64,
    /// Comma-separated horizons, e.g. 2,10,100,1000.
    #[arg(long = "T-list", value_delimiter = ',', required = true)]
    t_list: Vec<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum WhichBound {
    /// Single-run guarantee; params {c, big_l, sigma, delta1, horizon}.
    Theorem1,
    /// Horizon-tuned c; params {big_l, sigma, delta1, horizon}, sigma > 0.
    Cor1,
    /// Warm restarts; adds {cycles, delta1_max} to the theorem1 params.
    Cor2,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    which: WhichBound,
    /// JSON object with the bound's parameters; omit (or pass "-") to read
    /// it from stdin.
    #[arg(long)]
    params: Option<String>,
}

impl EvalArgs {
    fn params_json(&self) -> Result<String> {
        match self.params.as_deref() {
            Some("-") | None => {
                let mut buf = String::new();
                std::io::Read::read_to_string(&mut std::io::stdin(), &mut buf)?;
                Ok(buf)
            }
            Some(inline) => Ok(inline.to_string()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; replaces the problem and method flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of: noisy_quadratic, quad_cosine, logreg_synth, mlp_synth,
    /// logreg_fashion, mlp_fashion.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    problem: Option<String>,
    #[arg(long, default_value_t = Method::Sgd, conflicts_with = "config")]
    method: Method,
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    kind: Option<ScheduleKind>,
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    eta0: Option<f64>,
    /// Epochs per cycle.
    #[arg(long = "T", required_unless_present = "config", conflicts_with = "config")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 1, conflicts_with = "config")]
    restarts: usize,
    /// Stochastic steps per epoch; defaults to one full sweep on
    /// minibatch problems and 1 elsewhere.
    #[arg(long, conflicts_with = "config")]
    batches: Option<usize>,
    /// Nesterov momentum (sgd only).
    #[arg(long, default_value_t = 0.0, conflicts_with = "config")]
    mu: f64,
    /// Zero momentum buffers at each warm restart instead of carrying.
    #[arg(long, conflicts_with = "config")]
    reset_momentum: bool,
    /// Seeds 0..N, one run each.
    #[arg(long, default_value_t = 5, conflicts_with = "config")]
    seeds: u64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    milestones: Option<Vec<usize>>,
    /// Directory holding the IDX image/label files (fashion problems).
    /// The LOGSTEP_DATA_DIR environment variable overrides this.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Cap on loaded samples for the IDX problems.
    #[arg(long, default_value_t = 2000, conflicts_with = "config")]
    max_n: usize,
    /// Output directory for trace CSVs, config.json, and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Same names as `run --problem`.
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = Method::Sgd)]
    method: Method,
    #[arg(long)]
    kind: ScheduleKind,
    #[arg(long = "T")]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Coarse-stage step sizes; defaults to the built-in grid.
    #[arg(long, value_delimiter = ',')]
    coarse: Option<Vec<f64>>,
    /// Half-width of the fine scan around the coarse winner (0 = skip).
    #[arg(long, default_value_t = 0.0)]
    fine_radius: f64,
    /// Spacing of the fine scan.
    #[arg(long, default_value_t = 0.0)]
    fine_step: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    milestones: Option<Vec<usize>>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    max_n: usize,
    /// Write the ranked JSON table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of trace CSVs produced by `run`.
    in_dir: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Recheck eligible variants against the proved bound using the
    /// directory's config.json; a hard violation exits 4.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Schedules(SchedulesCmd::Dump(args)) => cmd_schedules_dump(&args),
        Command::Dist(DistCmd::Compare(args)) => cmd_dist_compare(&args),
        Command::Bounds(BoundsCmd::Verify(args)) => cmd_bounds_verify(&args),
        Command::Bounds(BoundsCmd::Eval(args)) => cmd_bounds_eval(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Grid(args) => cmd_grid(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn cmd_schedules_dump(args: &DumpArgs) -> Result<u8> {
    if args.schedule.kind == ScheduleKind::Plateau {
        return Err(Error::Config(
            "plateau reacts to training metrics and has no precomputable table; drive it with `run`"
                .into(),
        ));
    }
    if args.restarts == 0 {
        return Err(Error::Config("restarts must be >= 1".into()));
    }
    let schedule = args.schedule.build()?;
    let table = schedule.table()?;
    let mut out = String::from("global_epoch,cycle,t,eta\n");
    for cycle in 0..args.restarts {
        for (i, eta) in table.iter().enumerate() {
            let t = i + 1;
            out.push_str(&format!(
                "{},{},{},{}\n",
                cycle * schedule.horizon + t,
                cycle,
                t,
                fmt_f64(*eta)
            ));
        }
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, out)?;
            println!(
                "wrote {} epochs ({} cycles of {}) to {}",
                args.restarts * schedule.horizon,
                args.restarts,
                schedule.horizon,
                path.display()
            );
        }
        None => print!("{out}"),
    }
    Ok(EXIT_OK)
}

fn cmd_dist_compare(args: &CompareArgs) -> Result<u8> {
    if args.kinds.is_empty() {
        return Err(Error::Config("need at least one schedule kind".into()));
    }
    let mut dists = Vec::with_capacity(args.kinds.len());
    let mut header = String::from("t");
    for kind in &args.kinds {
        if *kind == ScheduleKind::Plateau {
            return Err(Error::Config(
                "plateau has no static step table to compare".into(),
            ));
        }
        let schedule = StepSchedule::new(*kind, args.eta0, args.horizon)?;
        dists.push(OutputDistribution::from_schedule(&schedule)?);
        header.push_str(&format!(",p_{kind}"));
    }
    let mut out = header;
    out.push('\n');
    for t in 1..=args.horizon {
        out.push_str(&t.to_string());
        for dist in &dists {
            out.push(',');
            out.push_str(&fmt_f64(dist.prob(t)));
        }
        out.push('\n');
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, out)?;
            println!(
                "wrote {} rows x {} schedules to {}",
                args.horizon,
                dists.len(),
                path.display()
            );
        }
        None => print!("{out}"),
    }
    Ok(EXIT_OK)
}

fn cmd_bounds_verify(args: &VerifyArgs) -> Result<u8> {
    let mut reports = Vec::with_capacity(args.t_list.len());
    for &horizon in &args.t_list {
        reports.push(verify_sum_bounds(args.eta0, horizon)?);
    }
    let json = format!("{}\n", serde_json::to_string_pretty(&reports)?);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)?;
            let all_hold = reports.iter().all(|r| r.lower_holds && r.upper_holds);
            println!(
                "checked {} horizons, all bounds hold: {all_hold}; report at {}",
                reports.len(),
                path.display()
            );
        }
        None => print!("{json}"),
    }
    Ok(EXIT_OK)
}

fn json_field(value: &serde_json::Value, key: &str) -> Result<f64> {
    value
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::Config(format!("params missing numeric field {key:?}")))
}

fn cmd_bounds_eval(args: &EvalArgs) -> Result<u8> {
    let params = args.params_json()?;
    let doc = match args.which {
        WhichBound::Theorem1 | WhichBound::Cor2 => {
            let inputs: TheoremInputs = serde_json::from_str(&params)
                .map_err(|e| Error::Config(format!("params: {e}")))?;
            match args.which {
                WhichBound::Theorem1 => {
                    serde_json::json!({ "which": "theorem1", "bound": theorem1_bound(&inputs)? })
                }
                _ => serde_json::json!({ "which": "cor2", "bound": corollary2_bound(&inputs)? }),
            }
        }
        WhichBound::Cor1 => {
            let value: serde_json::Value = serde_json::from_str(&params)
                .map_err(|e| Error::Config(format!("params: {e}")))?;
            let horizon = json_field(&value, "horizon")?;
            if horizon.fract() != 0.0 || horizon < 0.0 {
                return Err(Error::Config(format!(
                    "horizon {horizon} must be a nonnegative integer"
                )));
            }
            let (bound, implied_c) = corollary1_bound(
                json_field(&value, "big_l")?,
                json_field(&value, "sigma")?,
                json_field(&value, "delta1")?,
                horizon as usize,
            )?;
            serde_json::json!({ "which": "cor1", "bound": bound, "implied_c": implied_c })
        }
    };
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(EXIT_OK)
}

/// Desk-scale defaults for the named problems.
fn problem_from_flags(
    name: &str,
    max_n: usize,
    data_dir: Option<PathBuf>,
) -> Result<ProblemConfig> {
    let resolved = resolve_data_dir(data_dir);
    let config = match name {
        "noisy_quadratic" => ProblemConfig::NoisyQuadratic {
            dim: 10,
            eigmin: 1.0,
            eigmax: 10.0,
            sigma: 1.0,
            seed: 0,
        },
        "quad_cosine" => ProblemConfig::QuadCosine {
            dim: 10,
            a: 1.0,
            b: 1.0,
            sigma: 1.0,
            seed: 0,
        },
        "logreg_synth" => ProblemConfig::LogregSynth {
            n: 2000,
            dim: 20,
            classes: 10,
            l2: 1e-4,
            val_n: None,
            batch_size: None,
            seed: 0,
        },
        "mlp_synth" => ProblemConfig::MlpSynth {
            n: 2000,
            dim: 20,
            classes: 10,
            hidden: 64,
            l2: 1e-4,
            val_n: None,
            batch_size: None,
            seed: 0,
        },
        "logreg_fashion" => ProblemConfig::LogregFashion {
            data_dir: resolved,
            max_n,
            l2: 1e-4,
            batch_size: None,
        },
        "mlp_fashion" => ProblemConfig::MlpFashion {
            data_dir: resolved,
            max_n,
            hidden: 64,
            l2: 1e-4,
            batch_size: None,
            seed: 0,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown problem {other:?}; expected noisy_quadratic, quad_cosine, \
                 logreg_synth, mlp_synth, logreg_fashion, or mlp_fashion"
            )))
        }
    };
    Ok(config)
}

fn experiment_from_flags(args: &RunArgs) -> Result<ExperimentConfig> {
    let name = args.problem.as_deref().expect("clap enforces --problem");
    let problem = problem_from_flags(name, args.max_n, args.data_dir.clone())?;
    let schedule = build_schedule(
        args.kind.expect("clap enforces --kind"),
        args.eta0.expect("clap enforces --eta0"),
        args.horizon.expect("clap enforces --T"),
        args.alpha,
        args.beta,
        args.milestones.as_ref(),
    )?;
    let mut run_config = RunConfig::new(schedule);
    run_config.method = args.method;
    run_config.restarts = args.restarts;
    run_config.mu = args.mu;
    run_config.reset_momentum = args.reset_momentum;
    run_config.batches_per_epoch = match args.batches {
        Some(b) => b,
        // One full sweep per epoch; needs the built problem to know n/B.
        None => problem.build()?.default_batches_per_epoch(),
    };
    let label = run_config.label();
    Ok(ExperimentConfig {
        name: format!("{name}_{label}"),
        problem,
        seeds: args.seeds,
        variants: vec![Variant {
            label,
            run: run_config,
        }],
    })
}

fn print_label_summaries(summaries: &[LabelSummary]) {
    println!(
        "{:<24} {:>2}  {:<26} {:<26}",
        "label", "n", "final_train_loss", "final_val_metric"
    );
    for s in summaries {
        match &s.summary {
            Some(r) => println!(
                "{:<24} {:>2}  {:<26} {:<26}",
                s.label,
                r.n_seeds,
                format!("{:.6e} +- {:.2e}", r.mean_final_loss, r.loss_margin95),
                format!("{:.6e} +- {:.2e}", r.mean_final_metric, r.metric_margin95),
            ),
            None => println!(
                "{:<24} --  {}",
                s.label,
                s.note.as_deref().unwrap_or("no summary")
            ),
        }
        if !s.diverged_seeds.is_empty() {
            println!("  diverged seeds: {:?}", s.diverged_seeds);
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<u8> {
    let config = match &args.config {
        Some(path) => {
            let mut config = ExperimentConfig::from_json_file(path)?;
            if let Some(dir) = resolve_data_dir(args.data_dir.clone()) {
                config.problem.set_data_dir(dir);
            }
            config
        }
        None => experiment_from_flags(args)?,
    };
    let result = execute_experiment(&config, &args.out)?;
    println!(
        "experiment {} ({} traces) -> {}",
        config.name,
        result.traces.len(),
        result.out_dir.display()
    );
    print_label_summaries(&result.summaries);
    Ok(if result.any_diverged {
        eprintln!("warning: at least one run diverged");
        EXIT_DIVERGED
    } else {
        EXIT_OK
    })
}

fn cmd_grid(args: &GridArgs) -> Result<u8> {
    let problem = problem_from_flags(&args.problem, args.max_n, args.data_dir.clone())?;
    let bundle = problem.build()?;
    // eta0 here is a placeholder; the search overwrites it per grid point.
    let schedule = build_schedule(
        args.kind,
        1.0,
        args.horizon,
        args.alpha,
        args.beta,
        args.milestones.as_ref(),
    )?;
    let mut template = RunConfig::new(schedule);
    template.method = args.method;
    template.restarts = args.restarts;
    template.mu = args.mu;
    template.batches_per_epoch = args
        .batches
        .unwrap_or_else(|| bundle.default_batches_per_epoch());
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let coarse: Vec<f64> = match &args.coarse {
        Some(list) => list.clone(),
        None => COARSE_GRID.to_vec(),
    };
    let outcome = grid_search(
        &bundle,
        &template,
        &seeds,
        &coarse,
        args.fine_radius,
        args.fine_step,
    )?;

    let mut ranked: Vec<&GridPoint> = outcome.points.iter().collect();
    ranked.sort_by(|a, b| match (a.mean_val_loss, b.mean_val_loss) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.eta0.total_cmp(&b.eta0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.eta0.total_cmp(&b.eta0),
    });
    let doc = serde_json::json!({
        "problem": problem.problem_name(),
        "best_eta0": outcome.best_eta0,
        "best_mean_val_loss": outcome.best_mean_val_loss,
        "ranked": ranked,
    });
    let json = format!("{}\n", serde_json::to_string_pretty(&doc)?);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)?;
            println!(
                "best eta0 = {} (mean val loss {:.6e}); table at {}",
                outcome.best_eta0,
                outcome.best_mean_val_loss,
                path.display()
            );
        }
        None => print!("{json}"),
    }
    Ok(EXIT_OK)
}

fn strict_bound_checks(
    args: &ReportArgs,
    traces: &[RunTrace],
) -> Result<bool> {
    let config_path = args.in_dir.join("config.json");
    if !config_path.is_file() {
        return Err(Error::Config(format!(
            "--strict needs {} (written by `run`)",
            config_path.display()
        )));
    }
    let mut config = ExperimentConfig::from_json_file(&config_path)?;
    if let Some(dir) = resolve_data_dir(args.data_dir.clone()) {
        config.problem.set_data_dir(dir);
    }
    let bundle = config.problem.build()?;
    let mut violated = false;
    for variant in &config.variants {
        let group: Vec<RunTrace> = traces
            .iter()
            .filter(|t| t.label == variant.label && t.status.is_completed())
            .cloned()
            .collect();
        if group.is_empty() {
            println!("bound[{}]: no completed traces, skipped", variant.label);
            continue;
        }
        match bound_report(&group, &bundle, &variant.run) {
            Ok(report) => {
                let verdict = match report.satisfied {
                    Some(true) => "satisfied",
                    Some(false) => {
                        violated = true;
                        "VIOLATED"
                    }
                    None => "advisory (empirical constants)",
                };
                println!(
                    "bound[{}]: measured {:.6e} vs bound {:.6e} (slack {:.2}x, c = {:.3}) -> {verdict}",
                    variant.label,
                    report.mean_measured,
                    report.mean_bound,
                    report.mean_slack,
                    report.implied_c,
                );
            }
            Err(Error::Precondition(msg)) => {
                println!("bound[{}]: not covered ({msg})", variant.label);
            }
            Err(other) => return Err(other),
        }
    }
    Ok(violated)
}

fn cmd_report(args: &ReportArgs) -> Result<u8> {
    let traces = read_traces_dir(&args.in_dir)?;
    let summaries = summarize_lenient(&traces, args.confidence)?;
    print_label_summaries(&summaries);
    let any_diverged = traces.iter().any(|t| !t.status.is_completed());
    let mut code = if any_diverged { EXIT_DIVERGED } else { EXIT_OK };
    if args.strict && strict_bound_checks(args, &traces)? {
        code = EXIT_BOUND;
    }
    Ok(code)
}
