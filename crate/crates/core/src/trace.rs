//! Per-run training traces and their on-disk CSV form.
//!
//! One trace = one (config, seed) run. Rows are recorded once per epoch at
//! epoch start, so row `t` describes the iterate entering epoch `t`; with a
//! schedule that ends at zero the last row is also the post-training state.
//! The CSV layout is a short `# key: value` header followed by a fixed column
//! line and one row per epoch. Floats are written with 17 significant digits
//! so a write/read round trip is bitwise lossless.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::fmt_f64;

pub const CSV_COLUMNS: &str = "seed,global_epoch,cycle,t,eta,train_loss,grad_norm_sq,val_metric";

/// Epoch-start snapshot. `eta` is the step the epoch then ran with: the
/// scheduled value for sgd/adam, the mean accepted step for line-search runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub seed: u64,
    /// 1-based epoch counter across all cycles.
    pub global_epoch: usize,
    /// 0-based restart cycle.
    pub cycle: usize,
    /// 1-based epoch within the cycle.
    pub t: usize,
    pub eta: f64,
    pub train_loss: f64,
    pub grad_norm_sq: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Training hit a non-finite value (or crossed the loss ceiling) at this
    /// epoch; rows stop at the previous one.
    Diverged { at_global_epoch: usize },
}

impl RunStatus {
    pub fn is_completed(self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => write!(f, "completed"),
            RunStatus::Diverged { at_global_epoch } => write!(f, "diverged:{at_global_epoch}"),
        }
    }
}

impl std::str::FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "completed" {
            return Ok(RunStatus::Completed);
        }
        if let Some(epoch) = s.strip_prefix("diverged:") {
            let at = epoch
                .parse()
                .map_err(|_| format!("bad divergence epoch {epoch:?}"))?;
            return Ok(RunStatus::Diverged { at_global_epoch: at });
        }
        Err(format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Hash of the run configuration, for provenance.
    pub fingerprint: String,
    /// Human name of the variant that produced this trace, e.g. "sgd+logarithmic".
    pub label: String,
    pub seed: u64,
    pub status: RunStatus,
    /// Global epoch of the reported iterate, drawn from the step-weighted
    /// output distribution over the whole run. Absent on divergence.
    pub sampled_iterate: Option<usize>,
    /// Same draw done per cycle (global epoch indices), one per restart.
    pub cycle_draws: Vec<usize>,
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn final_row(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Rows belonging to one restart cycle. Rows are dense and sorted, so the
    /// cycle occupies a contiguous range.
    pub fn cycle_rows(&self, cycle: usize) -> &[TraceRow] {
        let lo = self.rows.partition_point(|r| r.cycle < cycle);
        let hi = self.rows.partition_point(|r| r.cycle <= cycle);
        &self.rows[lo..hi]
    }

    pub fn etas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eta).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# fingerprint: {}\n", self.fingerprint));
        out.push_str(&format!("# label: {}\n", self.label));
        out.push_str(&format!("# seed: {}\n", self.seed));
        out.push_str(&format!("# status: {}\n", self.status));
        if let Some(idx) = self.sampled_iterate {
            out.push_str(&format!("# sampled_iterate: {idx}\n"));
        }
        if !self.cycle_draws.is_empty() {
            let draws: Vec<String> = self.cycle_draws.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!("# cycle_draws: {}\n", draws.join(",")));
        }
        out.push_str(CSV_COLUMNS);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.seed,
                r.global_epoch,
                r.cycle,
                r.t,
                fmt_f64(r.eta),
                fmt_f64(r.train_loss),
                fmt_f64(r.grad_norm_sq),
                fmt_f64(r.val_metric),
            ));
        }
        out
    }

    pub fn from_csv_str(s: &str) -> Result<RunTrace> {
        let parse_err = |line: usize, msg: String| Error::TraceParse { line, msg };

        let mut fingerprint = None;
        let mut label = None;
        let mut seed = None;
        let mut status = None;
        let mut sampled_iterate = None;
        let mut cycle_draws = Vec::new();
        let mut rows = Vec::new();
        let mut saw_columns = false;

        for (i, raw) in s.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if saw_columns {
                    return Err(parse_err(lineno, "header line after data rows".into()));
                }
                let (key, value) = rest
                    .split_once(':')
                    .ok_or_else(|| parse_err(lineno, format!("malformed header {line:?}")))?;
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "fingerprint" => fingerprint = Some(value.to_string()),
                    "label" => label = Some(value.to_string()),
                    "seed" => {
                        seed = Some(value.parse::<u64>().map_err(|_| {
                            parse_err(lineno, format!("bad seed {value:?}"))
                        })?);
                    }
                    "status" => {
                        status = Some(
                            value
                                .parse::<RunStatus>()
                                .map_err(|msg| parse_err(lineno, msg))?,
                        );
                    }
                    "sampled_iterate" => {
                        sampled_iterate = Some(value.parse::<usize>().map_err(|_| {
                            parse_err(lineno, format!("bad sampled_iterate {value:?}"))
                        })?);
                    }
                    "cycle_draws" => {
                        for part in value.split(',') {
                            cycle_draws.push(part.trim().parse::<usize>().map_err(|_| {
                                parse_err(lineno, format!("bad cycle draw {part:?}"))
                            })?);
                        }
                    }
                    other => {
                        return Err(parse_err(lineno, format!("unknown header key {other:?}")));
                    }
                }
                continue;
            }
            if !saw_columns {
                if line != CSV_COLUMNS {
                    return Err(parse_err(
                        lineno,
                        format!("expected column line {CSV_COLUMNS:?}, found {line:?}"),
                    ));
                }
                saw_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(parse_err(
                    lineno,
                    format!("expected 8 fields, found {}", fields.len()),
                ));
            }
            let int = |idx: usize, name: &str| -> Result<usize> {
                fields[idx]
                    .parse::<usize>()
                    .map_err(|_| parse_err(lineno, format!("bad {name} {:?}", fields[idx])))
            };
            let float = |idx: usize, name: &str| -> Result<f64> {
                fields[idx]
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("bad {name} {:?}", fields[idx])))
            };
            rows.push(TraceRow {
                seed: fields[0]
                    .parse::<u64>()
                    .map_err(|_| parse_err(lineno, format!("bad seed {:?}", fields[0])))?,
                global_epoch: int(1, "global_epoch")?,
                cycle: int(2, "cycle")?,
                t: int(3, "t")?,
                eta: float(4, "eta")?,
                train_loss: float(5, "train_loss")?,
                grad_norm_sq: float(6, "grad_norm_sq")?,
                val_metric: float(7, "val_metric")?,
            });
        }

        if !saw_columns {
            return Err(parse_err(s.lines().count().max(1), "no column line found".into()));
        }
        Ok(RunTrace {
            fingerprint: fingerprint
                .ok_or_else(|| parse_err(1, "missing fingerprint header".into()))?,
            label: label.ok_or_else(|| parse_err(1, "missing label header".into()))?,
            seed: seed.ok_or_else(|| parse_err(1, "missing seed header".into()))?,
            status: status.ok_or_else(|| parse_err(1, "missing status header".into()))?,
            sampled_iterate,
            cycle_draws,
            rows,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<RunTrace> {
        let text = std::fs::read_to_string(path)?;
        RunTrace::from_csv_str(&text)
    }
}
