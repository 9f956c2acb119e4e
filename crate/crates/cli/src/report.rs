//! Output artifacts. Column order is fixed:
//!
//! * `trials.csv`: `trial,seed,feasible,se_bps_hz,power_w,power_dbm,max_violation_rad,iterations,wall_ms,error`
//! * `trace.csv`: `trial,outer,inner,objective,max_violation_rad`
//! * `sweep.csv`: `index,axis,value,trials,feasible,se_mean,se_std,power_w_mean,power_w_std,max_violation_mean,iterations_mean`
//!
//! Sweeps prefix `trials.csv` and `trace.csv` rows with the sweep `index`.
//! Missing values (failed trials) are empty cells.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use star_sim_core::scenarios::{Aggregate, MeanStd, RunReport, SweepAxis, SweepRow, TrialMetrics};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TRIALS_HEADER: [&str; 10] = [
    "trial",
    "seed",
    "feasible",
    "se_bps_hz",
    "power_w",
    "power_dbm",
    "max_violation_rad",
    "iterations",
    "wall_ms",
    "error",
];

pub const TRACE_HEADER: [&str; 5] = ["trial", "outer", "inner", "objective", "max_violation_rad"];

pub const SWEEP_HEADER: [&str; 11] = [
    "index",
    "axis",
    "value",
    "trials",
    "feasible",
    "se_mean",
    "se_std",
    "power_w_mean",
    "power_w_std",
    "max_violation_mean",
    "iterations_mean",
];

/// Options that shape what is written, not what is computed.
#[derive(Debug, Clone, Default)]
pub struct WriteOptions {
    pub trace: bool,
    /// Drop the timestamp and wall-clock columns so reruns are byte-identical.
    pub no_timestamp: bool,
}

fn cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        String::new()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Serialize)]
struct Stat {
    mean: Option<f64>,
    std: Option<f64>,
}

impl From<MeanStd> for Stat {
    fn from(m: MeanStd) -> Self {
        let opt = |x: f64| x.is_finite().then_some(x);
        Self {
            mean: opt(m.mean),
            std: opt(m.std),
        }
    }
}

#[derive(Serialize)]
struct AggregateOut {
    trials: usize,
    feasible: usize,
    feasibility_rate: f64,
    se_bps_hz: Stat,
    power_w: Stat,
    max_violation_rad: Stat,
    iterations: Stat,
    wall_ms: Stat,
}

fn aggregate_out(a: &Aggregate, opts: &WriteOptions) -> AggregateOut {
    let wall = if opts.no_timestamp {
        MeanStd { mean: 0.0, std: 0.0 }
    } else {
        a.wall_ms
    };
    AggregateOut {
        trials: a.trials,
        feasible: a.feasible,
        feasibility_rate: a.feasibility_rate,
        se_bps_hz: a.se.into(),
        power_w: a.power_w.into(),
        max_violation_rad: a.max_violation.into(),
        iterations: a.iterations.into(),
        wall_ms: wall.into(),
    }
}

#[derive(Serialize)]
struct SweepPointOut {
    index: usize,
    value: f64,
    aggregate: AggregateOut,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    version: &'static str,
    /// Seconds since the Unix epoch; null under `--no-timestamp`.
    generated_at_unix: Option<u64>,
    seed: u64,
    solver: &'a str,
    /// The experiment config without its output path, which does not
    /// affect results.
    config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    aggregate: Option<AggregateOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_axis: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Vec<SweepPointOut>>,
}

fn echo(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serialises");
    if let Some(m) = v.as_object_mut() {
        m.remove("out_dir");
    }
    v
}

fn timestamp(opts: &WriteOptions) -> Option<u64> {
    if opts.no_timestamp {
        return None;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serialising summary")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

fn trial_record(t: &TrialMetrics, opts: &WriteOptions) -> Vec<String> {
    vec![
        t.trial.to_string(),
        t.seed.to_string(),
        t.feasible.to_string(),
        cell(t.se),
        cell(t.power_w),
        cell(if t.feasible { t.power_dbm() } else { f64::NAN }),
        cell(t.max_violation),
        t.iterations.to_string(),
        cell(if opts.no_timestamp { 0.0 } else { t.wall_ms }),
        t.error.clone().unwrap_or_default(),
    ]
}

fn write_trials<'a>(
    path: &Path,
    prefix: Option<&str>,
    reports: impl Iterator<Item = (usize, &'a RunReport)>,
    opts: &WriteOptions,
) -> Result<()> {
    let ctx = || format!("cannot write {}", path.display());
    let mut w = csv_writer(path)?;
    let header: Vec<&str> = prefix.into_iter().chain(TRIALS_HEADER).collect();
    w.write_record(&header).with_context(ctx)?;
    for (index, r) in reports {
        for t in &r.trials {
            let mut rec = trial_record(t, opts);
            if prefix.is_some() {
                rec.insert(0, index.to_string());
            }
            w.write_record(&rec).with_context(ctx)?;
        }
    }
    w.flush().with_context(ctx)
}

fn write_trace<'a>(
    path: &Path,
    prefix: Option<&str>,
    reports: impl Iterator<Item = (usize, &'a RunReport)>,
) -> Result<()> {
    let ctx = || format!("cannot write {}", path.display());
    let mut w = csv_writer(path)?;
    let header: Vec<&str> = prefix.into_iter().chain(TRACE_HEADER).collect();
    w.write_record(&header).with_context(ctx)?;
    for (index, r) in reports {
        for (t, rows) in r.trials.iter().zip(&r.traces) {
            for row in rows {
                let mut rec = vec![
                    t.trial.to_string(),
                    row.outer.to_string(),
                    row.inner.to_string(),
                    cell(row.objective),
                    cell(row.max_violation),
                ];
                if prefix.is_some() {
                    rec.insert(0, index.to_string());
                }
                w.write_record(&rec).with_context(ctx)?;
            }
        }
    }
    w.flush().with_context(ctx)
}

/// Writes the artifacts of a single run into `dir`.
pub fn write_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    solver: &str,
    report: &RunReport,
    opts: &WriteOptions,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        version: VERSION,
        generated_at_unix: timestamp(opts),
        seed: cfg.seed,
        solver,
        config: echo(cfg),
        aggregate: Some(aggregate_out(&report.aggregate, opts)),
        sweep_axis: None,
        sweep: None,
    };
    let mut written = vec![dir.join("summary.json"), dir.join("trials.csv")];
    write_json(&written[0], &summary)?;
    write_trials(&written[1], None, std::iter::once((0, report)), opts)?;
    if opts.trace {
        let p = dir.join("trace.csv");
        write_trace(&p, None, std::iter::once((0, report)))?;
        written.push(p);
    }
    Ok(written)
}

/// Writes the artifacts of a sweep into `dir`.
pub fn write_sweep(
    dir: &Path,
    cfg: &ExperimentConfig,
    solver: &str,
    axis: SweepAxis,
    rows: &[SweepRow],
    opts: &WriteOptions,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let points = rows
        .iter()
        .enumerate()
        .map(|(index, r)| SweepPointOut {
            index,
            value: r.value,
            aggregate: aggregate_out(&r.report.aggregate, opts),
        })
        .collect();
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        version: VERSION,
        generated_at_unix: timestamp(opts),
        seed: cfg.seed,
        solver,
        config: echo(cfg),
        aggregate: None,
        sweep_axis: Some(axis.name()),
        sweep: Some(points),
    };
    let mut written = vec![dir.join("summary.json"), dir.join("trials.csv"), dir.join("sweep.csv")];
    write_json(&written[0], &summary)?;
    let reports = || rows.iter().enumerate().map(|(i, r)| (i, &r.report));
    write_trials(&written[1], Some("index"), reports(), opts)?;

    let ctx = || format!("cannot write {}", written[2].display());
    let mut w = csv_writer(&written[2])?;
    w.write_record(SWEEP_HEADER).with_context(ctx)?;
    for (i, r) in rows.iter().enumerate() {
        let a = &r.report.aggregate;
        w.write_record([
            i.to_string(),
            axis.name().to_string(),
            cell(r.value),
            a.trials.to_string(),
            a.feasible.to_string(),
            cell(a.se.mean),
            cell(a.se.std),
            cell(a.power_w.mean),
            cell(a.power_w.std),
            cell(a.max_violation.mean),
            cell(a.iterations.mean),
        ])
        .with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;

    if opts.trace {
        let p = dir.join("trace.csv");
        write_trace(&p, Some("index"), reports())?;
        written.push(p);
    }
    Ok(written)
}
