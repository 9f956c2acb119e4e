//! Batch front-end of the simulator: configuration, execution and output
//! artifacts. The `star-sim` binary is a thin argument parser over this.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use star_sim_core::parallel::ExecMode;
use star_sim_core::scenarios::{run_power_min, run_se_max, run_sweep, RunReport};

use config::{ExperimentConfig, ObjectiveKind, Resolved};
pub use report::WriteOptions;

/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "STAR_SIM_THREADS";

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.to_string_lossy().into_owned();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Every trial failed; the artifacts are still written.
    AllInfeasible,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::AllInfeasible => 2,
        }
    }

    fn of<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> Self {
        let any = reports.into_iter().any(|r| r.aggregate.feasible > 0);
        if any {
            Outcome::Success
        } else {
            Outcome::AllInfeasible
        }
    }
}

/// Worker count from `STAR_SIM_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            Ok(Some(n))
        }
    }
}

fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        b = b.num_threads(n);
    }
    let pool = b.build().context("cannot start worker pool")?;
    Ok(pool.install(f))
}

fn run_once(r: &Resolved, sc: &star_sim_core::scenarios::NetworkScenario) -> star_sim_core::Result<RunReport> {
    match r.objective {
        ObjectiveKind::SumSe => run_se_max(sc, &r.solver, r.model, ExecMode::Parallel),
        ObjectiveKind::MinPower => run_power_min(sc, &r.solver, r.model, ExecMode::Parallel),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> &Path {
    Path::new(&cfg.out_dir)
}

fn log_report(label: &str, rep: &RunReport) {
    let a = &rep.aggregate;
    log::info!(
        "{label}: {}/{} feasible, mean SE {:.4} bit/s/Hz, mean power {:.3e} W, mean max violation {:.3e} deg",
        a.feasible,
        a.trials,
        a.se.mean,
        a.power_w.mean,
        a.max_violation.mean.to_degrees()
    );
    for t in rep.trials.iter().filter(|t| !t.feasible) {
        log::warn!(
            "trial {} (seed {}) failed: {}",
            t.trial,
            t.seed,
            t.error.as_deref().unwrap_or("unknown")
        );
    }
}

/// Runs the configured Monte-Carlo experiment and writes its artifacts.
pub fn run(cfg: &ExperimentConfig, opts: &WriteOptions) -> Result<(Outcome, Vec<PathBuf>)> {
    let r = cfg.resolve()?;
    let rep = in_pool(|| run_once(&r, &r.scenario))?.context("run failed")?;
    log_report(r.solver.name(), &rep);
    let files = report::write_run(out_dir(cfg), cfg, r.solver.name(), &rep, opts)?;
    Ok((Outcome::of([&rep]), files))
}

/// Runs the configured sweep and writes its artifacts.
pub fn sweep(cfg: &ExperimentConfig, opts: &WriteOptions) -> Result<(Outcome, Vec<PathBuf>)> {
    let r = cfg.resolve()?;
    let (axis, values) = r.sweep.clone().context("config has no `sweep` section")?;
    let rows = in_pool(|| run_sweep(&r.scenario, axis, &values, |sc| run_once(&r, sc)))?.context("sweep failed")?;
    for row in &rows {
        log_report(&format!("{} = {:e}", axis.name(), row.value), &row.report);
    }
    let files = report::write_sweep(out_dir(cfg), cfg, r.solver.name(), axis, &rows, opts)?;
    Ok((Outcome::of(rows.iter().map(|r| &r.report)), files))
}
