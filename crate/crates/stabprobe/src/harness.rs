//! Parallel Monte Carlo execution on a bounded rayon pool.
//!
//! Work items are `(cell, trial)` pairs. Results are collected in item
//! order, and each trial's randomness depends only on its coordinates, so
//! outputs do not depend on the worker count.

use std::time::Instant;

use rayon::prelude::*;
use stabprobe_core::experiment::{
    cells, run_trial, CellSummary, Experiment, ExperimentConfig, GridResult, TrialOutcome,
    TrialRecord,
};
use stabprobe_core::RngSeed;
use thiserror::Error;

pub const THREADS_ENV: &str = "STABPROBE_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{THREADS_ENV}: expected a non-negative integer, got `{0}`")]
    BadThreads(String),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("cell {cell}, trial {trial}: {source}")]
    Trial {
        cell: String,
        trial: usize,
        source: stabprobe_core::Error,
    },
    #[error(transparent)]
    Core(#[from] stabprobe_core::Error),
}

/// Worker count from `STABPROBE_THREADS`; unset or `0` means automatic.
pub fn threads_from_env() -> Result<usize, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| HarnessError::BadThreads(v)),
        _ => Ok(0),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

fn record(trial: usize, outcome: TrialOutcome, ms: f64) -> TrialRecord {
    TrialRecord {
        trial,
        probe: outcome.probe,
        api: outcome.api,
        ms,
    }
}

/// Runs `task` for trials `0..trials`; trial `i` receives stream `i` of
/// `base`.
pub fn monte_carlo<F>(
    trials: usize,
    base: u64,
    threads: usize,
    task: F,
) -> Result<(CellSummary, Vec<TrialRecord>), HarnessError>
where
    F: Fn(usize, RngSeed) -> stabprobe_core::Result<TrialOutcome> + Sync,
{
    let results: Vec<_> = pool(threads)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let (out, ms) = timed(|| task(i, RngSeed::new(base, i as u64)));
                out.map(|o| record(i, o, ms))
            })
            .collect()
    });
    let records = results
        .into_iter()
        .enumerate()
        .map(|(trial, r)| {
            r.map_err(|source| HarnessError::Trial {
                cell: "-".into(),
                trial,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = CellSummary::from_records(&records)?;
    Ok((summary, records))
}

/// Runs every cell and trial of `exp`.
pub fn run_experiment(
    exp: Experiment,
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<GridResult, HarnessError> {
    cfg.validate()?;
    let cells = cells(exp, cfg);
    let items: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();

    let results: Vec<_> = pool(threads)?.install(|| {
        items
            .par_iter()
            .map(|&(c, t)| {
                let (out, ms) = timed(|| run_trial(exp, cfg, &cells[c], t));
                out.map(|o| record(t, o, ms))
            })
            .collect()
    });

    let mut per_cell: Vec<Vec<TrialRecord>> = vec![Vec::with_capacity(cfg.trials); cells.len()];
    for ((c, t), r) in items.into_iter().zip(results) {
        let rec = r.map_err(|source| HarnessError::Trial {
            cell: cells[c].to_string(),
            trial: t,
            source,
        })?;
        per_cell[c].push(rec);
    }
    Ok(GridResult::assemble(exp, cfg, per_cell)?)
}
