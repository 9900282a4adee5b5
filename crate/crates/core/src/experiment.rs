//! Monte Carlo experiment definitions: configuration, grid cells, the
//! per-trial computation, and aggregation into grid results.
//!
//! Scheduling is left to the caller. Every trial is a pure function of
//! `(config, cell, trial index)`, so any execution order gives the same
//! records.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // float methods come from `Float` without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::skew_basis;
use crate::probe::{ar1_population_set, probe, FamilySpec, JacobianMode, ObservationEvaluator};
use crate::separation::{amari_index, jade_separate, sobi_separate};
use crate::signal::{
    generate_sources, gg_excess_kurtosis, mix, random_orthogonal, RngSeed, SignalBlock, SourceSpec,
};
use crate::stats::{fit_whitener, CumulantTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Full,
    Quick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sample,
    Population,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Samples per trial.
    pub t: usize,
    pub trials: usize,
    pub seed: u64,
    pub p_grid: Vec<f64>,
    pub l_grid: Vec<usize>,
    /// AR(1) coefficients, one per channel.
    pub ar: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub epsilon: f64,
    pub delta: f64,
    pub fd_step: f64,
    pub symmetrize: bool,
    pub report_api: bool,
    pub mode: Mode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 3,
            t: 100_000,
            trials: 50,
            seed: 0,
            p_grid: alloc::vec![0.8, 1.0, 1.5, 2.0, 3.0],
            l_grid: (1..=7).collect(),
            ar: alloc::vec![0.2, 0.6, 0.9],
            k_grid: (1..=6).collect(),
            epsilon: 0.5,
            delta: 0.05,
            fd_step: crate::probe::DEFAULT_FD_STEP,
            symmetrize: true,
            report_api: true,
            mode: Mode::Sample,
        }
    }
}

impl ExperimentConfig {
    pub const QUICK_T: usize = 20_000;
    pub const QUICK_TRIALS: usize = 20;

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Full => {
                self.t = 100_000;
                self.trials = 50;
            }
            Preset::Quick => {
                self.t = Self::QUICK_T;
                self.trials = Self::QUICK_TRIALS;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if self.n < 2 {
            return bad("n", "need at least two channels");
        }
        if self.t < 2 {
            return bad("T", "need at least two samples");
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.p_grid.is_empty() || self.l_grid.is_empty() || self.k_grid.is_empty() {
            return bad("grid", "grids must be non-empty");
        }
        if self.p_grid.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return bad("p", "shape must be positive and finite");
        }
        if self.l_grid.contains(&0) {
            return bad("L", "lag counts start at 1");
        }
        let max_k = self.n * (self.n + 1) / 2;
        if self.k_grid.iter().any(|&k| k == 0 || k > max_k) {
            return bad("K", "must lie in 1..=n(n+1)/2");
        }
        if self.ar.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: self.ar.len(),
            });
        }
        if self.ar.iter().any(|a| a.is_nan() || a.abs() >= 1.0) {
            return bad("a", "AR coefficients must satisfy |a| < 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be positive");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta", "must be non-negative");
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad("h", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Cumulant probe across source shapes.
    Hos,
    /// Lagged-covariance probe across lag counts.
    Sos,
    /// Lagged-covariance probe over (shape, lag count).
    TradeoffSos,
    /// Truncated cumulant probe over (shape, matrix count).
    TradeoffHos,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Self::Hos, Self::Sos, Self::TradeoffSos, Self::TradeoffHos];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hos => "hos",
            Self::Sos => "sos",
            Self::TradeoffSos => "tradeoff-sos",
            Self::TradeoffHos => "tradeoff-hos",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn is_tradeoff(self) -> bool {
        matches!(self, Self::TradeoffSos | Self::TradeoffHos)
    }
}

/// Grid coordinates of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    P(f64),
    L(usize),
    PL(f64, usize),
    PK(f64, usize),
}

impl Cell {
    pub fn p(&self) -> Option<f64> {
        match *self {
            Self::P(p) | Self::PL(p, _) | Self::PK(p, _) => Some(p),
            Self::L(_) => None,
        }
    }

    /// The lag count or matrix count, if the cell has one.
    pub fn count(&self) -> Option<usize> {
        match *self {
            Self::L(l) | Self::PL(_, l) | Self::PK(_, l) => Some(l),
            Self::P(_) => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::P(p) => write!(f, "{p}"),
            Self::L(l) => write!(f, "{l}"),
            Self::PL(p, l) | Self::PK(p, l) => write!(f, "{p};{l}"),
        }
    }
}

/// Cells in output order: rows over `p`, then the inner grid.
pub fn cells(exp: Experiment, cfg: &ExperimentConfig) -> Vec<Cell> {
    match exp {
        Experiment::Hos => cfg.p_grid.iter().map(|&p| Cell::P(p)).collect(),
        Experiment::Sos => cfg.l_grid.iter().map(|&l| Cell::L(l)).collect(),
        Experiment::TradeoffSos => cfg
            .p_grid
            .iter()
            .flat_map(|&p| cfg.l_grid.iter().map(move |&l| Cell::PL(p, l)))
            .collect(),
        Experiment::TradeoffHos => cfg
            .p_grid
            .iter()
            .flat_map(|&p| cfg.k_grid.iter().map(move |&k| Cell::PK(p, k)))
            .collect(),
    }
}

/// Stream that generates the data of one trial. Cells that share a shape
/// share their data, so lag and matrix-count comparisons within a trial are
/// made on the same realization.
pub fn trial_seed(cfg: &ExperimentConfig, cell: &Cell, trial: usize) -> RngSeed {
    let key = match cell.p() {
        Some(p) => cfg.p_grid.iter().position(|q| *q == p).unwrap_or(0) as u64,
        None => 0,
    };
    RngSeed::new(cfg.seed, trial as u64).derive(key)
}

const MIXING_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub probe: f64,
    pub api: Option<f64>,
}

/// One trial of one cell.
pub fn run_trial(
    exp: Experiment,
    cfg: &ExperimentConfig,
    cell: &Cell,
    trial: usize,
) -> Result<TrialOutcome> {
    match cfg.mode {
        Mode::Population => population_trial(exp, cfg, cell),
        Mode::Sample => sample_trial(exp, cfg, cell, trial_seed(cfg, cell, trial)),
    }
}

fn missing_coordinate() -> Error {
    Error::ContractViolation("cell does not match the experiment")
}

fn sample_trial(
    exp: Experiment,
    cfg: &ExperimentConfig,
    cell: &Cell,
    seed: RngSeed,
) -> Result<TrialOutcome> {
    let basis = skew_basis(cfg.n)?;
    let p = cell.p();
    let count = cell.count();
    let (spec, family, mode) = match exp {
        Experiment::Hos => (
            SourceSpec::IidGg {
                p: p.ok_or_else(missing_coordinate)?,
            },
            FamilySpec::Hos { k: None },
            JacobianMode::FiniteDifference { step: cfg.fd_step },
        ),
        Experiment::TradeoffHos => (
            SourceSpec::IidGg {
                p: p.ok_or_else(missing_coordinate)?,
            },
            FamilySpec::Hos { k: count },
            JacobianMode::FiniteDifference { step: cfg.fd_step },
        ),
        Experiment::Sos => (
            SourceSpec::Ar1Gaussian {
                coeffs: cfg.ar.clone(),
            },
            FamilySpec::Sos {
                lags: count.ok_or_else(missing_coordinate)?,
                symmetrize: cfg.symmetrize,
            },
            JacobianMode::AnalyticSos,
        ),
        Experiment::TradeoffSos => (
            SourceSpec::Ar1Gg {
                p: p.ok_or_else(missing_coordinate)?,
                coeffs: cfg.ar.clone(),
            },
            FamilySpec::Sos {
                lags: count.ok_or_else(missing_coordinate)?,
                symmetrize: cfg.symmetrize,
            },
            JacobianMode::AnalyticSos,
        ),
    };

    let s = generate_sources(&spec, cfg.n, cfg.t, seed)?;
    let z = fit_whitener(&s)?.apply(&s)?;
    let report = probe(&ObservationEvaluator::sample(z, family)?, &basis, mode)?;

    let api = if cfg.report_api && !exp.is_tradeoff() {
        Some(separation_api(
            exp,
            cfg,
            cell,
            &s,
            seed.derive(MIXING_STREAM),
        )?)
    } else {
        None
    };
    Ok(TrialOutcome {
        probe: report.probe,
        api,
    })
}

/// API of the reference separator on a randomly rotated mixture of `s`.
/// The SOS separator uses the lag count of the cell.
fn separation_api(
    exp: Experiment,
    cfg: &ExperimentConfig,
    cell: &Cell,
    s: &SignalBlock,
    seed: RngSeed,
) -> Result<f64> {
    let h = random_orthogonal(cfg.n, seed)?;
    let x = mix(&h, s)?;
    let w = match exp {
        Experiment::Sos | Experiment::TradeoffSos => {
            sobi_separate(&x, cell.count().ok_or_else(missing_coordinate)?)?
        }
        Experiment::Hos | Experiment::TradeoffHos => jade_separate(&x)?,
    };
    amari_index(&(&w * &h))
}

fn population_trial(exp: Experiment, cfg: &ExperimentConfig, cell: &Cell) -> Result<TrialOutcome> {
    let basis = skew_basis(cfg.n)?;
    let report = match exp {
        Experiment::Sos | Experiment::TradeoffSos => {
            let l = cell.count().ok_or_else(missing_coordinate)?;
            let lags: Vec<usize> = (1..=l).collect();
            let ev = ObservationEvaluator::population_sos(ar1_population_set(&cfg.ar, &lags)?)?;
            probe(&ev, &basis, JacobianMode::AnalyticSos)?
        }
        Experiment::Hos | Experiment::TradeoffHos => {
            let p = cell.p().ok_or_else(missing_coordinate)?;
            let kappa = alloc::vec![gg_excess_kurtosis(p); cfg.n];
            let k = if exp == Experiment::TradeoffHos {
                cell.count()
            } else {
                None
            };
            let ev =
                ObservationEvaluator::population_hos(CumulantTensor::from_independent(&kappa), k)?;
            probe(
                &ev,
                &basis,
                JacobianMode::FiniteDifference { step: cfg.fd_step },
            )?
        }
    };
    Ok(TrialOutcome {
        probe: report.probe,
        api: None,
    })
}

/// One trial as recorded by a harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub probe: f64,
    pub api: Option<f64>,
    /// Wall time in milliseconds; zero when not measured.
    pub ms: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    // shifted by the first value: constant inputs give exactly zero spread
    let n = values.len() as f64;
    let x0 = values[0];
    let shift = values.iter().map(|v| v - x0).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v - x0 - shift) * (v - x0 - shift))
        .sum::<f64>()
        / n;
    (x0 + shift, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub probe_mean: f64,
    pub probe_std: f64,
    pub api_mean: Option<f64>,
    pub api_std: Option<f64>,
    pub trials: usize,
}

impl CellSummary {
    pub fn from_records(records: &[TrialRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidParameter {
                name: "trials",
                reason: "must be at least 1",
            });
        }
        if let Some(r) = records
            .iter()
            .find(|r| !(r.probe.is_finite() && r.probe >= 0.0))
        {
            return Err(Error::NonFinite(r.trial));
        }
        let probes: Vec<f64> = records.iter().map(|r| r.probe).collect();
        let (probe_mean, probe_std) = mean_std(&probes);
        let apis: Option<Vec<f64>> = records.iter().map(|r| r.api).collect();
        let (api_mean, api_std) = match apis {
            Some(a) => {
                let (m, s) = mean_std(&a);
                (Some(m), Some(s))
            }
            None => (None, None),
        };
        Ok(Self {
            probe_mean,
            probe_std,
            api_mean,
            api_std,
            trials: records.len(),
        })
    }
}

/// `min { g : mean(g) ≥ ε }` over one row of the grid; `None` when no grid
/// value reaches `ε`.
pub fn first_crossing(grid: &[usize], means: &[f64], epsilon: f64) -> Option<usize> {
    grid.iter()
        .zip(means)
        .filter(|(_, m)| **m >= epsilon)
        .map(|(g, _)| *g)
        .min()
}

/// `|mean − ε| ≤ δ` per cell.
pub fn iso_band(means: &[f64], epsilon: f64, delta: f64) -> Vec<bool> {
    means.iter().map(|m| (m - epsilon).abs() <= delta).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub experiment: Experiment,
    pub t: usize,
    pub cells: Vec<Cell>,
    pub summaries: Vec<CellSummary>,
    /// Per-cell records in trial order.
    pub records: Vec<Vec<TrialRecord>>,
    /// Per-shape frontier for the trade-off experiments.
    pub frontier: Vec<(f64, Option<usize>)>,
    /// Iso-band membership per cell for the HOS trade-off.
    pub in_band: Option<Vec<bool>>,
}

impl GridResult {
    /// Aggregates per-cell records (in [`cells`] order) for `exp`.
    pub fn assemble(
        exp: Experiment,
        cfg: &ExperimentConfig,
        records: Vec<Vec<TrialRecord>>,
    ) -> Result<Self> {
        let cells = cells(exp, cfg);
        if records.len() != cells.len() {
            return Err(Error::DimensionMismatch {
                expected: cells.len(),
                got: records.len(),
            });
        }
        let summaries = records
            .iter()
            .map(|r| CellSummary::from_records(r))
            .collect::<Result<Vec<_>>>()?;

        let inner: &[usize] = match exp {
            Experiment::TradeoffSos => &cfg.l_grid,
            Experiment::TradeoffHos => &cfg.k_grid,
            _ => &[],
        };
        let frontier = if exp.is_tradeoff() {
            cfg.p_grid
                .iter()
                .zip(summaries.chunks(inner.len()))
                .map(|(&p, row)| {
                    let means: Vec<f64> = row.iter().map(|s| s.probe_mean).collect();
                    (p, first_crossing(inner, &means, cfg.epsilon))
                })
                .collect()
        } else {
            Vec::new()
        };
        let in_band = (exp == Experiment::TradeoffHos).then(|| {
            let means: Vec<f64> = summaries.iter().map(|s| s.probe_mean).collect();
            iso_band(&means, cfg.epsilon, cfg.delta)
        });

        Ok(Self {
            experiment: exp,
            t: cfg.t,
            cells,
            summaries,
            records,
            frontier,
            in_band,
        })
    }

    pub fn means(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.probe_mean).collect()
    }
}

/// Runs every cell and trial in order on the current thread.
pub fn run_sequential(exp: Experiment, cfg: &ExperimentConfig) -> Result<GridResult> {
    cfg.validate()?;
    let records = cells(exp, cfg)
        .iter()
        .map(|cell| {
            (0..cfg.trials)
                .map(|trial| {
                    let o = run_trial(exp, cfg, cell, trial)?;
                    Ok(TrialRecord {
                        trial,
                        probe: o.probe,
                        api: o.api,
                        ms: 0.0,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    GridResult::assemble(exp, cfg, records)
}

/// Label used for a cell in record files.
pub fn cell_label(cell: &Cell) -> String {
    alloc::format!("{cell}")
}
