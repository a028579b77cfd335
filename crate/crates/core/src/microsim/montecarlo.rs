use rayon::prelude::*;

use super::simulate::simulate_trial;
use super::EnvironmentConfig;
use crate::error::{DiivError, Result};
use crate::estimand::align_parallel;
use crate::table::{pairwise_sum, DesignMode, ObservationTable};
use crate::twostage::{
    intercept, two_stage_joint, two_stage_least_squares, two_stage_parallel, CrossTerm, IvSystem, SeKind,
};

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.02;
/// Bins are indexed by `floor(v * 50)`; edges are `k / 50`, which prints
/// cleaner than `k * 0.02`.
const BINS_PER_UNIT: f64 = 50.0;
pub const SUMMARY_QUANTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];
const TRIM_FRACTION: f64 = 0.01;

/// 2SLS of `y` on `d` with an intercept and both raw instruments excluded.
///
/// A parallel table is expanded to `z1 = z h`, `z2 = z (1 - h)`.
pub fn overidentified_iv(table: &ObservationTable) -> Result<f64> {
    let (a, b) = match table.inferred_mode() {
        DesignMode::Joint => (table.z1().to_reals(), table.require_z2()?.to_reals()),
        DesignMode::Parallel => {
            let h = table.require_h()?;
            let a = table.z1().iter().zip(h.iter()).map(|(z, h)| f64::from(z * h)).collect();
            let b = table
                .z1()
                .iter()
                .zip(h.iter())
                .map(|(z, h)| f64::from(z * (1 - h)))
                .collect();
            (a, b)
        }
    };
    let system = IvSystem {
        response: table.y().to_vec(),
        endogenous: ("d".into(), table.d().to_reals()),
        exogenous: vec![intercept(table.n())],
        instruments: vec![("z1".into(), a), ("z2".into(), b)],
    };
    Ok(two_stage_least_squares(&system, SeKind::Classical)?.tau())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub diiv: Option<f64>,
    pub overidentified_iv: Option<f64>,
    /// Set when either estimator failed on this trial.
    pub error: Option<DiivError>,
}

impl TrialRecord {
    pub fn flagged(&self) -> bool {
        self.error.is_some()
    }
}

fn diiv_estimate(config: &EnvironmentConfig, table: &ObservationTable) -> Result<f64> {
    match config.design() {
        DesignMode::Joint => {
            two_stage_joint(table, config.orientation(), SeKind::Robust, &[], CrossTerm::Auto).map(|r| r.tau)
        }
        DesignMode::Parallel => {
            let aligned = align_parallel(table, config.orientation())?;
            two_stage_parallel(&aligned, SeKind::Robust, &[]).map(|r| r.tau)
        }
    }
}

/// Applies both estimators to one simulated table.
pub fn estimate_trial(config: &EnvironmentConfig, trial: u64, table: &ObservationTable) -> TrialRecord {
    let diiv = diiv_estimate(config, table);
    let over = overidentified_iv(table);
    let error = diiv.as_ref().err().or(over.as_ref().err()).cloned();
    TrialRecord {
        trial,
        diiv: diiv.ok(),
        overidentified_iv: over.ok(),
        error,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    /// Pairs `(probability, value)` for [`SUMMARY_QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
    /// Mean and SD after dropping 1% from each tail.
    pub trimmed_mean: f64,
    pub trimmed_sd: f64,
}

impl EstimatorSummary {
    fn from_values(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, sd) = moments(values);
        let cut = (TRIM_FRACTION * sorted.len() as f64).floor() as usize;
        let (trimmed_mean, trimmed_sd) = if sorted.len() > 2 * cut {
            moments(&sorted[cut..sorted.len() - cut])
        } else {
            (f64::NAN, f64::NAN)
        };
        EstimatorSummary {
            count: values.len(),
            mean,
            sd,
            quantiles: SUMMARY_QUANTILES.iter().map(|&p| (p, quantile(&sorted, p))).collect(),
            trimmed_mean,
            trimmed_sd,
        }
    }

    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.quantiles.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }
}

fn moments(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = p * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Shared-edge histograms of both estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// `edges.len() == counts.len() + 1`; edge `i` is `(first_bin + i) * bin_width`.
    pub edges: Vec<f64>,
    pub diiv_counts: Vec<usize>,
    pub overidentified_counts: Vec<usize>,
}

impl Histogram {
    fn build(diiv: &[f64], over: &[f64]) -> Self {
        let w = HISTOGRAM_BIN_WIDTH;
        let all = diiv.iter().chain(over);
        let (min, max) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if !min.is_finite() {
            return Histogram {
                bin_width: w,
                edges: Vec::new(),
                diiv_counts: Vec::new(),
                overidentified_counts: Vec::new(),
            };
        }
        let first = (min * BINS_PER_UNIT).floor() as i64;
        let last = ((max * BINS_PER_UNIT).floor() as i64 + 1).max(first + 1);
        let bins = (last - first) as usize;
        let edges = (first..=last).map(|i| i as f64 / BINS_PER_UNIT).collect();
        let count = |values: &[f64]| {
            let mut c = vec![0usize; bins];
            for &v in values {
                let idx = ((v * BINS_PER_UNIT).floor() as i64 - first).clamp(0, bins as i64 - 1) as usize;
                c[idx] += 1;
            }
            c
        };
        Histogram {
            bin_width: w,
            edges,
            diiv_counts: count(diiv),
            overidentified_counts: count(over),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    /// One record per trial, ordered by trial index.
    pub records: Vec<TrialRecord>,
    pub diiv: EstimatorSummary,
    pub overidentified_iv: EstimatorSummary,
    pub flagged: usize,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

pub fn run_monte_carlo(config: &EnvironmentConfig) -> MonteCarloSummary {
    run_monte_carlo_with(config, Execution::Parallel)
}

/// Runs all trials. Each trial owns its random stream and results are merged
/// by trial index, so the summary does not depend on `execution`.
pub fn run_monte_carlo_with(config: &EnvironmentConfig, execution: Execution) -> MonteCarloSummary {
    let one = |t: u64| {
        let sim = simulate_trial(config, t);
        estimate_trial(config, t, &sim.table)
    };
    let trials = config.trials() as u64;
    let records: Vec<TrialRecord> = match execution {
        Execution::Parallel => (0..trials).into_par_iter().map(one).collect(),
        Execution::Sequential => (0..trials).map(one).collect(),
    };
    summarize(records)
}

fn summarize(records: Vec<TrialRecord>) -> MonteCarloSummary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| !r.flagged()).collect();
    let diiv: Vec<f64> = ok.iter().filter_map(|r| r.diiv).collect();
    let over: Vec<f64> = ok.iter().filter_map(|r| r.overidentified_iv).collect();
    MonteCarloSummary {
        flagged: records.len() - ok.len(),
        diiv: EstimatorSummary::from_values(&diiv),
        overidentified_iv: EstimatorSummary::from_values(&over),
        histogram: Histogram::build(&diiv, &over),
        records,
    }
}
