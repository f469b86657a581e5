//! FDR, mFDR and power over repeated trials.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::simgen::trial_rng;
use crate::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Counts for one trial at its evaluation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrialSummary {
    pub false_rejections: usize,
    pub total_rejections: usize,
    pub nonnull_count: usize,
    pub true_rejections: usize,
    pub horizon: usize,
}

impl TrialSummary {
    pub fn new(
        false_rejections: usize,
        true_rejections: usize,
        nonnull_count: usize,
        horizon: usize,
    ) -> Result<Self> {
        if true_rejections > nonnull_count {
            return Err(Error::Estimator(format!(
                "{true_rejections} true rejections but only {nonnull_count} non-nulls"
            )));
        }
        Ok(Self {
            false_rejections,
            total_rejections: false_rejections + true_rejections,
            nonnull_count,
            true_rejections,
            horizon,
        })
    }

    pub fn fdp(&self) -> f64 {
        self.false_rejections as f64 / self.total_rejections.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn mean_and_stderr(xs: impl ExactSizeIterator<Item = f64> + Clone) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let stderr = if xs.len() > 1 {
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Estimate { value: mean, stderr }
}

fn non_empty(trials: &[TrialSummary]) -> Result<()> {
    if trials.is_empty() {
        Err(Error::Estimator("no trials".into()))
    } else {
        Ok(())
    }
}

/// Mean FDP with its standard error.
pub fn fdr_estimate(trials: &[TrialSummary]) -> Result<Estimate> {
    non_empty(trials)?;
    Ok(mean_and_stderr(trials.iter().map(TrialSummary::fdp)))
}

/// `mean(V) / mean(R v 1)`.
pub fn mfdr_estimate(trials: &[TrialSummary]) -> Result<f64> {
    non_empty(trials)?;
    Ok(ratio_of_means(trials.iter()))
}

fn ratio_of_means<'a>(trials: impl Iterator<Item = &'a TrialSummary>) -> f64 {
    let (v, r) = trials.fold((0usize, 0usize), |(v, r), t| {
        (v + t.false_rejections, r + t.total_rejections.max(1))
    });
    v as f64 / r as f64
}

/// Bootstrap standard error of [`mfdr_estimate`].
pub fn mfdr_bootstrap_stderr(trials: &[TrialSummary], resamples: usize, seed: u64) -> Result<f64> {
    non_empty(trials)?;
    if resamples < 2 {
        return Err(Error::Estimator("need at least two bootstrap resamples".into()));
    }
    let mut rng = trial_rng(seed, u64::MAX);
    let n = trials.len();
    let stats: Vec<f64> = (0..resamples)
        .map(|_| ratio_of_means((0..n).map(|_| &trials[rng.random_range(0..n)])))
        .collect();
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    let var = stats.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok(var.sqrt())
}

/// Mean proportion of non-nulls rejected.
pub fn power_estimate(trials: &[TrialSummary]) -> Result<Estimate> {
    non_empty(trials)?;
    if let Some(i) = trials.iter().position(|t| t.nonnull_count == 0) {
        return Err(Error::Estimator(format!("trial {i} has no non-nulls")));
    }
    Ok(mean_and_stderr(
        trials
            .iter()
            .map(|t| t.true_rejections as f64 / t.nonnull_count as f64),
    ))
}

/// Cumulative counts at the end of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepCounts {
    /// Decided rejections of true nulls, `|V(s)|`.
    pub false_rejections: usize,
    /// Decided rejections of non-nulls.
    pub true_rejections: usize,
    /// Rejections that have left every conflict set by step `s`.
    pub nonconflicting_rejections: usize,
}

/// Per-step cumulative counts of one trial; `steps[s - 1]` is step `s`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trajectory {
    pub nonnull_count: usize,
    pub steps: Vec<StepCounts>,
}

/// Summarize at `T = min(first step with a non-conflicting rejection, t_max)`.
/// Counts are frozen at the last recorded step if the trajectory is shorter.
pub fn stopping_time_summary(trajectory: &Trajectory, t_max: usize) -> TrialSummary {
    let first = trajectory
        .steps
        .iter()
        .position(|s| s.nonconflicting_rejections > 0)
        .map(|i| i + 1);
    let horizon = first.map_or(t_max, |s| s.min(t_max));
    let at = horizon.min(trajectory.steps.len());
    let counts = if at == 0 {
        StepCounts::default()
    } else {
        trajectory.steps[at - 1]
    };
    TrialSummary {
        false_rejections: counts.false_rejections,
        total_rejections: counts.false_rejections + counts.true_rejections,
        nonnull_count: trajectory.nonnull_count,
        true_rejections: counts.true_rejections,
        horizon,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n_trials: usize,
    pub config_hash: String,
}

/// FDR, mFDR (bootstrap stderr) and, when every trial has non-nulls, power.
pub fn metric_rows(trials: &[TrialSummary], config_hash: &str, seed: u64) -> Result<Vec<MetricRow>> {
    let n = trials.len();
    let row = |metric: &str, value, stderr| MetricRow {
        metric: metric.to_string(),
        value,
        stderr,
        n_trials: n,
        config_hash: config_hash.to_string(),
    };
    let fdr = fdr_estimate(trials)?;
    let mut rows = vec![
        row("fdr", fdr.value, Some(fdr.stderr)),
        row(
            "mfdr",
            mfdr_estimate(trials)?,
            Some(mfdr_bootstrap_stderr(trials, BOOTSTRAP_RESAMPLES, seed)?),
        ),
    ];
    if trials.iter().all(|t| t.nonnull_count > 0) {
        let p = power_estimate(trials)?;
        rows.push(row("power", p.value, Some(p.stderr)));
    }
    Ok(rows)
}

/// CSV with columns `metric, value, stderr, n_trials, config_hash`.
pub fn write_metrics<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
