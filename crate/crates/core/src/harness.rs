//! Seeded trials and experiment sweeps.
//!
//! A trial runs an event loop over steps `s = 1..=M`: test `s` starts and
//! gets its level from released outcomes only, then every test with
//! decision index `s` reports. After step `M` the stream is closed and
//! outstanding tests report in decision order, so summaries cover every
//! test.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConflictParams, ExperimentConfig, RegimeKind};
use crate::conflict::{BatchLayout, ConflictTopology, LagSequence};
use crate::engine::{Algorithm, Engine, EngineParams};
use crate::estimators::{
    fdr_estimate, mfdr_estimate, power_estimate, stopping_time_summary, StepCounts, Trajectory,
    TrialSummary,
};
use crate::gamma::GammaSequence;
use crate::simgen::{sample_decision_times_with, to_pvalues, trial_rng, TrialGenerator};
use crate::types::{validate_record_stream, GroundTruth};
use crate::{Error, Result};

/// Offset separating the decision-time streams from the data streams.
const SCHEDULE_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Keep the per-step trace.
    pub trace: bool,
    /// Keep per-step cumulative counts.
    pub trajectory: bool,
    /// Check estimate safety and record consistency; violations are errors.
    pub check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub level: f64,
    pub fdp_hat: f64,
    /// Oracle estimate; needs ground truth.
    pub oracle_fdp: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StreamRun {
    pub engine: Engine,
    pub trace: Vec<TraceStep>,
    pub trajectory: Option<Trajectory>,
}

impl StreamRun {
    pub fn rejections(&self) -> usize {
        (1..=self.engine.t())
            .filter(|&j| self.engine.outcome(j).is_some_and(|o| o.rejected))
            .count()
    }

    /// Counts over every decided test.
    pub fn summary(&self, truth: &GroundTruth) -> TrialSummary {
        let (mut v, mut s) = (0, 0);
        for j in 1..=self.engine.t() {
            if self.engine.outcome(j).is_some_and(|o| o.rejected) {
                if truth.is_null(j) {
                    v += 1;
                } else {
                    s += 1;
                }
            }
        }
        TrialSummary {
            false_rejections: v,
            total_rejections: v + s,
            nonnull_count: truth.nonnull_count(),
            true_rejections: s,
            horizon: self.engine.t(),
        }
    }
}

/// Conflict topology for `m` tests; ASYNC draws its schedule from `rng`.
pub fn build_topology<R: rand::Rng + ?Sized>(
    cp: &ConflictParams,
    m: usize,
    rng: &mut R,
) -> Result<ConflictTopology> {
    Ok(match cp.regime {
        RegimeKind::None => ConflictTopology::none(),
        RegimeKind::Async => ConflictTopology::asynchronous(sample_decision_times_with(m, cp.geom_p, rng)?),
        RegimeKind::Lagged => ConflictTopology::lagged(LagSequence::constant(cp.lag, m)),
        RegimeKind::Minibatch => ConflictTopology::minibatch(BatchLayout::uniform(cp.batch_size, m)?),
    })
}

/// Drive one engine over a full p-value stream.
pub fn run_stream(
    params: EngineParams,
    gamma: GammaSequence,
    topology: Arc<ConflictTopology>,
    pvalues: &[f64],
    truth: Option<&GroundTruth>,
    opts: RunOptions,
) -> Result<StreamRun> {
    let m = pvalues.len();
    if let Some(len) = topology.len() {
        if len != m {
            return Err(Error::Simulation(format!(
                "topology covers {len} tests but the stream has {m}"
            )));
        }
    }
    if let Some(truth) = truth {
        if truth.len() != m {
            return Err(Error::Simulation("ground truth length differs from stream".into()));
        }
    }
    let alg = params.algorithm;
    let alpha = params.alpha;
    let mut due: Vec<Vec<usize>> = vec![Vec::new(); m + 1];
    let mut late: Vec<(usize, usize)> = Vec::new();
    for j in 1..=m {
        match topology.decision_index(j) {
            Some(e) if e <= m => due[e].push(j),
            Some(e) => late.push((e, j)),
            None => late.push((usize::MAX, j)),
        }
    }
    late.sort_unstable();

    let mut engine = Engine::new(params, gamma, topology)?;
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut counts = StepCounts::default();
    let mut null_level_sum = 0.0;
    let check_safety = opts.check && alg.is_conflict_aware();
    let check_oracle = check_safety && !alg.is_saffron_family();

    for s in 1..=m {
        let a = engine.start_test()?;
        if truth.is_some_and(|t| t.is_null(s)) {
            null_level_sum += a.level;
        }
        if check_safety || opts.trace {
            let fdp_hat = engine.fdp_hat();
            let oracle = truth.map(|_| null_level_sum / engine.nonconflicting_rejections().max(1) as f64);
            if check_safety && fdp_hat > alpha {
                return Err(Error::Invariant(format!(
                    "{alg}: FDP-hat {fdp_hat} exceeds alpha {alpha} at step {s}"
                )));
            }
            if check_oracle {
                if let Some(o) = oracle.filter(|&o| o > fdp_hat) {
                    return Err(Error::Invariant(format!(
                        "{alg}: oracle FDP {o} exceeds FDP-hat {fdp_hat} at step {s}"
                    )));
                }
            }
            if opts.trace {
                trace.push(TraceStep {
                    t: s,
                    level: a.level,
                    fdp_hat,
                    oracle_fdp: oracle,
                });
            }
        }
        for &j in &due[s] {
            let o = engine.observe_outcome(j, pvalues[j - 1])?;
            if o.rejected {
                match truth {
                    Some(t) if !t.is_null(j) => counts.true_rejections += 1,
                    _ => counts.false_rejections += 1,
                }
            }
        }
        if opts.trajectory {
            steps.push(counts);
        }
    }
    engine.close()?;
    for (_, j) in late {
        engine.observe_outcome(j, pvalues[j - 1])?;
    }

    if opts.check {
        if let Err(v) = validate_record_stream(&engine.records()) {
            return Err(Error::Invariant(v.to_string()));
        }
    }
    let trajectory = opts.trajectory.then(|| {
        let r = engine.r_table();
        let mut k = 0;
        for (i, st) in steps.iter_mut().enumerate() {
            while k < r.len() && r[k] <= i + 1 {
                k += 1;
            }
            st.nonconflicting_rejections = k;
        }
        Trajectory {
            nonnull_count: truth.map_or(0, GroundTruth::nonnull_count),
            steps,
        }
    });
    Ok(StreamRun {
        engine,
        trace,
        trajectory,
    })
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub algorithm: Algorithm,
    pub summary: TrialSummary,
    pub trace: Vec<TraceStep>,
}

/// Shared, per-grid-point state: one generator per `pi1` over a single
/// covariance factorization.
struct PointContext {
    conflict: ConflictParams,
    generators: Vec<TrialGenerator>,
}

fn point_contexts(config: &ExperimentConfig) -> Result<Vec<PointContext>> {
    config
        .grid_points()
        .into_iter()
        .map(|point| {
            let (conflict, cov) = config.point_setup(point)?;
            let first = TrialGenerator::new(config.m, config.pi1_grid[0], config.alt, &cov)?;
            let generators = config
                .pi1_grid
                .iter()
                .map(|&p| first.with_pi1(p))
                .collect::<Result<_>>()?;
            Ok(PointContext {
                conflict,
                generators,
            })
        })
        .collect()
}

fn run_trial_in(
    config: &ExperimentConfig,
    gamma: &GammaSequence,
    ctx: &PointContext,
    pi1_index: usize,
    trial_index: u64,
    trace: bool,
) -> Result<Vec<TrialOutput>> {
    let mut data_rng = trial_rng(config.base_seed, trial_index);
    let (z, truth) = ctx.generators[pi1_index].sample(&mut data_rng);
    let pvalues = to_pvalues(&z, config.sided);
    let mut sched_rng = trial_rng(config.base_seed, SCHEDULE_STREAM | trial_index);
    let topology = Arc::new(build_topology(&ctx.conflict, config.m, &mut sched_rng)?);
    let opts = RunOptions {
        trace,
        trajectory: config.t_max.is_some(),
        check: true,
    };
    config
        .algorithms
        .iter()
        .map(|&alg| {
            let run = run_stream(
                config.engine_params(alg),
                gamma.clone(),
                topology.clone(),
                &pvalues,
                Some(&truth),
                opts,
            )?;
            let summary = match (config.t_max, &run.trajectory) {
                (Some(t_max), Some(traj)) => stopping_time_summary(traj, t_max),
                _ => run.summary(&truth),
            };
            Ok(TrialOutput {
                algorithm: alg,
                summary,
                trace: run.trace,
            })
        })
        .collect()
}

/// One seeded trial at grid point `point_index` and `pi1_grid[pi1_index]`,
/// for every configured algorithm on the same data.
pub fn run_trial(
    config: &ExperimentConfig,
    point_index: usize,
    pi1_index: usize,
    trial_index: u64,
    trace: bool,
) -> Result<Vec<TrialOutput>> {
    let gamma = config.gamma_sequence()?;
    let contexts = point_contexts(config)?;
    let ctx = contexts
        .get(point_index)
        .ok_or_else(|| Error::Config(format!("no grid point {point_index}")))?;
    if pi1_index >= config.pi1_grid.len() {
        return Err(Error::Config(format!("no pi1 index {pi1_index}")));
    }
    run_trial_in(config, &gamma, ctx, pi1_index, trial_index, trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub algo: String,
    pub grid_param: Option<f64>,
    pub pi1: f64,
    pub power: Option<f64>,
    pub power_stderr: Option<f64>,
    pub fdr: f64,
    pub fdr_stderr: f64,
    pub mfdr: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    /// Per-trial summaries keyed by row position.
    pub trials: Vec<Vec<TrialSummary>>,
}

impl ExperimentResult {
    pub fn row(&self, algo: Algorithm, grid_param: Option<f64>, pi1: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.algo == algo.as_str() && r.grid_param == grid_param && r.pi1 == pi1)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every grid point, `pi1` and trial, in parallel on the current rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let gamma = config.gamma_sequence()?;
    let contexts = point_contexts(config)?;
    let n_pi1 = config.pi1_grid.len();
    let tasks: Vec<(usize, usize, u64)> = (0..contexts.len())
        .flat_map(|g| (0..n_pi1).flat_map(move |p| (0..config.n_trials as u64).map(move |t| (g, p, t))))
        .collect();
    let outputs: Vec<Vec<TrialOutput>> = tasks
        .par_iter()
        .map(|&(g, p, t)| run_trial_in(config, &gamma, &contexts[g], p, t, false))
        .collect::<Result<_>>()?;

    let mut grouped: HashMap<(usize, usize, usize), Vec<TrialSummary>> = HashMap::new();
    for (&(g, p, _), outs) in tasks.iter().zip(&outputs) {
        for (a, out) in outs.iter().enumerate() {
            grouped.entry((g, p, a)).or_default().push(out.summary);
        }
    }

    let hash = config.config_hash();
    let points = config.grid_points();
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for (g, point) in points.iter().enumerate() {
        for (p, &pi1) in config.pi1_grid.iter().enumerate() {
            for (a, alg) in config.algorithms.iter().enumerate() {
                let ts = grouped.remove(&(g, p, a)).unwrap_or_default();
                let fdr = fdr_estimate(&ts)?;
                let power = if ts.iter().all(|t| t.nonnull_count > 0) {
                    Some(power_estimate(&ts)?)
                } else {
                    None
                };
                rows.push(ResultRow {
                    experiment: config.experiment.to_string(),
                    algo: alg.to_string(),
                    grid_param: *point,
                    pi1,
                    power: power.map(|e| e.value),
                    power_stderr: power.map(|e| e.stderr),
                    fdr: fdr.value,
                    fdr_stderr: fdr.stderr,
                    mfdr: mfdr_estimate(&ts)?,
                    n_trials: ts.len(),
                    seed: config.base_seed,
                    config_hash: hash.clone(),
                });
                trials.push(ts);
            }
        }
    }
    Ok(ExperimentResult { rows, trials })
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Simulation(e.to_string()))?;
    pool.install(|| run_experiment(config))
}
