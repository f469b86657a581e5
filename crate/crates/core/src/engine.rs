//! Level controllers over conflict sets.
//!
//! The engine is driven step by step:
//!
//! 1. [`Engine::observe_start`] starts the next test `t`. Tests that have
//!    left the conflict set `X^t` are *released*: their outcomes become
//!    usable and their last-conflict time is fixed at `tau = t - 1`.
//! 2. [`Engine::next_level`] assigns `alpha_t` (and `lambda_t`) from the
//!    released outcomes only.
//! 3. [`Engine::observe_outcome`] records `P_j` for every test whose
//!    decision index is the current step.
//!
//! Because released tests never re-enter a conflict set, releases happen in
//! non-decreasing `tau` order and the table `r_1 <= r_2 <= ...` of times at
//! which rejections became non-conflicting is append-only.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conflict::ConflictTopology;
use crate::gamma::{gamma_at, GammaSequence};
use crate::types::{ExtIndex, GroundTruth, HypothesisRecord};
use crate::{Error, Result};

/// Levels are capped just below one so every test keeps a proper level.
pub const MAX_LEVEL: f64 = 1.0 - 1e-9;

#[inline]
pub fn cap_level(level: f64) -> f64 {
    level.min(MAX_LEVEL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// LORD++ over conflict sets.
    #[serde(rename = "LORD_PP")]
    LordPlusPlus,
    #[serde(rename = "LOND")]
    Lond,
    /// SAFFRON with a constant candidacy threshold.
    #[serde(rename = "SAFFRON_CONST_LAMBDA")]
    SaffronConstLambda,
    /// SAFFRON with `lambda_t = alpha_t`.
    #[serde(rename = "ALPHA_INVESTING")]
    AlphaInvesting,
    /// LOND divided by the harmonic number (Benjamini-Yekutieli reshaping).
    #[serde(rename = "RESHAPED_LOND")]
    ReshapedLond,
    #[serde(rename = "ALPHA_SPENDING")]
    AlphaSpending,
    #[serde(rename = "UNCORRECTED")]
    Uncorrected,
    /// Synchronous LORD++ applied to completed tests in completion order,
    /// ignoring tests in flight. Not a valid procedure; kept as a baseline.
    #[serde(rename = "NAIVE_COMPLETED_ONLY")]
    NaiveCompletedOnly,
    /// LORD++ under independence, discounted by `xi_t = gamma_t`.
    #[serde(rename = "LORD_DISCOUNTED")]
    LordDiscounted,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::LordPlusPlus,
        Algorithm::Lond,
        Algorithm::SaffronConstLambda,
        Algorithm::AlphaInvesting,
        Algorithm::ReshapedLond,
        Algorithm::AlphaSpending,
        Algorithm::Uncorrected,
        Algorithm::NaiveCompletedOnly,
        Algorithm::LordDiscounted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::LordPlusPlus => "LORD_PP",
            Algorithm::Lond => "LOND",
            Algorithm::SaffronConstLambda => "SAFFRON_CONST_LAMBDA",
            Algorithm::AlphaInvesting => "ALPHA_INVESTING",
            Algorithm::ReshapedLond => "RESHAPED_LOND",
            Algorithm::AlphaSpending => "ALPHA_SPENDING",
            Algorithm::Uncorrected => "UNCORRECTED",
            Algorithm::NaiveCompletedOnly => "NAIVE_COMPLETED_ONLY",
            Algorithm::LordDiscounted => "LORD_DISCOUNTED",
        }
    }

    /// Uses the SAFFRON-style estimate (candidates discount the numerator).
    pub fn is_saffron_family(self) -> bool {
        matches!(self, Algorithm::SaffronConstLambda | Algorithm::AlphaInvesting)
    }

    /// Levels depend only on non-conflicting outcomes and keep the
    /// algorithm's own FDP estimate under `alpha`.
    pub fn is_conflict_aware(self) -> bool {
        matches!(
            self,
            Algorithm::LordPlusPlus
                | Algorithm::Lond
                | Algorithm::SaffronConstLambda
                | Algorithm::AlphaInvesting
                | Algorithm::ReshapedLond
                | Algorithm::AlphaSpending
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == key)
            .or(match key.as_str() {
                "LORD" | "LORD++" | "LORDPP" => Some(Algorithm::LordPlusPlus),
                "SAFFRON" => Some(Algorithm::SaffronConstLambda),
                "NAIVE" => Some(Algorithm::NaiveCompletedOnly),
                _ => None,
            })
            .ok_or_else(|| Error::Parameter(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub algorithm: Algorithm,
    /// Target FDR level.
    pub alpha: f64,
    /// Initial wealth, `0 < w0 <= alpha`. LOND-type rules use `alpha`.
    pub w0: f64,
    /// Constant candidacy threshold for SAFFRON.
    pub lambda: f64,
}

impl EngineParams {
    /// Defaults: `w0 = alpha / 2`, `lambda = 1/2`.
    pub fn new(algorithm: Algorithm, alpha: f64) -> Self {
        Self {
            algorithm,
            alpha,
            w0: alpha / 2.0,
            lambda: 0.5,
        }
    }

    pub fn with_w0(mut self, w0: f64) -> Self {
        self.w0 = w0;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.w0 > 0.0 && self.w0 <= self.alpha) {
            return Err(Error::Parameter(format!(
                "w0 {} outside (0, alpha = {}]",
                self.w0, self.alpha
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Parameter(format!("lambda {} outside (0, 1)", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub level: f64,
    /// Candidacy threshold; `None` outside the SAFFRON family.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub p_value: f64,
    pub decision_index: usize,
    pub rejected: bool,
    pub candidate: Option<bool>,
}

#[derive(Debug, Clone)]
struct Slot {
    level: Option<f64>,
    lambda: Option<f64>,
    outcome: Option<Outcome>,
    /// Set when the test is released.
    tau: Option<usize>,
}

impl Slot {
    /// `alpha_j / (1 - lambda_j)`, the SAFFRON weight of a test.
    fn saffron_weight(&self) -> f64 {
        match (self.level, self.lambda) {
            (Some(a), Some(l)) => a / (1.0 - l),
            _ => 0.0,
        }
    }
}

/// Sequential state of one level controller. One engine per stream.
#[derive(Debug, Clone)]
pub struct Engine {
    params: EngineParams,
    gamma: GammaSequence,
    topology: Arc<ConflictTopology>,
    slots: Vec<Slot>,
    closed: bool,
    /// Started tests not yet released: exactly `X^t ∪ {t}`.
    pending: Vec<usize>,
    /// `r_1 <= r_2 <= ...`.
    reject_taus: Vec<usize>,
    /// Sorted decision indices of released candidates (rejections for
    /// alpha-investing); the SAFFRON "candidates after r_j" counts.
    released_cand_decisions: Vec<usize>,
    released_noncand_weight: f64,
    level_sum: f64,
    harmonic: f64,
    completed: usize,
    naive_reject_positions: Vec<usize>,
    decided_reject_times: Vec<usize>,
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    let pos = v.partition_point(|&y| y <= x);
    v.insert(pos, x);
}

impl Engine {
    pub fn new(
        params: EngineParams,
        gamma: GammaSequence,
        topology: Arc<ConflictTopology>,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            gamma,
            topology,
            slots: Vec::new(),
            closed: false,
            pending: Vec::new(),
            reject_taus: Vec::new(),
            released_cand_decisions: Vec::new(),
            released_noncand_weight: 0.0,
            level_sum: 0.0,
            harmonic: 0.0,
            completed: 0,
            naive_reject_positions: Vec::new(),
            decided_reject_times: Vec::new(),
        })
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn gamma(&self) -> &GammaSequence {
        &self.gamma
    }

    pub fn topology(&self) -> &ConflictTopology {
        &self.topology
    }

    /// Index of the most recently started test (0 before the first start).
    pub fn t(&self) -> usize {
        self.slots.len()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Start test `t + 1`, releasing every test that left the conflict set.
    pub fn observe_start(&mut self) -> Result<()> {
        if self.closed {
            return Err(Error::Sequencing("stream is closed".into()));
        }
        if let Some(last) = self.slots.last() {
            if last.level.is_none() {
                return Err(Error::Sequencing(format!(
                    "test {} started without a level",
                    self.slots.len()
                )));
            }
        }
        let t = self.slots.len() + 1;
        self.topology.check_index(t)?;

        let pending = std::mem::take(&mut self.pending);
        let mut still = Vec::with_capacity(pending.len() + 1);
        for j in pending {
            let decided = self.slots[j - 1].outcome.is_some();
            if !decided {
                if let Some(e) = self.topology.decision_index(j) {
                    if e < t {
                        self.pending = still;
                        return Err(Error::Sequencing(format!(
                            "outcome of test {j} (decision index {e}) not reported before step {t}"
                        )));
                    }
                }
            }
            if self.topology.is_conflicting(j, t) {
                still.push(j);
            } else if decided {
                self.release(j, t - 1);
            } else {
                self.pending = still;
                return Err(Error::Sequencing(format!(
                    "test {j} left the conflict set at step {t} without an outcome"
                )));
            }
        }
        still.push(t);
        self.pending = still;
        self.slots.push(Slot {
            level: None,
            lambda: None,
            outcome: None,
            tau: None,
        });
        self.harmonic += 1.0 / t as f64;
        Ok(())
    }

    fn release(&mut self, j: usize, tau: usize) {
        let alg = self.params.algorithm;
        let slot = &mut self.slots[j - 1];
        slot.tau = Some(tau);
        let outcome = slot.outcome.expect("released tests are decided");
        if outcome.rejected {
            self.reject_taus.push(tau);
        }
        if alg.is_saffron_family() {
            if outcome.candidate == Some(true) {
                insert_sorted(&mut self.released_cand_decisions, outcome.decision_index);
            } else {
                self.released_noncand_weight += slot.saffron_weight();
            }
        }
    }

    /// Assign the level of the current test.
    pub fn next_level(&mut self) -> Result<Assignment> {
        let t = self.slots.len();
        if t == 0 {
            return Err(Error::Sequencing("no test has started".into()));
        }
        if self.slots[t - 1].level.is_some() {
            return Err(Error::Sequencing(format!("test {t} already has a level")));
        }
        let assignment = self.compute_level(t as i64);
        let slot = &mut self.slots[t - 1];
        slot.level = Some(assignment.level);
        slot.lambda = assignment.lambda;
        self.level_sum += assignment.level;
        Ok(assignment)
    }

    /// `observe_start` followed by `next_level`.
    pub fn start_test(&mut self) -> Result<Assignment> {
        self.observe_start()?;
        self.next_level()
    }

    /// Largest level up to `level` whose SAFFRON weight keeps the estimate
    /// at most `alpha`. When decisions arrive out of order, a burst of late
    /// candidates can shift the gamma index of a later test onto one that is
    /// already spent, and the formula alone would overshoot.
    fn saffron_cap(&self, level: f64, weight: impl Fn(f64) -> f64) -> f64 {
        let alpha = self.params.alpha;
        let den = self.denominator();
        let in_flight: f64 = self
            .pending
            .iter()
            .map(|&j| self.slots[j - 1].saffron_weight())
            .sum();
        // slack absorbs regrouping when in-flight weights are released later
        let bound = alpha * (1.0 - 1e-10);
        let fits = |a: f64| (self.released_noncand_weight + (in_flight + weight(a))) / den <= bound;
        if fits(level) {
            return level;
        }
        // bisect on the bit pattern: weight is increasing in the level
        let (mut lo, mut hi) = (0u64, level.to_bits());
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if fits(f64::from_bits(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        f64::from_bits(lo)
    }

    fn compute_level(&self, n: i64) -> Assignment {
        let p = &self.params;
        let g = &self.gamma;
        let alpha = p.alpha;
        match p.algorithm {
            Algorithm::LordPlusPlus => Assignment {
                level: cap_level(lord_pp_level(g, n, &self.reject_taus, alpha, p.w0)),
                lambda: None,
            },
            Algorithm::Lond => Assignment {
                level: cap_level(alpha * g.at(n) * (self.reject_taus.len().max(1) as f64)),
                lambda: None,
            },
            Algorithm::ReshapedLond => Assignment {
                level: cap_level(
                    alpha * g.at(n) * (self.reject_taus.len().max(1) as f64) / self.harmonic,
                ),
                lambda: None,
            },
            Algorithm::SaffronConstLambda => {
                let lambda = p.lambda;
                let wealth = saffron_wealth(
                    g,
                    n,
                    &self.reject_taus,
                    &self.released_cand_decisions,
                    alpha,
                    p.w0,
                );
                let level = lambda.min((1.0 - lambda) * wealth);
                Assignment {
                    level: self.saffron_cap(level, |a| a / (1.0 - lambda)),
                    lambda: Some(lambda),
                }
            }
            Algorithm::AlphaInvesting => {
                let s = saffron_wealth(
                    g,
                    n,
                    &self.reject_taus,
                    &self.released_cand_decisions,
                    alpha,
                    p.w0,
                );
                let level = self.saffron_cap(s / (1.0 + s), |a| a / (1.0 - a));
                Assignment {
                    level,
                    lambda: Some(level),
                }
            }
            Algorithm::AlphaSpending => Assignment {
                level: alpha * g.at(n),
                lambda: None,
            },
            Algorithm::Uncorrected => Assignment {
                level: alpha,
                lambda: None,
            },
            Algorithm::NaiveCompletedOnly => {
                let position = self.completed as i64 + 1;
                Assignment {
                    level: cap_level(lord_pp_level(
                        g,
                        position,
                        &self.naive_reject_positions,
                        alpha,
                        p.w0,
                    )),
                    lambda: None,
                }
            }
            Algorithm::LordDiscounted => {
                let indep = lord_pp_level(g, n, &self.decided_reject_times, alpha, p.w0);
                Assignment {
                    level: cap_level(g.at(n) * indep),
                    lambda: None,
                }
            }
        }
    }

    /// Record `P_j`. The current step must be `j`'s scheduled decision index,
    /// except after [`Engine::close`], when outstanding tests may report in
    /// any order.
    pub fn observe_outcome(&mut self, j: usize, p: f64) -> Result<Outcome> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::PValueRange(p));
        }
        let t = self.slots.len();
        if j == 0 || j > t {
            return Err(Error::Sequencing(format!("test {j} has not started")));
        }
        let slot = &self.slots[j - 1];
        let Some(level) = slot.level else {
            return Err(Error::Sequencing(format!("test {j} has no level yet")));
        };
        if slot.outcome.is_some() {
            return Err(Error::Sequencing(format!("duplicate outcome for test {j}")));
        }
        let scheduled = self.topology.decision_index(j);
        let decision_index = match (scheduled, self.closed) {
            (Some(e), false) if e == t => t,
            (Some(e), true) if e >= t => e,
            _ => {
                return Err(Error::Sequencing(format!(
                    "outcome of test {j} reported at step {t} but scheduled at {}",
                    scheduled.map_or("never".to_string(), |e| e.to_string())
                )))
            }
        };
        let outcome = Outcome {
            p_value: p,
            decision_index,
            rejected: p <= level,
            candidate: slot.lambda.map(|l| p <= l),
        };
        self.slots[j - 1].outcome = Some(outcome);
        self.completed += 1;
        if outcome.rejected {
            self.naive_reject_positions.push(self.completed);
            insert_sorted(&mut self.decided_reject_times, decision_index);
        }
        Ok(outcome)
    }

    /// No further tests will start; outstanding outcomes may still arrive.
    pub fn close(&mut self) -> Result<()> {
        if let Some(last) = self.slots.last() {
            if last.level.is_none() {
                return Err(Error::Sequencing("current test has no level".into()));
            }
        }
        self.closed = true;
        Ok(())
    }

    /// `r_k` from the incrementally maintained table.
    pub fn r(&self, k: usize) -> ExtIndex {
        match k.checked_sub(1).and_then(|i| self.reject_taus.get(i)) {
            Some(&r) => ExtIndex::from(r),
            None => ExtIndex::NegInf,
        }
    }

    pub fn r_table(&self) -> &[usize] {
        &self.reject_taus
    }

    /// Rejections no longer in the current conflict set.
    pub fn nonconflicting_rejections(&self) -> usize {
        self.reject_taus.len()
    }

    /// `X^t` for the current test.
    pub fn current_conflict_set(&self) -> Vec<usize> {
        let t = self.slots.len();
        self.pending.iter().copied().filter(|&j| j != t).collect()
    }

    /// Last-conflict time as learned online; `None` until released.
    pub fn tau(&self, j: usize) -> Option<usize> {
        self.slots.get(j.wrapping_sub(1)).and_then(|s| s.tau)
    }

    pub fn level(&self, j: usize) -> Option<f64> {
        self.slots.get(j.wrapping_sub(1)).and_then(|s| s.level)
    }

    pub fn outcome(&self, j: usize) -> Option<Outcome> {
        self.slots.get(j.wrapping_sub(1)).and_then(|s| s.outcome)
    }

    pub fn levels(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.level.unwrap_or(0.0)).collect()
    }

    pub fn records(&self) -> Vec<HypothesisRecord> {
        self.slots
            .iter()
            .enumerate()
            .map(|(i, s)| HypothesisRecord {
                index: i + 1,
                decision_index: s.outcome.map(|o| o.decision_index),
                p_value: s.outcome.map(|o| o.p_value),
                level: s.level.unwrap_or(0.0),
                candidacy_threshold: s.lambda,
                rejected: s.outcome.map(|o| o.rejected),
                candidate: s.outcome.and_then(|o| o.candidate),
            })
            .collect()
    }

    fn denominator(&self) -> f64 {
        self.reject_taus.len().max(1) as f64
    }

    /// The algorithm's own FDP estimate at the current step.
    ///
    /// The denominator counts only decided, non-conflicting rejections.
    /// SAFFRON-type numerators charge `alpha_j / (1 - lambda_j)` for every
    /// test in `X^t ∪ {t}` and for released non-candidates.
    pub fn fdp_hat(&self) -> f64 {
        if self.params.algorithm.is_saffron_family() {
            let in_flight: f64 = self
                .pending
                .iter()
                .map(|&j| self.slots[j - 1].saffron_weight())
                .sum();
            (self.released_noncand_weight + in_flight) / self.denominator()
        } else {
            self.level_sum / self.denominator()
        }
    }

    /// LORD-type estimate recomputed from scratch (audit route).
    pub fn fdp_hat_lord_recomputed(&self) -> f64 {
        let num: f64 = self.slots.iter().filter_map(|s| s.level).sum();
        let den = self
            .slots
            .iter()
            .filter(|s| s.tau.is_some() && s.outcome.is_some_and(|o| o.rejected))
            .count();
        num / den.max(1) as f64
    }

    /// Oracle estimate under conflict sets: null levels over non-conflicting
    /// rejections.
    pub fn oracle_fdp_conf(&self, truth: &GroundTruth) -> Result<f64> {
        if truth.len() < self.slots.len() {
            return Err(Error::Parameter(format!(
                "ground truth covers {} tests but {} have started",
                truth.len(),
                self.slots.len()
            )));
        }
        let num: f64 = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| truth.null_mask[*i])
            .filter_map(|(_, s)| s.level)
            .sum();
        Ok(num / self.denominator())
    }
}

/// Generic LORD++ level for target index `n` with rejection reward times
/// `taus` (ascending).
pub fn lord_pp_level(g: &GammaSequence, n: i64, taus: &[usize], alpha: f64, w0: f64) -> f64 {
    let first = taus.first().map_or(ExtIndex::NegInf, |&r| ExtIndex::from(r));
    let rest: f64 = taus.iter().skip(1).map(|&r| g.at(n - r as i64)).sum();
    g.at(n) * w0 + gamma_at(g, first.subtracted_from(n)) * (alpha - w0) + rest * alpha
}

/// The bracketed wealth term shared by SAFFRON and alpha-investing:
/// `W0 g(n - C_0+) + (alpha - W0) g(n - r_1 - C_1+) + sum_{j>=2} alpha g(n - r_j - C_j+)`
/// where `C_j+` counts released candidates decided after `r_j`.
pub fn saffron_wealth(
    g: &GammaSequence,
    n: i64,
    taus: &[usize],
    cand_decisions: &[usize],
    alpha: f64,
    w0: f64,
) -> f64 {
    let total = cand_decisions.len();
    let mut ptr = 0usize;
    let mut first = 0.0;
    let mut rest = 0.0;
    for (k, &r) in taus.iter().enumerate() {
        while ptr < total && cand_decisions[ptr] <= r {
            ptr += 1;
        }
        let after = (total - ptr) as i64;
        let w = g.at(n - r as i64 - after);
        if k == 0 {
            first = (alpha - w0) * w;
        } else {
            rest += alpha * w;
        }
    }
    w0 * g.at(n - total as i64) + first + rest
}

/// `r_k = min{ i in [upto] : sum_{j <= i} R_j 1{tau_j <= i} >= k }`,
/// evaluated directly from its definition (`-inf` if the set is empty).
pub fn compute_r(rejected: &[bool], taus: &[ExtIndex], k: usize, upto: usize) -> ExtIndex {
    for i in 1..=upto {
        let count = (1..=i.min(rejected.len()))
            .filter(|&j| rejected[j - 1] && taus[j - 1] <= ExtIndex::from(i))
            .count();
        if count >= k {
            return ExtIndex::from(i);
        }
    }
    ExtIndex::NegInf
}
