//! Conflict sets `X^t` and last-conflict times `tau_t`.
//!
//! A test `i < t` conflicts with test `t` when its outcome is still unknown
//! at the start of `t` (asynchrony) or when it lies within `t`'s dependence
//! lag. Level rules may only use outcomes of non-conflicting tests.
//!
//! Every topology here is monotone: once a test leaves the conflict sets
//! it never re-enters, so membership of `i` in `X^{i+1}, X^{i+2}, ...` is a
//! contiguous prefix and `tau_i` is the last step of that prefix.

use crate::types::{DecisionSchedule, ExtIndex};
use crate::{Error, Result};

/// Dependence lags `L_1, L_2, ...` with `L_{t+1} <= L_t + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagSequence {
    lags: Vec<usize>,
}

impl LagSequence {
    /// Validates the monotonicity constraint; lags are clipped to `L_t <= t - 1`.
    pub fn new(lags: Vec<usize>) -> Result<Self> {
        if let Err(t) = validate_lags(&lags) {
            return Err(Error::Topology(format!(
                "lag sequence violates L_(t+1) <= L_t + 1 at t = {t}"
            )));
        }
        let lags = lags
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.min(i))
            .collect();
        Ok(Self { lags })
    }

    /// `L_t = min(lag, t - 1)` for `len` tests.
    pub fn constant(lag: usize, len: usize) -> Self {
        Self {
            lags: (0..len).map(|i| lag.min(i)).collect(),
        }
    }

    /// Lags induced by contiguous batches: positions `1..=n` of a batch get
    /// lags `0..n-1`, so each test conflicts with its earlier batch-mates.
    pub fn from_batches(sizes: &[usize]) -> Self {
        Self {
            lags: sizes.iter().flat_map(|&n| 0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// 1-based lookup of the clipped lag.
    pub fn lag(&self, t: usize) -> usize {
        self.lags[t - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.lags
    }
}

/// Returns the first 1-based `t` where `L_t > L_{t-1} + 1`.
pub fn validate_lags(lags: &[usize]) -> std::result::Result<(), usize> {
    for (i, w) in lags.windows(2).enumerate() {
        if w[1] > w[0] + 1 {
            return Err(i + 2);
        }
    }
    Ok(())
}

/// Contiguous mini-batches flattened onto global test indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchLayout {
    sizes: Vec<usize>,
    /// `batch_of[t - 1]` is the 0-based batch containing test `t`.
    batch_of: Vec<usize>,
    /// `ends[b]` is the global index of the last test in batch `b`.
    ends: Vec<usize>,
}

impl BatchLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.iter().any(|&n| n == 0) {
            return Err(Error::Topology("batch sizes must be positive".into()));
        }
        let mut batch_of = Vec::with_capacity(sizes.iter().sum());
        let mut ends = Vec::with_capacity(sizes.len());
        for (b, &n) in sizes.iter().enumerate() {
            batch_of.extend(std::iter::repeat(b).take(n));
            ends.push(batch_of.len());
        }
        Ok(Self {
            sizes,
            batch_of,
            ends,
        })
    }

    /// Batches of `size` covering `total` tests; the last may be shorter.
    pub fn uniform(size: usize, total: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Topology("batch size must be positive".into()));
        }
        let mut sizes = vec![size; total / size];
        if total % size != 0 {
            sizes.push(total % size);
        }
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.batch_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch_of.is_empty()
    }

    /// 0-based batch of the 1-based test `t`.
    pub fn batch_of(&self, t: usize) -> usize {
        self.batch_of[t - 1]
    }

    /// Global index of the last test in `t`'s batch.
    pub fn batch_end(&self, t: usize) -> usize {
        self.ends[self.batch_of(t)]
    }

    /// 1-based position of `t` within its batch.
    pub fn position(&self, t: usize) -> usize {
        let b = self.batch_of(t);
        let start = if b == 0 { 0 } else { self.ends[b - 1] };
        t - start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regime {
    /// Synchronous testing under independence: every conflict set is empty.
    None,
    Async(DecisionSchedule),
    Lagged(LagSequence),
    /// Mini-batches; within-batch decision times default to the batch end.
    MiniBatch {
        layout: BatchLayout,
        schedule: Option<DecisionSchedule>,
    },
    General {
        schedule: DecisionSchedule,
        lags: LagSequence,
    },
}

/// Validated, immutable conflict structure shared by engines and drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictTopology {
    regime: Regime,
}

impl ConflictTopology {
    pub fn none() -> Self {
        Self {
            regime: Regime::None,
        }
    }

    pub fn asynchronous(schedule: DecisionSchedule) -> Self {
        Self {
            regime: Regime::Async(schedule),
        }
    }

    pub fn lagged(lags: LagSequence) -> Self {
        Self {
            regime: Regime::Lagged(lags),
        }
    }

    pub fn minibatch(layout: BatchLayout) -> Self {
        Self {
            regime: Regime::MiniBatch {
                layout,
                schedule: None,
            },
        }
    }

    /// Mini-batches with explicit within-batch decision times, each of which
    /// must fall inside its own batch.
    pub fn minibatch_with_schedule(layout: BatchLayout, schedule: DecisionSchedule) -> Result<Self> {
        if schedule.len() != layout.len() {
            return Err(Error::Topology("schedule and batch layout lengths differ".into()));
        }
        for t in 1..=layout.len() {
            match schedule.finish(t) {
                Some(e) if e <= layout.batch_end(t) => {}
                _ => {
                    return Err(Error::Topology(format!(
                        "test {t} must finish by the end of its batch ({})",
                        layout.batch_end(t)
                    )))
                }
            }
        }
        Ok(Self {
            regime: Regime::MiniBatch {
                layout,
                schedule: Some(schedule),
            },
        })
    }

    pub fn general(schedule: DecisionSchedule, lags: LagSequence) -> Result<Self> {
        if schedule.len() != lags.len() {
            return Err(Error::Topology("schedule and lag lengths differ".into()));
        }
        Ok(Self {
            regime: Regime::General { schedule, lags },
        })
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    /// Number of tests covered, or `None` for the unbounded synchronous regime.
    pub fn len(&self) -> Option<usize> {
        match &self.regime {
            Regime::None => None,
            Regime::Async(s) => Some(s.len()),
            Regime::Lagged(l) => Some(l.len()),
            Regime::MiniBatch { layout, .. } => Some(layout.len()),
            Regime::General { schedule, .. } => Some(schedule.len()),
        }
    }

    pub fn check_index(&self, t: usize) -> Result<()> {
        if t == 0 {
            return Err(Error::OutOfRange { index: 0, len: self.len().unwrap_or(0) });
        }
        match self.len() {
            Some(len) if t > len => Err(Error::OutOfRange { index: t, len }),
            _ => Ok(()),
        }
    }

    /// Whether test `i` belongs to `X^t`. Requires `1 <= i < t` and `t` in range.
    #[inline]
    pub fn is_conflicting(&self, i: usize, t: usize) -> bool {
        debug_assert!(i >= 1 && i < t);
        match &self.regime {
            Regime::None => false,
            Regime::Async(s) => s.finish(i).map_or(true, |e| e >= t),
            Regime::Lagged(l) => i + l.lag(t) >= t,
            Regime::MiniBatch { layout, .. } => layout.batch_of(i) == layout.batch_of(t),
            Regime::General { schedule, lags } => {
                schedule.finish(i).map_or(true, |e| e >= t) || i + lags.lag(t) >= t
            }
        }
    }

    /// `X^t`, in increasing order.
    pub fn conflict_set(&self, t: usize) -> Result<Vec<usize>> {
        self.check_index(t)?;
        Ok((1..t).filter(|&i| self.is_conflicting(i, t)).collect())
    }

    /// Scheduled decision index of test `j`; `None` if it never finishes.
    pub fn decision_index(&self, j: usize) -> Option<usize> {
        match &self.regime {
            Regime::None | Regime::Lagged(_) => Some(j),
            Regime::Async(s) => s.finish(j),
            Regime::MiniBatch { layout, schedule } => match schedule {
                Some(s) => s.finish(j),
                None => Some(layout.batch_end(j)),
            },
            Regime::General { schedule, .. } => schedule.finish(j),
        }
    }

    /// `tau_j = max{i : j ∈ X^i}`, or `j` when `j` never conflicts.
    ///
    /// Membership is scanned up to `horizon` (and the topology length); a
    /// test still conflicting at the scan limit reports the limit. Tests that
    /// never finish under an asynchronous schedule report `+inf`.
    pub fn last_conflict_time(&self, j: usize, horizon: usize) -> ExtIndex {
        match &self.regime {
            Regime::None => ExtIndex::from(j),
            Regime::Async(s) => match s.finish(j) {
                Some(e) => ExtIndex::from(e),
                None => ExtIndex::PosInf,
            },
            Regime::MiniBatch { layout, .. } => ExtIndex::from(layout.batch_end(j)),
            Regime::Lagged(_) | Regime::General { .. } => {
                if let Regime::General { schedule, .. } = &self.regime {
                    if schedule.finish(j).is_none() {
                        return ExtIndex::PosInf;
                    }
                }
                let limit = self.len().unwrap_or(horizon).min(horizon);
                let mut tau = j;
                let mut i = j + 1;
                while i <= limit && self.is_conflicting(j, i) {
                    tau = i;
                    i += 1;
                }
                ExtIndex::from(tau)
            }
        }
    }
}
