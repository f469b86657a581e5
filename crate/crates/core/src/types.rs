//! Shared vocabulary: hypothesis records, extended indices, decision
//! schedules and simulation ground truth.
//!
//! Test indices are 1-based everywhere in the public API. A test with index
//! `t` is the `t`-th test to start; "time" is measured in test starts, not
//! wall-clock.

use std::cmp::Ordering;
use std::fmt;

/// An integer index extended with `-inf` and `+inf`.
///
/// `r_k` is `-inf` when fewer than `k` rejections have become
/// non-conflicting; a last-conflict time is `+inf` for a test that never
/// finishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtIndex {
    NegInf,
    Finite(i64),
    PosInf,
}

impl ExtIndex {
    pub fn finite(self) -> Option<i64> {
        match self {
            ExtIndex::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtIndex::Finite(_))
    }

    /// `a - self` with the usual extended-real conventions
    /// (`a - (-inf) = +inf`, `a - (+inf) = -inf`).
    pub fn subtracted_from(self, a: i64) -> ExtIndex {
        match self {
            ExtIndex::NegInf => ExtIndex::PosInf,
            ExtIndex::PosInf => ExtIndex::NegInf,
            ExtIndex::Finite(v) => ExtIndex::Finite(a - v),
        }
    }
}

impl From<usize> for ExtIndex {
    fn from(v: usize) -> Self {
        ExtIndex::Finite(v as i64)
    }
}

impl PartialOrd for ExtIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtIndex::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for ExtIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtIndex::NegInf => write!(f, "-inf"),
            ExtIndex::PosInf => write!(f, "+inf"),
            ExtIndex::Finite(v) => write!(f, "{v}"),
        }
    }
}

/// Per-test state as seen by an observer of the engine.
///
/// `decision_index`, `p_value` and `rejected` are `None` exactly when the
/// outcome has not been reported yet. `candidate` is additionally `None` for
/// level rules without a candidacy threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisRecord {
    pub index: usize,
    pub decision_index: Option<usize>,
    pub p_value: Option<f64>,
    pub level: f64,
    pub candidacy_threshold: Option<f64>,
    pub rejected: Option<bool>,
    pub candidate: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordViolation {
    /// Position of the offending record in the stream (0-based).
    pub position: usize,
    pub index: usize,
    pub reason: String,
}

impl fmt::Display for RecordViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record #{} (test {}): {}", self.position, self.index, self.reason)
    }
}

/// Check every record invariant and report the first violation.
pub fn validate_record_stream(records: &[HypothesisRecord]) -> Result<(), RecordViolation> {
    for (position, rec) in records.iter().enumerate() {
        let fail = |reason: String| RecordViolation {
            position,
            index: rec.index,
            reason,
        };
        if rec.index == 0 {
            return Err(fail("indices are 1-based".into()));
        }
        if !(rec.level >= 0.0 && rec.level < 1.0) {
            return Err(fail(format!("level {} outside [0, 1)", rec.level)));
        }
        if let Some(lambda) = rec.candidacy_threshold {
            // zero only for a zero alpha-investing level
            if !(lambda > 0.0 && lambda < 1.0 || lambda == 0.0 && rec.level == 0.0) {
                return Err(fail(format!("candidacy threshold {lambda} outside (0, 1)")));
            }
        }
        if let Some(e) = rec.decision_index {
            if e < rec.index {
                return Err(fail(format!(
                    "finishes before start (decision index {e} < index {})",
                    rec.index
                )));
            }
        }
        let decided = rec.decision_index.is_some();
        if rec.p_value.is_some() != decided || rec.rejected.is_some() != decided {
            return Err(fail(
                "p-value, rejection and decision index must be known together".into(),
            ));
        }
        let expects_candidate = decided && rec.candidacy_threshold.is_some();
        if rec.candidate.is_some() != expects_candidate {
            return Err(fail("candidacy indicator inconsistent with threshold".into()));
        }
        if let (Some(p), Some(rejected)) = (rec.p_value, rec.rejected) {
            if !(0.0..=1.0).contains(&p) {
                return Err(fail(format!("p-value {p} outside [0, 1]")));
            }
            if rejected != (p <= rec.level) {
                return Err(fail(format!(
                    "rejection indicator disagrees with p = {p} vs level {}",
                    rec.level
                )));
            }
            if let (Some(lambda), Some(candidate)) = (rec.candidacy_threshold, rec.candidate) {
                if candidate != (p <= lambda) {
                    return Err(fail(format!(
                        "candidacy indicator disagrees with p = {p} vs threshold {lambda}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Null/non-null labels for a simulated trial; `true` marks a true null.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub null_mask: Vec<bool>,
}

impl GroundTruth {
    pub fn new(null_mask: Vec<bool>) -> Self {
        Self { null_mask }
    }

    pub fn len(&self) -> usize {
        self.null_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.null_mask.is_empty()
    }

    /// 1-based lookup.
    pub fn is_null(&self, index: usize) -> bool {
        self.null_mask[index - 1]
    }

    pub fn nonnull_count(&self) -> usize {
        self.null_mask.iter().filter(|&&n| !n).count()
    }
}

/// Decision times `E_1, E_2, ...`. The outcome of test `t` may be used by
/// level computations from step `E_t + 1` on. `None` means the test never
/// finishes within the stream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecisionSchedule {
    finish_times: Vec<Option<usize>>,
}

impl DecisionSchedule {
    pub fn new(finish_times: Vec<Option<usize>>) -> crate::Result<Self> {
        for (i, e) in finish_times.iter().enumerate() {
            if let Some(e) = e {
                if *e < i + 1 {
                    return Err(crate::Error::Topology(format!(
                        "decision index {e} of test {} precedes its start",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { finish_times })
    }

    pub fn from_finite(finish_times: Vec<usize>) -> crate::Result<Self> {
        Self::new(finish_times.into_iter().map(Some).collect())
    }

    /// `E_t = t` for every test.
    pub fn synchronous(len: usize) -> Self {
        Self {
            finish_times: (1..=len).map(Some).collect(),
        }
    }

    /// No test ever finishes.
    pub fn never(len: usize) -> Self {
        Self {
            finish_times: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.finish_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.finish_times.is_empty()
    }

    /// 1-based lookup.
    pub fn finish(&self, index: usize) -> Option<usize> {
        self.finish_times[index - 1]
    }

    pub fn finish_times(&self) -> &[Option<usize>] {
        &self.finish_times
    }
}
