//! Discount sequences `{gamma_j}`: non-negative, non-increasing, summing to
//! one. Every level rule spends its budget through one of these.
//!
//! Weights are normalized over `1..=horizon`; mass beyond the horizon is
//! dropped and the remainder renormalized, so `gamma_j = 0` for
//! `j > horizon` and the full series sums to one up to rounding.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::types::ExtIndex;
use crate::{Error, Result};

pub const DEFAULT_HORIZON: usize = 10_000_000;

/// Leading weights kept in memory; later indices are evaluated on demand.
const CACHE_LEN: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GammaKind {
    /// `gamma_j ∝ log(max(j, 2)) / (j * exp(sqrt(log j)))`.
    LogDecay,
    /// `gamma_j ∝ j^(-exponent)`, exponent > 1.
    PowerDecay { exponent: f64 },
}

impl Default for GammaKind {
    fn default() -> Self {
        GammaKind::LogDecay
    }
}

impl GammaKind {
    fn unnormalized(self, j: usize) -> f64 {
        let jf = j as f64;
        match self {
            GammaKind::LogDecay => {
                let lj = jf.ln();
                jf.max(2.0).ln() / (jf * lj.sqrt().exp())
            }
            GammaKind::PowerDecay { exponent } => jf.powf(-exponent),
        }
    }
}

#[derive(Debug)]
struct Inner {
    kind: Option<GammaKind>,
    horizon: usize,
    scale: f64,
    cached: Vec<f64>,
}

/// A normalized discount sequence. Cheap to clone.
#[derive(Debug, Clone)]
pub struct GammaSequence {
    inner: Arc<Inner>,
}

type NormKey = (u8, u64, usize);

fn norm_cache() -> &'static Mutex<HashMap<NormKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<NormKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Neumaier-compensated sum of the first `horizon` unnormalized weights.
fn series_total(kind: GammaKind, horizon: usize) -> f64 {
    let key = match kind {
        GammaKind::LogDecay => (0u8, 0u64, horizon),
        GammaKind::PowerDecay { exponent } => (1u8, exponent.to_bits(), horizon),
    };
    if let Some(v) = norm_cache().lock().unwrap().get(&key) {
        return *v;
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    // Smallest terms first keeps the running sum well conditioned.
    for j in (1..=horizon).rev() {
        let x = kind.unnormalized(j);
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    let total = sum + comp;
    norm_cache().lock().unwrap().insert(key, total);
    total
}

/// Build a normalized sequence of the given kind.
pub fn make_gamma(kind: GammaKind, horizon: usize) -> Result<GammaSequence> {
    if horizon < 1 {
        return Err(Error::Gamma("horizon must be at least 1".into()));
    }
    if let GammaKind::PowerDecay { exponent } = kind {
        if !(exponent > 1.0) || !exponent.is_finite() {
            return Err(Error::Gamma(format!(
                "power-decay exponent must be finite and > 1 (got {exponent})"
            )));
        }
    }
    let scale = 1.0 / series_total(kind, horizon);
    let cached = (1..=horizon.min(CACHE_LEN))
        .map(|j| scale * kind.unnormalized(j))
        .collect();
    Ok(GammaSequence {
        inner: Arc::new(Inner {
            kind: Some(kind),
            horizon,
            scale,
            cached,
        }),
    })
}

impl GammaSequence {
    /// A sequence given by explicit leading weights; zero afterwards.
    ///
    /// Weights must be non-negative, non-increasing and sum to at most one
    /// (a sum short of one simply leaves budget unspent).
    pub fn explicit(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Gamma("explicit sequence is empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Gamma("weights must be finite and non-negative".into()));
        }
        if weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Gamma("weights must be non-increasing".into()));
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + 1e-8 {
            return Err(Error::Gamma(format!("weights sum to {total} > 1")));
        }
        Ok(GammaSequence {
            inner: Arc::new(Inner {
                kind: None,
                horizon: weights.len(),
                scale: 1.0,
                cached: weights,
            }),
        })
    }

    pub fn default_log_decay() -> Self {
        make_gamma(GammaKind::LogDecay, DEFAULT_HORIZON).expect("default gamma is valid")
    }

    pub fn kind(&self) -> Option<GammaKind> {
        self.inner.kind
    }

    pub fn horizon(&self) -> usize {
        self.inner.horizon
    }

    /// `gamma_j` for a plain positive index; zero outside `1..=horizon`.
    #[inline]
    pub fn at(&self, j: i64) -> f64 {
        if j < 1 {
            return 0.0;
        }
        let j = j as usize;
        if let Some(w) = self.inner.cached.get(j - 1) {
            return *w;
        }
        match self.inner.kind {
            Some(kind) if j <= self.inner.horizon => self.inner.scale * kind.unnormalized(j),
            _ => 0.0,
        }
    }

    /// Sum of `gamma_1..=gamma_n`.
    pub fn partial_sum(&self, n: usize) -> f64 {
        (1..=n as i64).map(|j| self.at(j)).sum()
    }
}

/// `gamma_j` with the extended-index conventions: zero for `j <= 0`,
/// `j = -inf` and `j = +inf`.
pub fn gamma_at(seq: &GammaSequence, j: ExtIndex) -> f64 {
    match j {
        ExtIndex::Finite(v) => seq.at(v),
        ExtIndex::NegInf | ExtIndex::PosInf => 0.0,
    }
}
