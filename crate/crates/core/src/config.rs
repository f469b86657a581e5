//! Experiment configuration: a flat TOML file resolved against
//! per-experiment defaults.
//!
//! ```toml
//! experiment = "VARY_ASYNC"
//! n_trials = 200
//! pi1_grid = [0.1, 0.5, 0.9]
//! grid = [1.0, 0.02]        # swept conflict parameter (p, L or batch size)
//! base_seed = 7
//!
//! gamma.kind = "LOG_DECAY"
//! algo.name = "LORD_PP,SAFFRON_CONST_LAMBDA"
//! algo.alpha = 0.05
//! data.M = 1000
//! data.alt = "POINT_MASS"
//! data.mu_c = 3.0
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{Algorithm, EngineParams};
use crate::gamma::{make_gamma, GammaKind, GammaSequence, DEFAULT_HORIZON};
use crate::simgen::{AlternativeSpec, CovarianceSpec, Sided};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Experiment {
    VaryAsync,
    VaryLag,
    VaryMinibatch,
    CompareDep,
    NaiveFig3,
    PrdsLond,
    StoppingMfdr,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::VaryAsync,
        Experiment::VaryLag,
        Experiment::VaryMinibatch,
        Experiment::CompareDep,
        Experiment::NaiveFig3,
        Experiment::PrdsLond,
        Experiment::StoppingMfdr,
        Experiment::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::VaryAsync => "VARY_ASYNC",
            Experiment::VaryLag => "VARY_LAG",
            Experiment::VaryMinibatch => "VARY_MINIBATCH",
            Experiment::CompareDep => "COMPARE_DEP",
            Experiment::NaiveFig3 => "NAIVE_FIG3",
            Experiment::PrdsLond => "PRDS_LOND",
            Experiment::StoppingMfdr => "STOPPING_MFDR",
            Experiment::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase();
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegimeKind {
    None,
    Async,
    Lagged,
    Minibatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CovKind {
    Identity,
    BandedToeplitz,
    FullAr1,
    BlockAr1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AltKind {
    PointMass,
    GaussianMinimax,
}

fn parse_upper<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> Result<T> {
    let key = s.trim().to_ascii_uppercase().replace('-', "_");
    serde_json::from_value(serde_json::Value::String(key))
        .map_err(|_| Error::Config(format!("unknown {what} '{s}'")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGamma {
    kind: Option<String>,
    exponent: Option<f64>,
    horizon: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConflict {
    regime: Option<String>,
    geom_p: Option<f64>,
    lag: Option<usize>,
    batch_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgo {
    name: Option<String>,
    alpha: Option<f64>,
    w0: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    #[serde(rename = "M")]
    m: Option<usize>,
    pi1: Option<f64>,
    alt: Option<String>,
    mu_c: Option<f64>,
    cov: Option<String>,
    rho: Option<f64>,
    #[serde(rename = "L")]
    l: Option<usize>,
    sided: Option<String>,
    geom_p: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    n_trials: Option<usize>,
    pi1_grid: Option<Vec<f64>>,
    grid: Option<Vec<f64>>,
    base_seed: Option<u64>,
    t_max: Option<usize>,
    #[serde(default)]
    gamma: RawGamma,
    #[serde(default)]
    conflict: RawConflict,
    #[serde(default)]
    algo: RawAlgo,
    #[serde(default)]
    data: RawData,
}

/// Fully resolved experiment description. Its JSON form is what the config
/// hash covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub algorithms: Vec<Algorithm>,
    pub alpha: f64,
    pub w0: f64,
    pub lambda: f64,
    pub gamma: GammaKind,
    pub gamma_horizon: usize,
    pub m: usize,
    pub alt: AlternativeSpec,
    pub sided: Sided,
    pub cov: CovKind,
    pub rho: f64,
    /// Band of the Toeplitz covariance; `None` ties it to the conflict lag.
    pub cov_lag: Option<usize>,
    pub regime: RegimeKind,
    pub geom_p: f64,
    pub lag: usize,
    pub batch_size: usize,
    pub pi1_grid: Vec<f64>,
    /// Values of the swept conflict parameter: `geom_p` for ASYNC, `lag`
    /// for LAGGED, `batch_size` for MINIBATCH. Empty means no sweep.
    pub grid: Vec<f64>,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Stopping-time horizon; set only for STOPPING_MFDR.
    pub t_max: Option<usize>,
}

const PI1_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

impl ExperimentConfig {
    /// Defaults for a named experiment.
    pub fn preset(experiment: Experiment) -> Self {
        use Algorithm::*;
        let mut c = ExperimentConfig {
            experiment,
            algorithms: vec![LordPlusPlus, SaffronConstLambda, AlphaSpending, Uncorrected],
            alpha: 0.05,
            w0: 0.025,
            lambda: 0.5,
            gamma: GammaKind::LogDecay,
            gamma_horizon: DEFAULT_HORIZON,
            m: 1000,
            alt: AlternativeSpec::PointMass { mu_c: 3.0 },
            sided: Sided::One,
            cov: CovKind::Identity,
            rho: 0.5,
            cov_lag: None,
            regime: RegimeKind::None,
            geom_p: 1.0,
            lag: 0,
            batch_size: 1,
            pi1_grid: PI1_GRID.to_vec(),
            grid: Vec::new(),
            n_trials: 200,
            base_seed: 0,
            t_max: None,
        };
        match experiment {
            Experiment::VaryAsync => {
                c.regime = RegimeKind::Async;
                c.grid = vec![1.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 150.0];
            }
            Experiment::VaryLag => {
                c.regime = RegimeKind::Lagged;
                c.cov = CovKind::BandedToeplitz;
                c.grid = vec![0.0, 50.0, 100.0, 150.0];
            }
            Experiment::VaryMinibatch => {
                c.regime = RegimeKind::Minibatch;
                c.cov = CovKind::BlockAr1;
                c.grid = vec![1.0, 50.0, 100.0, 150.0];
            }
            Experiment::CompareDep => {
                c.regime = RegimeKind::Lagged;
                c.cov = CovKind::BandedToeplitz;
                c.lag = 150;
                c.algorithms = vec![LordPlusPlus, SaffronConstLambda, LordDiscounted, AlphaSpending];
            }
            Experiment::NaiveFig3 => {
                c.regime = RegimeKind::Async;
                c.geom_p = 1.0 / 150.0;
                c.algorithms = vec![NaiveCompletedOnly];
            }
            Experiment::PrdsLond => {
                c.cov = CovKind::FullAr1;
                c.algorithms = vec![Lond, ReshapedLond];
            }
            Experiment::StoppingMfdr => {
                c.regime = RegimeKind::Async;
                c.geom_p = 1.0 / 50.0;
                c.algorithms = vec![LordPlusPlus, SaffronConstLambda];
                c.n_trials = 500;
                c.t_max = Some(500);
            }
            Experiment::Custom => {
                c.algorithms = vec![LordPlusPlus];
            }
        }
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let experiment = match &raw.experiment {
            Some(s) => s.parse()?,
            None => Experiment::Custom,
        };
        let mut c = Self::preset(experiment);

        if let Some(name) = &raw.algo.name {
            c.algorithms = name
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?;
        }
        if let Some(a) = raw.algo.alpha {
            c.alpha = a;
            c.w0 = a / 2.0;
        }
        if let Some(w) = raw.algo.w0 {
            c.w0 = w;
        }
        if let Some(l) = raw.algo.lambda {
            c.lambda = l;
        }

        if let Some(k) = &raw.gamma.kind {
            c.gamma = match k.trim().to_ascii_uppercase().as_str() {
                "LOG_DECAY" => GammaKind::LogDecay,
                "POWER_DECAY" => GammaKind::PowerDecay {
                    exponent: raw.gamma.exponent.unwrap_or(2.0),
                },
                _ => return Err(Error::Config(format!("unknown gamma kind '{k}'"))),
            };
        } else if raw.gamma.exponent.is_some() {
            return Err(Error::Config("gamma.exponent requires gamma.kind = POWER_DECAY".into()));
        }
        if let Some(h) = raw.gamma.horizon {
            c.gamma_horizon = h;
        }

        if let Some(r) = &raw.conflict.regime {
            c.regime = parse_upper(r, "conflict regime")?;
        }
        // data.geom_p is accepted as an alias of conflict.geom_p.
        if let Some(p) = raw.conflict.geom_p.or(raw.data.geom_p) {
            c.geom_p = p;
        }
        if let Some(l) = raw.conflict.lag {
            c.lag = l;
        }
        if let Some(n) = raw.conflict.batch_size {
            c.batch_size = n;
        }

        if let Some(m) = raw.data.m {
            c.m = m;
        }
        let alt_kind = match &raw.data.alt {
            Some(a) => Some(parse_upper::<AltKind>(a, "alternative")?),
            None => None,
        };
        match (alt_kind, raw.data.mu_c) {
            (Some(AltKind::GaussianMinimax), _) => c.alt = AlternativeSpec::GaussianMinimax,
            (Some(AltKind::PointMass), mu) => {
                c.alt = AlternativeSpec::PointMass { mu_c: mu.unwrap_or(3.0) }
            }
            (None, Some(mu)) => c.alt = AlternativeSpec::PointMass { mu_c: mu },
            (None, None) => {}
        }
        c.sided = match &raw.data.sided {
            Some(s) => parse_upper(s, "sidedness")?,
            None => c.alt.natural_sidedness(),
        };
        if let Some(k) = &raw.data.cov {
            c.cov = parse_upper(k, "covariance")?;
        }
        if let Some(r) = raw.data.rho {
            c.rho = r;
        }
        if raw.data.l.is_some() {
            c.cov_lag = raw.data.l;
        }

        if let Some(g) = raw.pi1_grid {
            c.pi1_grid = g;
        } else if let Some(p) = raw.data.pi1 {
            c.pi1_grid = vec![p];
        }
        if let Some(g) = raw.grid {
            c.grid = g;
        }
        if let Some(n) = raw.n_trials {
            c.n_trials = n;
        }
        if let Some(s) = raw.base_seed.or(raw.data.seed) {
            c.base_seed = s;
        }
        if raw.t_max.is_some() {
            c.t_max = raw.t_max;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms".into()));
        }
        if self.pi1_grid.is_empty() {
            return Err(Error::Config("pi1_grid is empty".into()));
        }
        if let Some(p) = self.pi1_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("pi1 {p} outside [0, 1]")));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("data.M must be at least 1".into()));
        }
        if self.regime == RegimeKind::None && !self.grid.is_empty() {
            return Err(Error::Config("grid given but conflict.regime is NONE".into()));
        }
        for a in &self.algorithms {
            self.engine_params(*a).validate()?;
        }
        make_gamma(self.gamma, self.gamma_horizon.min(1))?;
        for point in self.grid_points() {
            let (_, cov) = self.point_setup(point)?;
            cov.validate()?;
        }
        Ok(())
    }

    pub fn engine_params(&self, algorithm: Algorithm) -> EngineParams {
        EngineParams::new(algorithm, self.alpha)
            .with_w0(self.w0)
            .with_lambda(self.lambda)
    }

    pub fn gamma_sequence(&self) -> Result<GammaSequence> {
        make_gamma(self.gamma, self.gamma_horizon)
    }

    /// Grid values to run; `None` is the single unswept point.
    pub fn grid_points(&self) -> Vec<Option<f64>> {
        if self.grid.is_empty() {
            vec![None]
        } else {
            self.grid.iter().copied().map(Some).collect()
        }
    }

    /// Conflict parameters and covariance at one grid point.
    pub fn point_setup(&self, point: Option<f64>) -> Result<(ConflictParams, CovarianceSpec)> {
        let mut cp = ConflictParams {
            regime: self.regime,
            geom_p: self.geom_p,
            lag: self.lag,
            batch_size: self.batch_size,
        };
        if let Some(v) = point {
            let as_count = || -> Result<usize> {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Config(format!("grid value {v} must be a non-negative integer")))
                }
            };
            match self.regime {
                RegimeKind::Async => cp.geom_p = v,
                RegimeKind::Lagged => cp.lag = as_count()?,
                RegimeKind::Minibatch => cp.batch_size = as_count()?,
                RegimeKind::None => {}
            }
        }
        match cp.regime {
            RegimeKind::Async if !(cp.geom_p > 0.0 && cp.geom_p <= 1.0) => {
                return Err(Error::Config(format!("geom_p {} outside (0, 1]", cp.geom_p)))
            }
            RegimeKind::Minibatch if cp.batch_size == 0 => {
                return Err(Error::Config("batch_size must be positive".into()))
            }
            _ => {}
        }
        let band = self.cov_lag.unwrap_or(cp.lag);
        let block = self.cov_lag.map_or(cp.batch_size, |l| l + 1);
        let cov = match self.cov {
            CovKind::Identity => CovarianceSpec::Identity,
            CovKind::BandedToeplitz => CovarianceSpec::BandedToeplitz {
                lag: band,
                rho: self.rho,
            },
            CovKind::FullAr1 => CovarianceSpec::FullAr1 { rho: self.rho },
            CovKind::BlockAr1 => CovarianceSpec::BlockAr1 {
                block,
                rho: self.rho,
            },
        };
        Ok((cp, cov))
    }

    /// Short hex digest of the resolved configuration.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictParams {
    pub regime: RegimeKind,
    pub geom_p: f64,
    pub lag: usize,
    pub batch_size: usize,
}
