//! Synthetic trials: Gaussian observations with sparse non-null means,
//! optional banded dependence, p-values and geometric decision times.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, Distribution, Geometric, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::types::{DecisionSchedule, GroundTruth};
use crate::{Error, Result};

/// Eigenvalue floor used when repairing a non-PSD covariance.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Largest Frobenius change the repair may introduce before giving up.
pub const REPAIR_TOLERANCE: f64 = 1e-2;

/// Deterministic RNG for `(seed, stream)`. Streams are independent ChaCha
/// streams under one key, so trial `i` draws the same numbers whatever order
/// trials run in.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlternativeSpec {
    PointMass { mu_c: f64 },
    /// Non-null means drawn from `N(0, 2 log M)`.
    GaussianMinimax,
}

impl AlternativeSpec {
    /// The two-sided test goes with the symmetric alternative.
    pub fn natural_sidedness(&self) -> Sided {
        match self {
            AlternativeSpec::PointMass { .. } => Sided::One,
            AlternativeSpec::GaussianMinimax => Sided::Two,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CovarianceSpec {
    Identity,
    /// `rho^|i-j|` for `|i-j| <= lag`, zero beyond.
    BandedToeplitz { lag: usize, rho: f64 },
    FullAr1 { rho: f64 },
    /// Independent blocks of `block` consecutive observations, each with
    /// full AR(1) correlation; the last block may be shorter.
    BlockAr1 { block: usize, rho: f64 },
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        let rho = match *self {
            CovarianceSpec::Identity => return Ok(()),
            CovarianceSpec::BandedToeplitz { rho, .. } | CovarianceSpec::FullAr1 { rho } => rho,
            CovarianceSpec::BlockAr1 { block, rho } => {
                if block == 0 {
                    return Err(Error::Simulation("block size must be positive".into()));
                }
                rho
            }
        };
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Simulation(format!("rho {rho} outside [0, 1)")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sided {
    One,
    Two,
}

/// `Sigma(m, lag, rho)`: unit diagonal, `rho^|i-j|` within the band.
pub fn toeplitz_sigma(m: usize, lag: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| {
        let d = i.abs_diff(j);
        if d == 0 {
            1.0
        } else if d <= lag {
            rho.powi(d as i32)
        } else {
            0.0
        }
    })
}

/// Nearest-PSD repair: symmetrize, clip eigenvalues at [`EIGEN_FLOOR`],
/// rescale to unit diagonal. Returns the matrix and whether clipping fired.
pub fn repair_psd(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&v| v >= EIGEN_FLOOR) {
        return Ok((sym, false));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let q = &eig.eigenvectors;
    let rebuilt = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    let d = rebuilt.diagonal().map(|v| 1.0 / v.sqrt());
    let scaled = DMatrix::from_fn(rebuilt.nrows(), rebuilt.ncols(), |i, j| {
        rebuilt[(i, j)] * d[i] * d[j]
    });
    let change = (&scaled - &sym).norm();
    if change > REPAIR_TOLERANCE {
        return Err(Error::Simulation(format!(
            "PSD repair moved the covariance by {change:.3e} (Frobenius) > {REPAIR_TOLERANCE}"
        )));
    }
    Ok((scaled, true))
}

/// Lower Cholesky factor of `sigma`, repairing it first if needed.
fn factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = sigma.clone().cholesky() {
        return Ok(c.l());
    }
    let (repaired, _) = repair_psd(sigma)?;
    repaired
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Simulation("covariance not factorizable after repair".into()))
}

/// Draws `N(0, Sigma)` vectors for a fixed covariance.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    Identity,
    Ar1 { rho: f64 },
    BlockAr1 { block: usize, rho: f64 },
    /// Lower Cholesky factor with `l[(i, j)] = 0` for `i - j > band`.
    Factor { l: DMatrix<f64>, band: usize },
}

impl NoiseSampler {
    pub fn new(cov: &CovarianceSpec, m: usize) -> Result<Self> {
        cov.validate()?;
        Ok(match *cov {
            CovarianceSpec::Identity => NoiseSampler::Identity,
            CovarianceSpec::FullAr1 { rho } => NoiseSampler::Ar1 { rho },
            CovarianceSpec::BlockAr1 { block, rho } => NoiseSampler::BlockAr1 { block, rho },
            CovarianceSpec::BandedToeplitz { lag, rho } => {
                if lag == 0 || rho == 0.0 {
                    NoiseSampler::Identity
                } else if lag + 1 >= m {
                    NoiseSampler::Ar1 { rho }
                } else {
                    NoiseSampler::banded(factor(&toeplitz_sigma(m, lag, rho))?)
                }
            }
        })
    }

    pub fn from_sigma(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Simulation("covariance must be square".into()));
        }
        if sigma.diagonal().iter().any(|&v| (v - 1.0).abs() > 1e-12) {
            return Err(Error::Simulation("covariance must have unit diagonal".into()));
        }
        Ok(NoiseSampler::banded(factor(sigma)?))
    }

    fn banded(l: DMatrix<f64>) -> Self {
        let n = l.nrows();
        let band = (0..n)
            .flat_map(|i| (0..i).find(|&j| l[(i, j)] != 0.0).map(|j| i - j))
            .max()
            .unwrap_or(0);
        NoiseSampler::Factor { l, band }
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<f64> {
        let mut eps: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        match self {
            NoiseSampler::Identity => {}
            NoiseSampler::Ar1 { rho } => ar1_in_place(&mut eps, *rho),
            NoiseSampler::BlockAr1 { block, rho } => {
                for chunk in eps.chunks_mut(*block) {
                    ar1_in_place(chunk, *rho);
                }
            }
            NoiseSampler::Factor { l, band } => {
                return (0..m)
                    .map(|i| {
                        let lo = i.saturating_sub(*band);
                        (lo..=i).map(|j| l[(i, j)] * eps[j]).sum()
                    })
                    .collect();
            }
        }
        eps
    }
}

/// `Z_1 = e_1`, `Z_i = rho Z_{i-1} + sqrt(1 - rho^2) e_i`.
fn ar1_in_place(eps: &mut [f64], rho: f64) {
    let s = (1.0 - rho * rho).sqrt();
    for i in 1..eps.len() {
        eps[i] = rho * eps[i - 1] + s * eps[i];
    }
}

/// Draw from `N(mu, Sigma)` (after repair, if `Sigma` is not PSD).
pub fn sample_correlated_normals(sigma: &DMatrix<f64>, mu: &[f64], seed: u64) -> Result<Vec<f64>> {
    if sigma.nrows() != mu.len() {
        return Err(Error::Simulation("mean and covariance sizes differ".into()));
    }
    let sampler = NoiseSampler::from_sigma(sigma)?;
    let mut rng = trial_rng(seed, 0);
    let mut z = sampler.sample(mu.len(), &mut rng);
    for (zi, m) in z.iter_mut().zip(mu) {
        *zi += m;
    }
    Ok(z)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn to_pvalue(z: f64, sided: Sided) -> f64 {
    match sided {
        Sided::One => normal_cdf(-z),
        Sided::Two => (2.0 * normal_cdf(-z.abs())).min(1.0),
    }
}

pub fn to_pvalues(observations: &[f64], sided: Sided) -> Vec<f64> {
    observations.iter().map(|&z| to_pvalue(z, sided)).collect()
}

/// `E_j = j - 1 + G_j` with `G_j ~ Geom(p)` on `{1, 2, ...}`.
pub fn sample_decision_times_with<R: Rng + ?Sized>(
    m: usize,
    p_geom: f64,
    rng: &mut R,
) -> Result<DecisionSchedule> {
    if !(p_geom > 0.0 && p_geom <= 1.0) {
        return Err(Error::Simulation(format!("geometric parameter {p_geom} outside (0, 1]")));
    }
    // rand_distr's Geometric counts failures, i.e. G - 1.
    let geom = Geometric::new(p_geom).map_err(|e| Error::Simulation(e.to_string()))?;
    let times = (1..=m)
        .map(|j| j.saturating_add(geom.sample(rng).min(u32::MAX as u64) as usize))
        .collect();
    DecisionSchedule::from_finite(times)
}

pub fn sample_decision_times(m: usize, p_geom: f64, seed: u64) -> Result<DecisionSchedule> {
    sample_decision_times_with(m, p_geom, &mut trial_rng(seed, 0))
}

/// Everything needed to draw trials for one configuration. Building it
/// factors the covariance once.
#[derive(Debug, Clone)]
pub struct TrialGenerator {
    m: usize,
    pi1: f64,
    alt: AlternativeSpec,
    noise: Arc<NoiseSampler>,
}

impl TrialGenerator {
    pub fn new(m: usize, pi1: f64, alt: AlternativeSpec, cov: &CovarianceSpec) -> Result<Self> {
        if m == 0 {
            return Err(Error::Simulation("M must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&pi1) {
            return Err(Error::Simulation(format!("pi1 {pi1} outside [0, 1]")));
        }
        if let AlternativeSpec::PointMass { mu_c } = alt {
            if !mu_c.is_finite() {
                return Err(Error::Simulation("mu_c must be finite".into()));
            }
        }
        Ok(Self {
            m,
            pi1,
            alt,
            noise: Arc::new(NoiseSampler::new(cov, m)?),
        })
    }

    /// Same covariance, different non-null proportion.
    pub fn with_pi1(&self, pi1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi1) {
            return Err(Error::Simulation(format!("pi1 {pi1} outside [0, 1]")));
        }
        Ok(Self { pi1, ..self.clone() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Observations `Z` and the null mask.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, GroundTruth) {
        let xi = Bernoulli::new(self.pi1).expect("pi1 validated");
        let nonnull: Vec<bool> = (0..self.m).map(|_| xi.sample(rng)).collect();
        let sd = (2.0 * (self.m as f64).ln()).sqrt();
        let mu: Vec<f64> = nonnull
            .iter()
            .map(|&nn| {
                if !nn {
                    return 0.0;
                }
                match self.alt {
                    AlternativeSpec::PointMass { mu_c } => mu_c,
                    AlternativeSpec::GaussianMinimax => {
                        if sd > 0.0 {
                            Normal::new(0.0, sd).expect("finite sd").sample(rng)
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        let mut z = self.noise.sample(self.m, rng);
        for (zi, m) in z.iter_mut().zip(&mu) {
            *zi += m;
        }
        let truth = GroundTruth::new(nonnull.into_iter().map(|nn| !nn).collect());
        (z, truth)
    }
}

pub fn sample_trial(
    m: usize,
    pi1: f64,
    alt: AlternativeSpec,
    cov: &CovarianceSpec,
    seed: u64,
) -> Result<(Vec<f64>, GroundTruth)> {
    let gen = TrialGenerator::new(m, pi1, alt, cov)?;
    Ok(gen.sample(&mut trial_rng(seed, 0)))
}
