use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ks::KsConfig;
use crate::mrenkf::{coarse_to_fine, CovStrategy, ScaleObsConfig, ScaleSettings};
use crate::wavelet::{FilterPair, MultiLevelCoeffs, Wavelet};

/// Which filter the twin experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// Plain ETKF on the physical-space observation.
    Enkf,
    /// Scale-separated ETKF.
    Mrenkf,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "enkf" => Ok(FilterKind::Enkf),
            "mrenkf" => Ok(FilterKind::Mrenkf),
            other => Err(Error::Parse(format!(
                "unknown filter `{other}` (expected enkf or mrenkf)"
            ))),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Enkf => "enkf",
            FilterKind::Mrenkf => "mrenkf",
        })
    }
}

/// Scale-dependent observation noise: white noise of standard deviation
/// `sigmas[idx]` added to each wavelet level of the clean observation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub wavelet: Wavelet,
    pub levels: usize,
    /// Coarse first: `sigmas[0]` is level `N+1`, `sigmas[N]` is level 1.
    pub sigmas: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            wavelet: Wavelet::DB9,
            levels: 4,
            sigmas: vec![0.75, 0.75, 1.65, 1.0, 0.0008],
        }
    }
}

impl NoiseConfig {
    pub fn filter(&self) -> FilterPair {
        FilterPair::new(self.wavelet)
    }

    /// σ of level `i ∈ {N+1, …, 1}`.
    pub fn sigma(&self, level: usize) -> Result<f64> {
        let idx = crate::wavelet::level_to_index(level, self.levels)?;
        Ok(self.sigmas[idx])
    }

    /// Physical-space noise variance averaged over grid points,
    /// `Σ_i |block_i| σ_i² / n`. The transform is orthogonal, so this is the
    /// expected pooled variance of `noisy − clean`.
    pub fn pooled_variance(&self, n: usize) -> Result<f64> {
        let lengths = MultiLevelCoeffs::block_lengths(n, self.levels)?;
        Ok(lengths
            .iter()
            .zip(&self.sigmas)
            .map(|(&len, s)| len as f64 * s * s)
            .sum::<f64>()
            / n as f64)
    }
}

/// Settings of the scale-separated filter inside the twin experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MrenkfSettings {
    pub wavelet: Wavelet,
    pub levels: usize,
    /// Coarse first, one per level.
    pub scales: Vec<ScaleSettings>,
    /// Level labels in assimilation order.
    pub order: Vec<usize>,
}

impl MrenkfSettings {
    /// Per-level defaults used by the twin experiment (see the README for
    /// how they were chosen).
    pub fn tuned_default() -> Self {
        let lambdas = [10.0, 10.0, 10.0, 1.0, 10.0];
        let rhos = [1.0, 1.0, 1.0, 1.0, 1.0];
        let scales = lambdas
            .iter()
            .zip(rhos)
            .map(|(&lambda, rho)| ScaleSettings {
                strategy: CovStrategy::Diagonal,
                lambda,
                rho,
                sample_count: 1000,
            })
            .collect();
        MrenkfSettings {
            wavelet: Wavelet::DB9,
            levels: 4,
            scales,
            order: coarse_to_fine(4),
        }
    }

    pub fn scale_config(&self) -> ScaleObsConfig {
        ScaleObsConfig {
            levels: self.levels,
            filter: FilterPair::new(self.wavelet),
            scales: self.scales.clone(),
            order: self.order.clone(),
        }
    }
}

/// Rank-histogram sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSettings {
    /// Equally spaced grid points ranked at each sampled cycle.
    pub sample_points: usize,
    /// Rank every `cycle_stride`-th assimilation cycle.
    pub cycle_stride: usize,
    /// Rank the forecast (pre-analysis) ensemble; otherwise the analysis.
    pub use_forecast: bool,
}

impl Default for RankSettings {
    fn default() -> Self {
        RankSettings {
            sample_points: 50,
            cycle_stride: 1,
            use_forecast: true,
        }
    }
}

/// Everything that determines a twin-experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinExperimentConfig {
    pub ks: KsConfig,
    /// Final time `T`.
    pub horizon: f64,
    /// Model steps between observations.
    pub obs_stride: usize,
    pub ensemble_size: usize,
    /// Standard deviation of the white noise added to `u₀` per member.
    pub init_spread: f64,
    pub noise: NoiseConfig,
    pub filter: FilterKind,
    /// Inflation of the plain EnKF.
    pub enkf_rho: f64,
    /// Observation variance assumed by both filters (`R = v I`); `None`
    /// means the pooled variance of the noise model.
    pub obs_variance: Option<f64>,
    pub mrenkf: MrenkfSettings,
    pub rank: RankSettings,
    /// Marker coordinates for pointwise tracking output.
    pub markers: Vec<f64>,
    pub seed: u64,
}

impl Default for TwinExperimentConfig {
    fn default() -> Self {
        TwinExperimentConfig {
            ks: KsConfig::default(),
            horizon: 300.0,
            obs_stride: 20,
            ensemble_size: 50,
            init_spread: 0.8,
            noise: NoiseConfig::default(),
            filter: FilterKind::Mrenkf,
            enkf_rho: 1.0,
            obs_variance: None,
            mrenkf: MrenkfSettings::tuned_default(),
            rank: RankSettings::default(),
            markers: vec![-7.3 * PI, 0.0, 11.0 * PI],
            seed: 0,
        }
    }
}

impl TwinExperimentConfig {
    /// Number of assimilation cycles, `⌊T / (dt · stride)⌋`.
    pub fn cycles(&self) -> usize {
        let interval = self.ks.dt * self.obs_stride as f64;
        ((self.horizon / interval) + 1e-9).floor() as usize
    }

    pub fn total_steps(&self) -> usize {
        self.cycles() * self.obs_stride
    }

    /// Variance of the diagonal `R` handed to the filters.
    pub fn effective_obs_variance(&self) -> Result<f64> {
        match self.obs_variance {
            Some(v) => Ok(v),
            None => self.noise.pooled_variance(self.ks.n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ks.validate()?;
        if self.obs_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "obs_stride",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if self.cycles() == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon,
                reason: "no assimilation cycle fits before the horizon",
            });
        }
        if self.ensemble_size < 2 {
            return Err(Error::InvalidParameter {
                name: "ensemble.size",
                value: self.ensemble_size as f64,
                reason: "need at least 2 members",
            });
        }
        if !(self.init_spread >= 0.0 && self.init_spread.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ensemble.init_spread",
                value: self.init_spread,
                reason: "must be non-negative",
            });
        }
        MultiLevelCoeffs::block_lengths(self.ks.n, self.noise.levels)?;
        if self.noise.sigmas.len() != self.noise.levels + 1 {
            return Err(Error::LengthMismatch {
                what: "noise sigma list",
                expected: self.noise.levels + 1,
                found: self.noise.sigmas.len(),
            });
        }
        if let Some(s) = self
            .noise
            .sigmas
            .iter()
            .find(|s| !(**s >= 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidParameter {
                name: "noise.sigma",
                value: *s,
                reason: "must be non-negative",
            });
        }
        if !(self.enkf_rho > 0.0 && self.enkf_rho.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "enkf.rho",
                value: self.enkf_rho,
                reason: "must be positive",
            });
        }
        let v = self.effective_obs_variance()?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "obs_variance",
                value: v,
                reason: "must be positive",
            });
        }
        MultiLevelCoeffs::block_lengths(self.ks.n, self.mrenkf.levels)?;
        self.mrenkf.scale_config().validate()?;
        if self.rank.sample_points == 0 || self.rank.sample_points > self.ks.n {
            return Err(Error::InvalidParameter {
                name: "rank.sample_points",
                value: self.rank.sample_points as f64,
                reason: "must be between 1 and the grid size",
            });
        }
        if self.rank.cycle_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "rank.cycle_stride",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}
