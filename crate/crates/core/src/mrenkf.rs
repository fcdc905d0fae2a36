//! Multiresolution ensemble Kalman filter.
//!
//! Observations are split into wavelet levels `y_i = P_i W_N y` and the
//! forecast is conditioned on one level at a time, coarse to fine by default.
//! Each level carries its own observation covariance `R_i` and inflation
//! `ρ_i`; the update at each level is an ETKF step whose observed-space
//! ensemble `P_i W_N H(x^α)` is recomputed from the current intermediate
//! analysis.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::etkf::{apply_transform, etkf_transform, ObsCovariance, ObsSpaceEnsemble};
use crate::wavelet::{
    check_divisible, level_rows, level_to_index, transform_matrix, wavedec, FilterPair,
    MultiLevelCoeffs,
};

/// How `R_i` is obtained for a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovStrategy {
    /// `P_i W R (P_i W)ᵀ` with the materialized transform (or a square-root
    /// factor pushed through the fast transform).
    Exact,
    /// `λ_i σ_max(R)² I`.
    Diagonal,
    /// Sample covariance of transformed noise draws `ε ~ N(0, R)`.
    Sampled,
}

impl std::str::FromStr for CovStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(CovStrategy::Exact),
            "diagonal" => Ok(CovStrategy::Diagonal),
            "sampled" => Ok(CovStrategy::Sampled),
            other => Err(Error::Parse(format!(
                "unknown covariance strategy `{other}` (expected exact, diagonal or sampled)"
            ))),
        }
    }
}

impl std::fmt::Display for CovStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovStrategy::Exact => "exact",
            CovStrategy::Diagonal => "diagonal",
            CovStrategy::Sampled => "sampled",
        })
    }
}

/// Per-level settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSettings {
    pub strategy: CovStrategy,
    /// Confidence scaling used by [`CovStrategy::Diagonal`].
    pub lambda: f64,
    /// Multiplicative inflation of the forecast at this level.
    pub rho: f64,
    /// Noise draws for [`CovStrategy::Sampled`].
    pub sample_count: usize,
}

impl Default for ScaleSettings {
    fn default() -> Self {
        ScaleSettings {
            strategy: CovStrategy::Exact,
            lambda: 1.0,
            rho: 1.0,
            sample_count: 1000,
        }
    }
}

/// Configuration of the scale-separated update.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleObsConfig {
    pub levels: usize,
    pub filter: FilterPair,
    /// One entry per level, coarse first (`scales[0]` is level `N+1`).
    pub scales: Vec<ScaleSettings>,
    /// Level labels in the order they are assimilated.
    pub order: Vec<usize>,
}

impl ScaleObsConfig {
    /// Same settings on every level, coarse-to-fine order.
    pub fn uniform(filter: FilterPair, levels: usize, settings: ScaleSettings) -> Self {
        ScaleObsConfig {
            levels,
            filter,
            scales: vec![settings; levels + 1],
            order: coarse_to_fine(levels),
        }
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Self {
        self.order = order;
        self
    }

    pub fn settings(&self, level: usize) -> Result<&ScaleSettings> {
        let idx = level_to_index(level, self.levels)?;
        self.scales.get(idx).ok_or(Error::LevelOutOfRange {
            level,
            max: self.scales.len(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.len() != self.levels + 1 {
            return Err(Error::LengthMismatch {
                what: "per-scale settings",
                expected: self.levels + 1,
                found: self.scales.len(),
            });
        }
        for s in &self.scales {
            if !(s.lambda > 0.0 && s.lambda.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    value: s.lambda,
                    reason: "must be positive",
                });
            }
            if !(s.rho > 0.0 && s.rho.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "rho",
                    value: s.rho,
                    reason: "must be positive",
                });
            }
            if s.strategy == CovStrategy::Sampled && s.sample_count < 2 {
                return Err(Error::InvalidParameter {
                    name: "sample_count",
                    value: s.sample_count as f64,
                    reason: "sampled covariances need at least 2 draws",
                });
            }
        }
        let mut sorted = self.order.clone();
        sorted.sort_unstable();
        if sorted != (1..=self.levels + 1).collect::<Vec<_>>() {
            return Err(Error::Parse(format!(
                "assimilation order {:?} is not a permutation of levels 1..={}",
                self.order,
                self.levels + 1
            )));
        }
        Ok(())
    }
}

/// Level labels `N+1, N, …, 1`.
pub fn coarse_to_fine(levels: usize) -> Vec<usize> {
    (1..=levels + 1).rev().collect()
}

/// Observations of one wavelet level and their error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleObservation {
    pub level: usize,
    pub y: DVector<f64>,
    pub r: ObsCovariance,
}

/// Source of the physical-space observation covariance for the exact
/// strategy: either `R` itself or a factor `S` with `R = S Sᵀ`.
#[derive(Debug, Clone, Copy)]
pub enum CovarianceInput<'a> {
    Covariance(&'a ObsCovariance),
    Factor(&'a DMatrix<f64>),
}

/// Exact `R_i = P_i W_N R (P_i W_N)ᵀ`.
///
/// With a factor `S`, `P_i W_N S` is computed column by column with the fast
/// transform, so the transform never needs to be transposed or stored.
pub fn obs_cov_exact(
    input: CovarianceInput<'_>,
    filter: &FilterPair,
    levels: usize,
    level: usize,
) -> Result<ObsCovariance> {
    match input {
        CovarianceInput::Covariance(r) => {
            let n = r.dim();
            let rows = level_rows(n, levels, level)?;
            if levels == 0 {
                return Ok(r.clone());
            }
            if let ObsCovariance::Scalar { variance, .. } = r {
                // W (σ² I) Wᵀ = σ² I for orthogonal W
                return ObsCovariance::scalar(*variance, rows.len());
            }
            let w = transform_matrix(n, filter, levels)?;
            let wi = w.rows(rows.start, rows.len());
            let ri = wi * r.to_dense() * wi.transpose();
            ObsCovariance::full((&ri + ri.transpose()) * 0.5)
        }
        CovarianceInput::Factor(s) => {
            let n = s.nrows();
            let rows = level_rows(n, levels, level)?;
            let mut projected = DMatrix::zeros(rows.len(), s.ncols());
            for (j, col) in s.column_iter().enumerate() {
                let col: Vec<f64> = col.iter().copied().collect();
                let c = wavedec(&col, filter, levels)?;
                projected
                    .column_mut(j)
                    .copy_from_slice(c.project_level(level)?);
            }
            let ri = &projected * projected.transpose();
            ObsCovariance::full((&ri + ri.transpose()) * 0.5)
        }
    }
}

/// `R_i = λ_i σ_max(R)² I` of dimension `block_len`.
pub fn obs_cov_diagonal(r: &ObsCovariance, lambda: f64, block_len: usize) -> Result<ObsCovariance> {
    let s = r.max_singular_value();
    ObsCovariance::scalar(lambda * s * s, block_len)
}

/// Monte Carlo `R_i ≈ E_i E_iᵀ / (M_R − 1)` from `count` draws of
/// `ε ~ N(0, R)` pushed through `P_i W_N`, plus a ridge of
/// `1e-10 · trace / q` on the diagonal.
pub fn obs_cov_sampled<G: Rng + ?Sized>(
    r: &ObsCovariance,
    filter: &FilterPair,
    levels: usize,
    level: usize,
    count: usize,
    rng: &mut G,
) -> Result<ObsCovariance> {
    if count < 2 {
        return Err(Error::InvalidParameter {
            name: "sample_count",
            value: count as f64,
            reason: "sampled covariances need at least 2 draws",
        });
    }
    let rows = level_rows(r.dim(), levels, level)?;
    let mut e = DMatrix::zeros(rows.len(), count);
    for j in 0..count {
        let eps = r.sample(rng);
        let c = wavedec(eps.as_slice(), filter, levels)?;
        e.column_mut(j).copy_from_slice(c.project_level(level)?);
    }
    let mut ri = &e * e.transpose() / (count - 1) as f64;
    ri = (&ri + ri.transpose()) * 0.5;
    let q = rows.len();
    let ridge = 1e-10 * ri.trace() / q as f64;
    for k in 0..q {
        ri[(k, k)] += ridge;
    }
    ObsCovariance::full(ri)
}

/// Per-level `R_i` in storage order (coarse first).
pub fn scale_covariances<G: Rng + ?Sized>(
    r: &ObsCovariance,
    cfg: &ScaleObsConfig,
    rng: &mut G,
) -> Result<Vec<ObsCovariance>> {
    cfg.validate()?;
    let n = r.dim();
    let lengths = MultiLevelCoeffs::block_lengths(n, cfg.levels)?;
    let mut out = Vec::with_capacity(cfg.levels + 1);
    for (idx, s) in cfg.scales.iter().enumerate() {
        let level = cfg.levels + 1 - idx;
        let ri = match s.strategy {
            CovStrategy::Exact => obs_cov_exact(
                CovarianceInput::Covariance(r),
                &cfg.filter,
                cfg.levels,
                level,
            )?,
            CovStrategy::Diagonal => obs_cov_diagonal(r, s.lambda, lengths[idx])?,
            CovStrategy::Sampled => {
                obs_cov_sampled(r, &cfg.filter, cfg.levels, level, s.sample_count, rng)?
            }
        };
        out.push(ri);
    }
    Ok(out)
}

/// Splits `y` into level observations and attaches `R_i` per the configured
/// strategy. Returned coarse first.
pub fn scale_observations<G: Rng + ?Sized>(
    y: &DVector<f64>,
    cfg: &ScaleObsConfig,
    r: &ObsCovariance,
    rng: &mut G,
) -> Result<Vec<ScaleObservation>> {
    check_divisible(y.len(), cfg.levels)?;
    if r.dim() != y.len() {
        return Err(Error::LengthMismatch {
            what: "observation covariance",
            expected: y.len(),
            found: r.dim(),
        });
    }
    let covs = scale_covariances(r, cfg, rng)?;
    attach(y, cfg, covs)
}

fn attach(
    y: &DVector<f64>,
    cfg: &ScaleObsConfig,
    covs: Vec<ObsCovariance>,
) -> Result<Vec<ScaleObservation>> {
    let coeffs = wavedec(y.as_slice(), &cfg.filter, cfg.levels)?;
    Ok(coeffs
        .blocks()
        .iter()
        .zip(covs)
        .enumerate()
        .map(|(idx, (block, r))| ScaleObservation {
            level: cfg.levels + 1 - idx,
            y: DVector::from_column_slice(block),
            r,
        })
        .collect())
}

/// Maps a model state to observation space.
pub trait ObservationOperator: Sync {
    fn observe(&self, state: &DVector<f64>) -> DVector<f64>;
}

/// `H(x) = x`: every grid value is observed.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityObservation;

impl ObservationOperator for IdentityObservation {
    fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        state.clone()
    }
}

/// Diagnostics recorded for each level update.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDiagnostics {
    pub level: usize,
    pub pre_trace: f64,
    pub post_trace: f64,
    /// `‖y_i − mean(P_i W H(x_a))‖₂` after the update at this level.
    pub obs_residual_norm: f64,
    pub rho: f64,
    pub lambda: f64,
}

/// A configured filter with its per-level covariances computed once.
#[derive(Debug, Clone)]
pub struct MrEnkf {
    cfg: ScaleObsConfig,
    covs: Vec<ObsCovariance>,
}

impl MrEnkf {
    pub fn new<G: Rng + ?Sized>(
        cfg: ScaleObsConfig,
        r: &ObsCovariance,
        rng: &mut G,
    ) -> Result<Self> {
        let covs = scale_covariances(r, &cfg, rng)?;
        Ok(MrEnkf { cfg, covs })
    }

    pub fn config(&self) -> &ScaleObsConfig {
        &self.cfg
    }

    /// Per-level covariances, coarse first.
    pub fn covariances(&self) -> &[ObsCovariance] {
        &self.covs
    }

    /// Conditions `forecast` on `y` one level at a time.
    pub fn assimilate(
        &self,
        forecast: &Ensemble,
        h: &dyn ObservationOperator,
        y: &DVector<f64>,
    ) -> Result<(Ensemble, Vec<ScaleDiagnostics>)> {
        let cfg = &self.cfg;
        let obs = attach(y, cfg, self.covs.clone())?;
        let mut current = forecast.clone();
        let mut diagnostics = Vec::with_capacity(obs.len());
        for &level in &cfg.order {
            let idx = cfg.levels + 1 - level;
            let settings = cfg.scales[idx];
            let scale_obs = &obs[idx];
            let wrap = |e: Error| Error::Scale {
                level,
                source: Box::new(e),
            };

            let projected = project_members(&current, h, cfg, level).map_err(wrap)?;
            let obs_ens = ObsSpaceEnsemble::new(projected).map_err(wrap)?;
            let pre_trace = current.spread_trace();
            let t =
                etkf_transform(&obs_ens, &scale_obs.y, &scale_obs.r, settings.rho).map_err(wrap)?;
            current = apply_transform(&current, &t).map_err(wrap)?;

            // observed-space mean carried through the same transform
            let values = obs_ens.values();
            let y_mean = values.column_mean();
            let mut yb = values.clone();
            for mut col in yb.column_iter_mut() {
                col -= &y_mean;
            }
            let post_mean = &y_mean + yb * t.column_mean();
            diagnostics.push(ScaleDiagnostics {
                level,
                pre_trace,
                post_trace: current.spread_trace(),
                obs_residual_norm: (&scale_obs.y - post_mean).norm(),
                rho: settings.rho,
                lambda: settings.lambda,
            });
        }
        Ok((current, diagnostics))
    }
}

/// `P_i W_N H(x^α)` for every member, as a `block_len × M` matrix.
fn project_members(
    ensemble: &Ensemble,
    h: &dyn ObservationOperator,
    cfg: &ScaleObsConfig,
    level: usize,
) -> Result<DMatrix<f64>> {
    let observed = ensemble.map_members(|x| h.observe(x))?;
    let q = observed.nrows();
    let rows = level_rows(q, cfg.levels, level)?;
    let mut out = DMatrix::zeros(rows.len(), observed.ncols());
    for (j, col) in observed.column_iter().enumerate() {
        let coeffs = wavedec(col.as_slice(), &cfg.filter, cfg.levels)?;
        out.column_mut(j)
            .copy_from_slice(coeffs.project_level(level)?);
    }
    Ok(out)
}

/// One full multiresolution update: builds the per-level covariances and
/// conditions `forecast` on every level in `cfg.order`.
pub fn mrenkf_assimilate<G: Rng + ?Sized>(
    forecast: &Ensemble,
    h: &dyn ObservationOperator,
    y: &DVector<f64>,
    r: &ObsCovariance,
    cfg: &ScaleObsConfig,
    rng: &mut G,
) -> Result<Ensemble> {
    let filter = MrEnkf::new(cfg.clone(), r, rng)?;
    Ok(filter.assimilate(forecast, h, y)?.0)
}
