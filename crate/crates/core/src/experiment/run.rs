//! The twin-experiment driver.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{FilterKind, TwinExperimentConfig};
use super::metrics::{l2_discrepancy, sample_indices, RankHistogram};
use super::noise::{add_scale_noise, level_snrs};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::etkf::{etkf_update, ObsCovariance, ObsSpaceEnsemble};
use crate::ks::{ks_initial_condition, KsSolver, KsState};
use crate::mrenkf::{IdentityObservation, MrEnkf, ScaleDiagnostics};

/// Independent random streams derived from one master seed. Each role draws
/// from its own ChaCha stream, so changing how much one role consumes never
/// shifts the numbers seen by another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    ObservationNoise = 1,
    EnsembleInit = 2,
    FilterSampling = 3,
    TieBreaking = 4,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Truth and clean observation at one assimilation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRecord {
    pub cycle: usize,
    pub step: usize,
    pub t: f64,
    pub truth: Vec<f64>,
    /// `H(u)`; the identity on the full grid.
    pub clean_obs: Vec<f64>,
}

/// The reference trajectory at every model step plus the observation records.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub trajectory: Vec<KsState>,
    pub records: Vec<ReferenceRecord>,
}

/// Integrates the truth from `u₀` to the horizon.
pub fn generate_reference(cfg: &TwinExperimentConfig, solver: &KsSolver) -> Result<ReferenceRun> {
    let total = cfg.total_steps();
    let mut trajectory = Vec::with_capacity(total + 1);
    trajectory.push(ks_initial_condition(&cfg.ks));
    for step in 1..=total {
        let next = solver.step(&trajectory[step - 1]).map_err(|e| match e {
            Error::SolverBlowup { t, .. } => Error::SolverBlowup { t, step },
            other => other,
        })?;
        trajectory.push(next);
    }
    let records = (1..=cfg.cycles())
        .map(|cycle| {
            let step = cycle * cfg.obs_stride;
            let state = &trajectory[step];
            ReferenceRecord {
                cycle,
                step,
                t: state.t,
                truth: state.u.clone(),
                clean_obs: state.u.clone(),
            }
        })
        .collect();
    Ok(ReferenceRun {
        trajectory,
        records,
    })
}

/// `M` members `u₀ + ε`, `ε ~ N(0, σ² I)`, drawn member by member.
pub fn init_ensemble<R: Rng + ?Sized>(
    u0: &[f64],
    size: usize,
    spread: f64,
    rng: &mut R,
) -> Result<Ensemble> {
    let n = u0.len();
    let mut members = DMatrix::zeros(n, size);
    for mut col in members.column_iter_mut() {
        for (dst, &u) in col.iter_mut().zip(u0) {
            let e: f64 = rng.sample(StandardNormal);
            *dst = u + spread * e;
        }
    }
    Ensemble::new(members)
}

/// Errors and spreads around one assimilation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub t: f64,
    pub l2_pre: f64,
    pub l2_post: f64,
    pub trace_pre: f64,
    pub trace_post: f64,
}

/// L² discrepancy of the ensemble mean after model step `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Point {
    pub step: usize,
    pub t: f64,
    pub l2: f64,
}

/// Time-averaged SNR of one level of the clean observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSnr {
    pub level: usize,
    pub sigma: f64,
    /// `None` for noiseless levels.
    pub avg_snr: Option<f64>,
}

/// Verification output of one run.
#[derive(Debug, Clone)]
pub struct MetricsBundle {
    pub cycles: Vec<CycleMetrics>,
    /// One point per model step (step 0 included). At assimilation steps the
    /// value is that of the analysis, the state carried forward.
    pub l2_series: Vec<L2Point>,
    /// `M + 1` bins.
    pub rank_histogram: Vec<u64>,
    /// Coarse first.
    pub snr: Vec<LevelSnr>,
    /// Empirical standard deviation of `noisy − clean` over all observations.
    pub obs_noise_std: f64,
    /// Wall-clock seconds spent in each cycle (forecast plus analysis).
    /// Excluded from equality, which compares only the reproducible metrics.
    pub cycle_seconds: Vec<f64>,
}

impl PartialEq for MetricsBundle {
    fn eq(&self, other: &Self) -> bool {
        self.cycles == other.cycles
            && self.l2_series == other.l2_series
            && self.rank_histogram == other.rank_histogram
            && self.snr == other.snr
            && self.obs_noise_std.to_bits() == other.obs_noise_std.to_bits()
    }
}

impl MetricsBundle {
    /// Mean of the L² series over steps `1..=total`.
    pub fn time_averaged_l2(&self) -> f64 {
        time_averaged_l2(&self.l2_series)
    }

    pub fn rank_chi_square(&self) -> f64 {
        super::metrics::chi_square_uniformity(&self.rank_histogram)
    }
}

/// Mean of `series` over steps `≥ 1`; the initial spread is excluded.
pub fn time_averaged_l2(series: &[L2Point]) -> f64 {
    let values: Vec<f64> = series.iter().filter(|p| p.step > 0).map(|p| p.l2).collect();
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Truth and member values at the marker grid points after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTrack {
    /// Requested coordinates.
    pub x: Vec<f64>,
    /// Nearest grid index of each marker.
    pub indices: Vec<usize>,
    pub t: Vec<f64>,
    /// `truth[step][marker]`.
    pub truth: Vec<Vec<f64>>,
    /// `members[step][marker][member]`.
    pub members: Vec<Vec<Vec<f64>>>,
}

/// One observation as fed to the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub cycle: usize,
    pub t: f64,
    pub noisy: Vec<f64>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct TwinRun {
    pub config: TwinExperimentConfig,
    pub metrics: MetricsBundle,
    pub reference: ReferenceRun,
    pub observations: Vec<ObservationRecord>,
    pub markers: MarkerTrack,
    /// `(cycle, diagnostics)` for every level update of the multiresolution
    /// filter; empty for the plain EnKF.
    pub scale_diagnostics: Vec<(usize, ScaleDiagnostics)>,
    pub final_ensemble: Ensemble,
}

enum ActiveFilter {
    Enkf { r: ObsCovariance, rho: f64 },
    Multi(MrEnkf),
}

impl ActiveFilter {
    fn assimilate(
        &self,
        forecast: &Ensemble,
        y: &DVector<f64>,
    ) -> Result<(Ensemble, Vec<ScaleDiagnostics>)> {
        match self {
            ActiveFilter::Enkf { r, rho } => {
                let obs = ObsSpaceEnsemble::new(forecast.members().clone())?;
                Ok((etkf_update(forecast, &obs, y, r, *rho)?, Vec::new()))
            }
            ActiveFilter::Multi(filter) => filter.assimilate(forecast, &IdentityObservation, y),
        }
    }
}

fn to_ensemble(states: &[KsState]) -> Result<Ensemble> {
    let n = states[0].u.len();
    Ensemble::new(DMatrix::from_fn(n, states.len(), |i, a| states[a].u[i]))
}

fn ensemble_mean_l2(states: &[KsState], truth: &[f64], dx: f64) -> Result<f64> {
    let m = states.len() as f64;
    let mean: Vec<f64> = (0..truth.len())
        .map(|i| states.iter().map(|s| s.u[i]).sum::<f64>() / m)
        .collect();
    l2_discrepancy(&mean, truth, dx)
}

fn marker_values(states: &[KsState], indices: &[usize]) -> Vec<Vec<f64>> {
    indices
        .iter()
        .map(|&j| states.iter().map(|s| s.u[j]).collect())
        .collect()
}

/// Runs the full twin experiment for `cfg`. Deterministic given the config:
/// member propagation is parallel but order-preserving, and every random
/// draw comes from a seeded [`RngStream`].
pub fn run_twin_experiment(cfg: &TwinExperimentConfig) -> Result<TwinRun> {
    cfg.validate()?;
    let solver = KsSolver::new(cfg.ks)?;
    let dx = cfg.ks.dx();
    let reference = generate_reference(cfg, &solver)?;

    let mut noise_rng = stream_rng(cfg.seed, RngStream::ObservationNoise);
    let mut init_rng = stream_rng(cfg.seed, RngStream::EnsembleInit);
    let mut filter_rng = stream_rng(cfg.seed, RngStream::FilterSampling);
    let mut tie_rng = stream_rng(cfg.seed, RngStream::TieBreaking);

    // observations and SNR
    let mut observations = Vec::with_capacity(reference.records.len());
    let mut snr_sums = vec![0.0; cfg.noise.levels + 1];
    let mut deviations = Vec::with_capacity(reference.records.len() * cfg.ks.n);
    for rec in &reference.records {
        let noisy = add_scale_noise(&rec.clean_obs, &cfg.noise, &mut noise_rng)?;
        for (s, v) in snr_sums
            .iter_mut()
            .zip(level_snrs(&noisy.clean_coeffs, &cfg.noise)?)
        {
            *s += v.unwrap_or(0.0);
        }
        deviations.extend(
            noisy
                .physical
                .iter()
                .zip(&rec.clean_obs)
                .map(|(a, b)| a - b),
        );
        observations.push(ObservationRecord {
            cycle: rec.cycle,
            t: rec.t,
            noisy: noisy.physical,
        });
    }
    let count = reference.records.len() as f64;
    let snr = snr_sums
        .iter()
        .zip(&cfg.noise.sigmas)
        .enumerate()
        .map(|(idx, (&sum, &sigma))| LevelSnr {
            level: cfg.noise.levels + 1 - idx,
            sigma,
            avg_snr: (sigma > 0.0).then(|| sum / count),
        })
        .collect();
    let obs_noise_std = {
        let k = deviations.len() as f64;
        let mean = deviations.iter().sum::<f64>() / k;
        (deviations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    };

    let variance = cfg.effective_obs_variance()?;
    let r = ObsCovariance::scalar(variance, cfg.ks.n)?;
    let filter = match cfg.filter {
        FilterKind::Enkf => ActiveFilter::Enkf {
            r,
            rho: cfg.enkf_rho,
        },
        FilterKind::Mrenkf => {
            ActiveFilter::Multi(MrEnkf::new(cfg.mrenkf.scale_config(), &r, &mut filter_rng)?)
        }
    };

    let u0 = &reference.trajectory[0];
    let init = init_ensemble(&u0.u, cfg.ensemble_size, cfg.init_spread, &mut init_rng)?;
    let mut members: Vec<KsState> = (0..init.size())
        .map(|a| KsState {
            u: init.members().column(a).iter().copied().collect(),
            t: u0.t,
        })
        .collect();

    let marker_idx: Vec<usize> = cfg
        .markers
        .iter()
        .map(|&x| cfg.ks.nearest_index(x))
        .collect();
    let mut markers = MarkerTrack {
        x: cfg.markers.clone(),
        indices: marker_idx.clone(),
        t: vec![u0.t],
        truth: vec![marker_idx.iter().map(|&j| u0.u[j]).collect()],
        members: vec![marker_values(&members, &marker_idx)],
    };

    let rank_points = sample_indices(cfg.ks.n, cfg.rank.sample_points);
    let mut hist = RankHistogram::new(cfg.ensemble_size);
    let mut l2_series = vec![L2Point {
        step: 0,
        t: u0.t,
        l2: ensemble_mean_l2(&members, &u0.u, dx)?,
    }];
    let mut cycles = Vec::with_capacity(cfg.cycles());
    let mut cycle_seconds = Vec::with_capacity(cfg.cycles());
    let mut scale_diagnostics = Vec::new();
    let mut step = 0;

    for (rec, obs) in reference.records.iter().zip(&observations) {
        let wrap = |e: Error| Error::Cycle {
            cycle: rec.cycle,
            source: Box::new(e),
        };
        let started = Instant::now();
        for _ in 0..cfg.obs_stride {
            step += 1;
            members = members
                .par_iter()
                .map(|s| solver.step(s))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            let truth = &reference.trajectory[step];
            if step != rec.step {
                l2_series.push(L2Point {
                    step,
                    t: truth.t,
                    l2: ensemble_mean_l2(&members, &truth.u, dx)?,
                });
                markers.t.push(truth.t);
                markers
                    .truth
                    .push(marker_idx.iter().map(|&j| truth.u[j]).collect());
                markers.members.push(marker_values(&members, &marker_idx));
            }
        }

        let forecast = to_ensemble(&members).map_err(wrap)?;
        let sample_this_cycle = (rec.cycle - 1) % cfg.rank.cycle_stride == 0;
        if sample_this_cycle && cfg.rank.use_forecast {
            hist.add_ensemble(&forecast, &rec.truth, &rank_points, &mut tie_rng);
        }
        let l2_pre = l2_discrepancy(forecast.sample_mean().as_slice(), &rec.truth, dx)?;
        let trace_pre = forecast.spread_trace();

        let y = DVector::from_column_slice(&obs.noisy);
        let (analysis, diags) = filter.assimilate(&forecast, &y).map_err(wrap)?;
        scale_diagnostics.extend(diags.into_iter().map(|d| (rec.cycle, d)));
        if sample_this_cycle && !cfg.rank.use_forecast {
            hist.add_ensemble(&analysis, &rec.truth, &rank_points, &mut tie_rng);
        }
        let l2_post = l2_discrepancy(analysis.sample_mean().as_slice(), &rec.truth, dx)?;
        let trace_post = analysis.spread_trace();

        members = (0..analysis.size())
            .map(|a| KsState {
                u: analysis.members().column(a).iter().copied().collect(),
                t: rec.t,
            })
            .collect();
        l2_series.push(L2Point {
            step,
            t: rec.t,
            l2: l2_post,
        });
        markers.t.push(rec.t);
        markers
            .truth
            .push(marker_idx.iter().map(|&j| rec.truth[j]).collect());
        markers.members.push(marker_values(&members, &marker_idx));

        cycles.push(CycleMetrics {
            cycle: rec.cycle,
            t: rec.t,
            l2_pre,
            l2_post,
            trace_pre,
            trace_post,
        });
        cycle_seconds.push(started.elapsed().as_secs_f64());
    }

    let final_ensemble = to_ensemble(&members)?;
    Ok(TwinRun {
        config: cfg.clone(),
        metrics: MetricsBundle {
            cycles,
            l2_series,
            rank_histogram: hist.counts().to_vec(),
            snr,
            obs_noise_std,
            cycle_seconds,
        },
        reference,
        observations,
        markers,
        scale_diagnostics,
        final_ensemble,
    })
}
