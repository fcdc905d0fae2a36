//! Twin experiments on the Kuramoto–Sivashinsky model: a reference run is
//! observed with scale-dependent noise and an ensemble filter tries to
//! recover it.

mod config;
mod metrics;
mod noise;
mod run;

pub use config::{FilterKind, MrenkfSettings, NoiseConfig, RankSettings, TwinExperimentConfig};
pub use metrics::{
    chi_square_uniformity, compute_snr, l2_discrepancy, rank_histogram, rank_of, sample_indices,
    RankHistogram,
};
pub use noise::{add_scale_noise, level_snrs, NoisyObservation};
pub use run::{
    generate_reference, init_ensemble, run_twin_experiment, stream_rng, time_averaged_l2,
    CycleMetrics, L2Point, LevelSnr, MarkerTrack, MetricsBundle, ObservationRecord,
    ReferenceRecord, ReferenceRun, RngStream, TwinRun,
};
