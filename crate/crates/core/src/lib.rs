//! Multiresolution ensemble Kalman filtering.
//!
//! The crate is organised bottom-up:
//!
//! * [`wavelet`] periodized orthonormal Daubechies transforms (1D and 2D),
//!   grouped by scale, plus an explicit matrix form for covariance work.
//! * [`ensemble`] ensemble storage and sample statistics.
//! * [`etkf`] the deterministic ensemble transform Kalman filter update.
//! * [`mrenkf`] scale-separated observations, per-scale observation
//!   covariances and the iterative coarse-to-fine update.
//! * [`ks`] an ETDRK4 pseudospectral Kuramoto–Sivashinsky solver.
//! * [`experiment`] twin-experiment orchestration and verification metrics.
//! * [`io`] CSV readers and writers for the data products.

pub mod ensemble;
pub mod error;
pub mod etkf;
pub mod experiment;
pub mod io;
pub mod ks;
pub mod mrenkf;
pub mod wavelet;

pub use ensemble::{Ensemble, GaussianMoments};
pub use error::{Error, Result};
pub use etkf::{etkf_update, symmetric_sqrt, ObsCovariance, ObsSpaceEnsemble};
pub use experiment::{FilterKind, MetricsBundle, TwinExperimentConfig};
pub use ks::{KsConfig, KsSolver, KsState};
pub use mrenkf::{
    mrenkf_assimilate, CovStrategy, IdentityObservation, MrEnkf, ObservationOperator,
    ScaleDiagnostics, ScaleObsConfig, ScaleObservation, ScaleSettings,
};
pub use wavelet::{FilterPair, MultiLevelCoeffs, MultiLevelCoeffs2D, Wavelet};
