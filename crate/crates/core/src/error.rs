use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "unknown wavelet `{0}`; supported wavelets: db1, db2, db3, db4, db5, db6, db7, db8, db9"
    )]
    UnknownWavelet(String),

    #[error("signal length {0} is odd; a decimating wavelet step needs an even length")]
    OddLength(usize),

    #[error("length {len} is not divisible by 2^{levels} = {required}")]
    NotDivisible {
        len: usize,
        levels: usize,
        required: usize,
    },

    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("level {level} out of range; valid levels are 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("transform matrix of size {n} exceeds the cap of {cap}; use the sampled covariance strategy instead")]
    MatrixTooLarge { n: usize, cap: usize },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("solver blew up at t = {t} (step {step})")]
    SolverBlowup { t: f64, step: usize },

    #[error("assimilation failed at scale {level}: {source}")]
    Scale {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("twin experiment failed at cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
