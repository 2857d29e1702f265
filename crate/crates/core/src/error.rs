use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside kernel domain [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },

    #[error("kernel is singular at t = 0")]
    Singularity,

    #[error("time {t} is not on the lift grid (dt = {dt})")]
    OffGrid { t: f64, dt: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("lift reconstruction error {error:.3e} exceeds bound {bound:.3e}")]
    Reconstruction { error: f64, bound: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("ensemble aborted: {flagged} of {paths} paths produced non-finite states")]
    EnsembleAborted { flagged: usize, paths: usize },

    #[error("rank-deficient regression at step {step} (condition number {condition:.3e}) and ridge disabled")]
    RankDeficient { step: usize, condition: f64 },

    #[error("backward value exploded at step {step}: |p| = {magnitude:.3e}")]
    Exploded { step: usize, magnitude: f64 },

    #[error("Picard iteration diverging: deltas {deltas:?}")]
    PicardDiverged { deltas: Vec<f64> },

    #[error("empty argmin set")]
    EmptyArgmin,

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
