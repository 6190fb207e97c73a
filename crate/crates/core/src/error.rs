use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel mass is {mass}, expected 1")]
    KernelNotNormalized { mass: f64 },

    #[error("operation requires the exponential kernel, got {family}")]
    WrongKernelFamily { family: &'static str },

    #[error("invalid velocity model: {0}")]
    InvalidVelocity(String),

    #[error("invalid initial datum: {0}")]
    InvalidDatum(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("unstable step: dt*max|W|/dx = {courant} exceeds 1")]
    UnstableStep { courant: f64 },

    #[error("negative interface speed {speed} at interface {interface}")]
    NegativeSpeed { interface: usize, speed: f64 },

    #[error("non-finite state at t = {time} in cell {cell}")]
    NonfiniteState { time: f64, cell: usize },

    #[error("flux is not strictly convex or concave on [{lo}, {hi}]")]
    FluxNotGenuinelyNonlinear { lo: f64, hi: f64 },

    #[error("tailored entropy diverges at zero density (V'(0) = {v_prime_at_zero})")]
    EntropyUnboundedAtZero { v_prime_at_zero: f64 },

    #[error("test function {id} leaves the recorded window")]
    TestFunctionOutOfWindow { id: usize },

    #[error("no snapshot at t = {time}")]
    SnapshotMissing { time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
