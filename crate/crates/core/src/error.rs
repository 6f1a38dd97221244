use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid family spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("velocity {value} m/s at node (z={iz}, x={ix}) is not finite and positive")]
    BadVelocity { iz: usize, ix: usize, value: f64 },
    #[error("model has no constant-velocity top layer")]
    NoTopLayer,
    #[error("location (x={x} m, z={z} m) lies outside the domain")]
    OutOfDomain { x: f64, z: f64 },
    #[error("simulation became unstable at step {step}")]
    Unstable { step: usize },
    #[error("CFL number {cfl:.4} exceeds the stability bound {bound:.4}")]
    CflViolation { cfl: f64, bound: f64 },
    #[error("frequency {0} Hz does not fall on an integer bin")]
    NonIntegerBin(f64),
    #[error("frequency {freq} Hz is outside [0, {nyquist}] Hz")]
    AboveNyquist { freq: f64, nyquist: f64 },
    #[error("duplicate frequency {0} Hz")]
    DuplicateFrequency(f64),
    #[error("spectrum profile is identically zero")]
    ZeroSpectrum,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed graph: {0}")]
    MalformedGraph(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("frequency {0} Hz is outside the width-rule bands")]
    FrequencyOutOfBand(f64),
    #[error("model has no sub-model for frequency {0} Hz")]
    UnknownFrequency(f64),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged {
        epoch: usize,
        last_finite: Box<crate::nn::ModelHandle>,
    },
    #[error("no crossover: surrogate ({surrogate} s) is not faster than the solver ({solver} s)")]
    NoCrossover { surrogate: f64, solver: f64 },
    #[error("format error in {path:?}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("checkpoint is missing parameter `{0}`")]
    MissingParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
