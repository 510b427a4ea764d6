use thiserror::Error;

/// Errors surfaced at module seams. Tensor-level shape violations are
/// programming errors and panic instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("top_r: r = {r} out of range for length {len}")]
    TopROutOfRange { r: usize, len: usize },

    #[error("fft2: extent {0} is not a power of two")]
    NonPowerOfTwo(usize),

    #[error("patchify: extent {extent} not divisible by patch size {patch}")]
    IndivisibleExtent { extent: usize, patch: usize },

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("timestep {0} outside [0, 1]")]
    TimestepOutOfRange(f64),

    #[error("select_step: fewer than {need} live positions remain ({have})")]
    NotEnoughLivePositions { need: usize, have: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: loss {loss} exceeds 10x initial {initial}")]
    Diverged { step: usize, loss: f64, initial: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
