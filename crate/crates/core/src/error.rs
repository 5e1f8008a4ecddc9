//! Crate-wide error type.

/// Errors raised by model construction, file formats and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated file while reading {0}")]
    Truncated(String),

    #[error("label {label} out of range for {n_o} output classes")]
    LabelOutOfRange { label: u32, n_o: usize },

    #[error("unexpected record {0:?} in checkpoint")]
    UnknownRecord(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: u64, loss: f64 },

    #[error("no feasible architecture within budget {budget} (minimum size needs {minimum})")]
    InfeasibleBudget { budget: usize, minimum: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        Error::Shape { op, detail }
    }
}
