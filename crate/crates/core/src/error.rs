use thiserror::Error;

/// Errors raised across the decoding toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed matrix text; `line` is 1-based.
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is rank deficient: achieved rank {rank}, needed {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("degenerate parity-check matrix: {0}")]
    Degenerate(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite input value at position {0}")]
    NonFinite(usize),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("gave up after {frames} frames with {collected} of {wanted} failures collected")]
    Timeout {
        frames: u64,
        collected: usize,
        wanted: usize,
    },
    #[error("frame {frame} at {snr_db} dB (seed {seed}): {source}")]
    Frame {
        frame: u64,
        snr_db: f64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
