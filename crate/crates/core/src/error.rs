use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frame configuration: {0}")]
    InvalidFrame(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient samples: window at offset {offset} needs {needed} samples, stream has {available}")]
    InsufficientSamples {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("calibration needs at least {required} trials for P_f = {p_f}, got {got}")]
    TooFewTrials { p_f: f64, required: usize, got: usize },

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
