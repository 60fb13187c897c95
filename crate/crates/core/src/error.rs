use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular information matrix in {stage}")]
    Singular { stage: String },

    #[error("treatment arm `{arm}` is empty")]
    EmptyArm { arm: &'static str },

    #[error("{failed} of {total} bootstrap resamples failed (limit is 10%)")]
    BootstrapFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn singular(stage: impl Into<String>) -> Self {
        Error::Singular { stage: stage.into() }
    }
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::param("q", format!("must lie in (0, 1), got {q}")))
    }
}
