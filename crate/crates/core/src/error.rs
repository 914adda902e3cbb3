use crate::state::LagrangianState;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("grid size {0} is not a power of two >= 64")]
    GridSize(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        snapshot: Box<LagrangianState>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
