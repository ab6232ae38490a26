use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A precondition on the inputs does not hold.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension error: m = {m} exceeds the supported limit {limit}")]
    Dimension { m: usize, limit: usize },
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
