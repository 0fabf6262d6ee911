use thiserror::Error;

/// Failures of density-model queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("model holds no data")]
    EmptyModel,
    /// The conditioning mass is numerically zero, so no mixture component
    /// can be drawn.
    #[error("no support for the conditioning query")]
    NoSupport,
}
