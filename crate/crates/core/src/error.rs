use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Base point outside the model's chart or constraint band.
    #[error("domain error: {0}")]
    Domain(String),

    /// Base point outside the sublevel set `V(q) < e`.
    #[error("energy domain error: V(q) = {potential} is not below e = {energy}")]
    EnergyDomain { potential: f64, energy: f64 },

    /// A fiber point with `y = 0` where a direction is required.
    #[error("degenerate fiber: momentum vanishes")]
    DegenerateFiber,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
