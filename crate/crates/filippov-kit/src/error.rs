//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degenerate boundary near x = {x}: {detail}")]
    DegenerateBoundary { x: f64, detail: String },
    #[error("scripted policy exhausted after {consumed} decisions before the horizon")]
    PolicyUnderrun { consumed: usize },
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("unknown scenario `{0}` (expected z, z1 or z2)")]
    UnknownScenario(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
