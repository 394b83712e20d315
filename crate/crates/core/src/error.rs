//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("predicate error: {0}")]
    Predicate(String),

    #[error("regex construction error: {0}")]
    Regex(String),

    #[error("expression construction error: {0}")]
    Expr(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("signal error: {0}")]
    Signal(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("config error: {0}")]
    Config(String),
}
