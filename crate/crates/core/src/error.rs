use thiserror::Error;

/// Errors produced by the radial shooting laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),

    #[error("invalid integration controls: {0}")]
    InvalidControls(String),

    #[error("negative-power nonlinearity evaluated at nonpositive u = {u}")]
    NonpositiveU { u: f64 },

    #[error("state became nonfinite at r = {r}")]
    NonfiniteState { r: f64 },

    #[error("series start radius {r0} must lie in (0, {max}]")]
    BadRadius { r0: f64, max: f64 },

    #[error("radius {r} outside trajectory range [{lo}, {hi}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },

    #[error("tail fit slope {lambda} is nonnegative; weighted tail is not integrable")]
    TailNotIntegrable { lambda: f64 },

    #[error("not a separatrix trajectory: {0}")]
    NotSeparatrix(String),

    #[error("trajectory did not survive to its horizon")]
    NotSurvived,

    #[error("no global bracket end found down to beta = {floor}")]
    BracketFailure { floor: f64 },

    #[error("indeterminate shot at beta = {beta}: {reason}")]
    IndeterminateShot { beta: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown verification check `{0}`")]
    UnknownCheck(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
