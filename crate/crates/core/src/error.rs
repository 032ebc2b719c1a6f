use thiserror::Error;

/// Failure while evaluating an [`Expr`](crate::expr::Expr) at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("coordinate index {index} out of range for a point of dimension {dim}")]
    CoordOutOfRange { index: usize, dim: usize },
    #[error("evaluation produced a non-finite value")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frame is degenerate at {point:?} (sigma_min/sigma_max = {ratio:e})")]
    DegenerateFrame { point: Vec<f64>, ratio: f64 },

    #[error("frame matrix is singular at {0:?}")]
    SingularFrame(Vec<f64>),

    #[error("brackets of depth <= {depth} span only rank {rank} < {dim} at {point:?}")]
    NotBracketGenerating { point: Vec<f64>, rank: usize, dim: usize, depth: usize },

    #[error("unknown built-in model '{0}'")]
    UnknownModel(String),

    #[error("model '{0}' carries no Carnot dilation weights")]
    NotCarnot(String),

    #[error("trajectory left the domain at t = {time}")]
    DomainExit { time: f64 },

    #[error("integration blew up (non-finite state) at t = {time}")]
    BlowUp { time: f64 },

    #[error("steering did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("degenerate sampling: {0}")]
    Sampling(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
