use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input was NaN or infinite, or otherwise outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// The model breaks one of its structural assumptions (bounded attributes,
    /// a feasible action per event, slack feasibility).
    #[error("model invariant violated: {0}")]
    ModelInvariant(String),

    #[error("event {event} has no action with y_l + g_l(x) <= 0, a <= b and x in the feasible set")]
    NoFeasibleAction { event: usize },

    #[error("event {event} has no action with slack {delta}")]
    NoSlackAction { event: usize, delta: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("frame {frame} has no feasible action sequence")]
    FrameInfeasible { frame: usize },

    #[error("enumeration needs {required} sequences, budget is {cap}")]
    BudgetExceeded { required: u128, cap: u128 },

    #[error("session {session} has no path from its source to its destination")]
    NoPath { session: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}
