use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("count {count} of item {item} exceeds its cap {cap}")]
    CountExceedsCap { item: usize, count: u32, cap: u32 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("enumeration budget exceeded: {states:.3e} states > budget {budget:.3e}")]
    BudgetExceeded { states: f64, budget: f64 },

    #[error("instance has no feasible assignment")]
    NoFeasible,

    #[error("non-finite value in {engine} at sweep {sweep}: {what}")]
    NonFinite {
        engine: &'static str,
        sweep: usize,
        what: String,
    },

    #[error("engine state does not match instance: {0}")]
    StateMismatch(String),

    #[error("at pick {pick}: {source}")]
    AtPick {
        pick: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("saddle point solver failed at M={m}: {reason}")]
    Saddle { m: f64, reason: String },

    #[error("no sign change of the entropy on M in [0, {m_ub}] ({} points sampled)", curve.len())]
    NoSignChange {
        m_ub: f64,
        curve: Vec<crate::replica::EntropyPoint>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
