use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::Side;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no RoI points available")]
    EmptyCloud,

    #[error("total criticality of the RoI is zero")]
    ZeroCriticality,

    #[error("invalid sensor spec `{name}`: {reason}")]
    InvalidSensor { name: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("enumeration budget exceeded: {count} candidates, budget {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("only {found} feasible configurations observed, {needed} required")]
    InsufficientSupport { found: usize, needed: usize },

    #[error("no result for side {0}")]
    MissingSide(Side),

    #[error("{requested} qubits requested, the statevector simulator is capped at {max}; shrink the grid or use the annealer")]
    TooManyQubits { requested: usize, max: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("file is empty: {0}")]
    EmptyFile(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("side {side}, solver {solver}: {source}")]
    Context {
        side: Side,
        solver: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
