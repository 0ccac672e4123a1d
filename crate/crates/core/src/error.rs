use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at record {record}: {msg}")]
    Parse { record: usize, msg: String },

    #[error("record {record}: sample {sample} table {table_id} references row {index} but row_len is {row_len}")]
    OutOfBounds {
        record: usize,
        sample: usize,
        table_id: u32,
        index: u64,
        row_len: u64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("trace is empty: {0}")]
    EmptyTrace(String),

    #[error("trace holds {samples} samples, fewer than one batch of {batch}")]
    ShortTrace { samples: usize, batch: usize },

    #[error("index {index} out of range (limit {limit})")]
    Index { index: u64, limit: u64 },

    #[error("instance exceeds exact-solver limits: {0}")]
    TooLarge(String),

    #[error("no feasible plan: {0}")]
    Infeasible(String),

    #[error("plan violates {} constraint(s): {}", .0.len(), crate::planner::describe(.0))]
    Constraint(Vec<crate::planner::Violation>),
}

impl Error {
    pub(crate) fn parse(record: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            record,
            msg: msg.into(),
        }
    }

    /// True for errors that mean "the model has no valid answer" rather than
    /// broken input; the CLI maps these to exit code 2.
    pub fn is_constraint(&self) -> bool {
        matches!(self, Error::Infeasible(_) | Error::Constraint(_))
    }
}
