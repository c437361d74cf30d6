use thiserror::Error;

use crate::treebank::{ParseError, RulesError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensorgrad::TensorError),

    #[error(transparent)]
    Conllu(#[from] ParseError),

    #[error(transparent)]
    Rules(#[from] RulesError),

    #[error("training diverged: non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("empty treebank")]
    EmptyTreebank,

    #[error("empty sentence")]
    EmptySentence,

    #[error("edge ({dep}, {head}) out of range for sentence of length {len}")]
    EdgeOutOfRange { dep: usize, head: usize, len: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("no order instances to train on")]
    NoInstances,

    #[error("the {0} variant needs a teacher")]
    MissingTeacher(&'static str),

    #[error("triple key lists differ")]
    KeyMismatch,

    #[error("{0}")]
    Statistics(String),

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
