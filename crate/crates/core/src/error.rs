use thiserror::Error;

use crate::searchgraph::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse molecule {input:?} in domain {domain}: {reason}")]
    Syntax {
        domain: String,
        input: String,
        reason: String,
    },

    #[error("invalid reaction: {0}")]
    InvalidReaction(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("node {0:?} is closed and cannot be expanded")]
    ExpandClosed(NodeId),

    #[error("expansion of molecule {molecule} failed: {reason}")]
    Oracle { molecule: String, reason: String },

    #[error("target {0} has no successful route")]
    NoRoute(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
