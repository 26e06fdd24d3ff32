use thiserror::Error;

use crate::graph::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {}", join(.0))]
    InvalidGraph(Vec<Violation>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("path enumeration exceeded the cap of {0} paths")]
    PathCapExceeded(usize),

    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    #[error("policy does not induce an origin-to-destination path: {0}")]
    NotPathInducing(String),

    #[error("policy iteration did not terminate within {0} iterations")]
    NonTermination(u128),

    #[error("divergent prospect: the delivery never completes with positive probability")]
    DivergentProspect,

    #[error("truncation insufficient: tail mass {tail:e} still above epsilon at k_max = {k_max}")]
    TruncationInsufficient { tail: f64, k_max: usize },

    #[error("empty prospect")]
    EmptyProspect,

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("every simulated run hit the step cap of {0} attack events")]
    AllRunsTruncated(u64),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
