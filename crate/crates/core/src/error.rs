//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by graph surgery, model construction, estimation and
/// sampling. Input validation failures carry enough context to print a
/// one-line diagnostic.
#[derive(Debug, Error)]
pub enum Error {
    /// A node label was used that is not part of the graph.
    #[error("unknown node `{0}`")]
    UnknownNode(String),

    /// Two node sets that must be disjoint share a label.
    #[error("node sets overlap on `{0}`")]
    OverlappingSets(String),

    /// A node set that must be nonempty was empty.
    #[error("node set `{0}` must be nonempty")]
    EmptyNodeSet(&'static str),

    /// Adding the edges would create a directed cycle.
    #[error("graph contains a directed cycle through `{0}`")]
    Cyclic(String),

    /// An edge was declared twice.
    #[error("duplicate edge `{0} {1}`")]
    DuplicateEdge(String, String),

    /// A self-loop was declared.
    #[error("self-loop on `{0}`")]
    SelfLoop(String),

    /// Do-calculus rule index outside 1..=3.
    #[error("unknown do-calculus rule {0}; expected 1, 2 or 3")]
    UnknownRule(u8),

    /// A probability parameter fell outside [0, 1].
    #[error("probability `{name}` = {value} outside [0, 1]")]
    InvalidProbability { name: String, value: f64 },

    /// A simplex column does not sum to one.
    #[error("simplex `{name}` sums to {sum}, expected 1 within {tol}")]
    InvalidSimplex { name: String, sum: f64, tol: f64 },

    /// Conditioning event has zero probability, so the conditional is undefined.
    #[error("conditional undefined: event {0} has probability zero")]
    UndefinedConditional(String),

    /// An estimator was asked for on an empty arm or stratum.
    #[error("estimate undefined: {0} has no observations")]
    UndefinedEstimate(String),

    /// The contingency table is empty where data is required.
    #[error("contingency table is empty")]
    EmptyTable,

    /// The chain has no kept draws.
    #[error("chain has no draws")]
    EmptyChain,

    /// Run configuration violates its invariants.
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    /// All importance weights underflowed to zero.
    #[error("degenerate importance weights: all {0} weights are zero")]
    DegenerateWeights(usize),

    /// Malformed textual input (edge lists, CSV, JSON).
    #[error("parse error: {0}")]
    Parse(String),

    /// I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
