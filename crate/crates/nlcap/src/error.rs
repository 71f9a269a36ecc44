use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A polytope whose halfspaces do not bound a compact set.
    #[error("unbounded body: {0}")]
    UnboundedBody(String),

    /// A body with empty interior was passed where a solid one is required.
    #[error("degenerate body: {0}")]
    DegenerateBody(String),

    /// The nonlinear solve stopped making progress.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// Fewer grid nodes across the body than the configured minimum.
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    /// A requested level set does not fit inside the truncated grid.
    #[error("level set outside grid: {0}")]
    LevelSetOutsideGrid(String),

    /// A per-direction support maximization failed to reach tolerance.
    #[error("convergence failure in support maximization: {0}")]
    SupportMaximization(String),

    /// A Minkowski instance violating the admissibility conditions.
    #[error("inadmissible instance: {0}")]
    InadmissibleInstance(String),

    /// The Minkowski iterate collapsed to a lower-dimensional set.
    #[error("degenerate collapse: {0}")]
    DegenerateCollapse(String),

    /// Malformed input data (JSON schema violations and similar).
    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
