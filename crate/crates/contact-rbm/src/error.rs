use thiserror::Error;

/// Errors produced by mesh generation, assembly and the nonlinear solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid contact arc: {0}")]
    InvalidArc(String),
    #[error("mesh generation failed: {0}")]
    MeshFailure(String),
    #[error("unsupported polynomial degree {0} (expected 1 or 2)")]
    UnsupportedDegree(usize),
    #[error("tangent system is singular or not factorizable (pivot {pivot:.3e} at column {col})")]
    SingularTangent { col: usize, pivot: f64 },
    #[error("no convergence after {iters} iterations (last relative change {last_change:.3e})")]
    NonConvergence { iters: usize, last_change: f64 },
    #[error("requested {requested} POD modes but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("EIM training family is degenerate (first member identically zero)")]
    DegenerateFamily,
    #[error("metric not applicable: {0}")]
    NotApplicable(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
