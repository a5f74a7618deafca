use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh generation failed: {0}")]
    GenerationFailure(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("curve edges do not form a single closed loop: {0}")]
    CurveNotClosed(String),

    #[error("curve edge {edge} touches the domain boundary")]
    CurveOnBoundary { edge: usize },

    #[error("cell {cell} is singular (|det| = {det:e})")]
    SingularCell { cell: usize, det: f64 },

    #[error("mesh tangled: cell {cell} has signed area {area:e}")]
    TangledMesh { cell: usize, area: f64 },

    #[error("boundary vertex {vertex} has nonzero velocity")]
    BoundaryVelocity { vertex: usize },

    #[error("reference Vandermonde matrix is ill-conditioned (cond = {0:e})")]
    IllConditioned(f64),

    #[error("nodal duality violated on cell: max |n_i(psi_j) - delta_ij| = {0:e}")]
    DualityFailure(f64),

    #[error("point ({x}, {y}) lies outside the cell")]
    PointOutsideCell { x: f64, y: f64 },

    #[error("linear solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("forward model failed at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every ensemble member failed in the forward model")]
    AllMembersFailed,

    #[error("only {valid} ensemble member(s) survived the forward model, need at least 2")]
    TooFewValidMembers { valid: usize },

    #[error("ensemble Gram matrix is singular (cond = {0:e})")]
    SingularGram(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Unwraps `StepFailed` wrappers down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the error comes from the geometric forward model (mesh motion)
    /// rather than from a linear solver.
    pub fn is_forward_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::TangledMesh { .. }
                | Error::SingularCell { .. }
                | Error::BoundaryVelocity { .. }
                | Error::AllMembersFailed
                | Error::TooFewValidMembers { .. }
                | Error::PointOutsideCell { .. }
        )
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::NotConverged { .. } | Error::NotPositiveDefinite | Error::SingularGram(_)
        )
    }
}
