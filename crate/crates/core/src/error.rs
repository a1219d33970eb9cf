use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the numerical kernels. Each variant names the module
/// that produced it so that the CLI can report provenance.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qdiff: {0}")]
    InvalidDifferential(String),

    #[error("qdiff: square-root branch tracking failed near z = {at}: {reason}")]
    BranchTracking { at: Complex64, reason: String },

    #[error("flatgeom: trajectory hit a singularity near z = {at}")]
    HitSingularity { at: Complex64 },

    #[error("flatgeom: trajectory left the domain at z = {at}")]
    LeftDomain { at: Complex64 },

    #[error("flatgeom: loop failed to close (gap {gap:.3e})")]
    ClosureFailure { gap: f64 },

    #[error("flatgeom: {0}")]
    Exhaustion(String),

    #[error("hypgeom: {0}")]
    Geometry(String),

    #[error("bochner: {0}")]
    Grid(String),

    #[error("bochner: Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("bochner: {0}")]
    DegenerateFit(String),

    #[error("hmap: {0}")]
    Mesh(String),

    #[error("hmap: sweep iteration did not converge after {sweeps} sweeps (displacement {displacement:.3e})")]
    SweepDiverged { sweeps: usize, displacement: f64 },

    #[error("hmap: {0}")]
    Sampling(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidDifferential(_) | Error::Json(_)
        )
    }
}
