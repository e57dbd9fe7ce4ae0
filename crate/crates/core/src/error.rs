use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two joints joined by an edge coincide, so the limb has no direction.
    #[error("degenerate edge #{edge} ({from}, {to}): joints coincide")]
    DegenerateEdge { edge: usize, from: usize, to: usize },

    /// Fixed-point undistortion did not reach the requested residual.
    #[error("undistortion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The input admits no unique answer (e.g. root depth of a flat pose).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("root depth {0} places the pose behind the camera")]
    BehindCamera(f64),

    /// A numerical routine failed to meet its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A failure tied to a particular pixel of a render.
    #[error("pixel (row {row}, col {col}): {source}")]
    Pixel {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
