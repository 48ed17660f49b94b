use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("degenerate surface: zero area element at grid node (theta index {i_theta}, zeta index {i_zeta})")]
    DegenerateSurface { i_theta: usize, i_zeta: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("evaluation point {point} coincides with source node {node}")]
    NodeCollision { point: usize, node: usize },

    #[error("surfaces intersect: minimum distance {distance:e} m")]
    SurfacesIntersect { distance: f64 },

    #[error("rupture threshold exceeded: |L| = {force:e} Pa >= c1 at node {node}")]
    Rupture { node: usize, force: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
