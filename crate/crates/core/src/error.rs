use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular kernel evaluated at the origin without regularization")]
    SingularEvaluation,
    #[error("point {point:?} lies outside the periodic cell [-{half_width}, {half_width})")]
    DomainMismatch { point: Vec<f64>, half_width: f64 },
    #[error("unsupported kernel family: {0}")]
    UnsupportedFamily(String),
    #[error("invalid input: {0}")]
    InvalidSpec(String),
    #[error("cell-list cutoff {cutoff} is below the kernel decay radius {required}")]
    CutoffViolation { cutoff: f64, required: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("file format error: {0}")]
    FileFormat(String),
    #[error("{what} = {n} exceeds the supported limit {limit}")]
    TooLarge { what: &'static str, n: usize, limit: usize },
    #[error("bandwidth {bandwidth} is below twice the cell size {cell}")]
    GridTooCoarse { bandwidth: f64, cell: f64 },
    #[error("density has negative value {0}")]
    NegativeDensity(f64),
    #[error("CFL violated: dt = {dt} exceeds the advective bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("initial data carries mass {mass:e} in the boundary band")]
    BoundaryMass { mass: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
