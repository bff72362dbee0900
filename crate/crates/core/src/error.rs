use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("query point {dist_m:.3e} m from a dipole centre (epsilon {eps_m:.1e} m)")]
    SingularPoint { dist_m: f64, eps_m: f64 },
    #[error("zero field vector has no orientation")]
    ZeroField,
    #[error("pose angle {deg:.2} deg is unphysical")]
    UnphysicalPose { deg: f64 },
    #[error("unknown surface kind `{0}`")]
    UnknownSurface(String),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("stopper constraint infeasible: {0}")]
    ConstraintInfeasible(String),
    #[error("offset outside the working space: {0}")]
    OutsideWorkspace(String),
    #[error("trajectory did not converge within {cycles} cycles")]
    NoConvergence { cycles: usize, partial: Vec<[f64; 2]> },
    #[error("config: {0}")]
    Config(String),
    #[error("unknown scene `{0}`")]
    UnknownScene(String),
    #[error("scene rejected: {0}")]
    BadScene(String),
    #[error("reference `{0}` has no provenance")]
    MissingProvenance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidParameter { name, reason: reason.into() }
}
