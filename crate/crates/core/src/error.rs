use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain is not a convex polygon: {0}")]
    NonConvexDomain(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("degenerate dyadic decomposition: {0}")]
    DegenerateDecomposition(String),

    #[error("invalid subdomain: {0}")]
    InvalidSubdomain(String),

    #[error("mismatched spaces: {0}")]
    MismatchedSpaces(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate element {element}: local Gram condition number {condition:e}")]
    DegenerateElement { element: usize, condition: f64 },

    #[error("bump clearance violated: {0}")]
    Clearance(String),

    #[error("compatibility failure: {0}")]
    Compatibility(String),

    #[error("cutoff support leaves the domain: {0}")]
    CutoffSupport(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
