use thiserror::Error;

use crate::model::SubsetKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid response data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A normal density with zero variance evaluated away from its mean.
    #[error("zero variance with nonzero random effect {value} (density undefined)")]
    DegenerateDensity { value: f64 },

    #[error("quadrature order {0} out of range 1..=100")]
    OrderOutOfRange(usize),

    #[error("design too large for exact quadrature: {points} tensor points exceed cap {cap}")]
    TooLarge { points: f64, cap: f64 },

    #[error("enumeration cap exceeded: {observations} observations (cap {cap})")]
    EnumerationCap { observations: usize, cap: usize },

    #[error("subset {0:?} is empty for this design")]
    EmptySubset(SubsetKind),

    #[error("subset MLE diverges: subset mean {0} is on the boundary of (0, 1)")]
    SubsetMleDiverges(f64),

    #[error("parameter on or outside the box boundary: {0}")]
    Boundary(String),

    #[error("non-finite objective value at {0}")]
    NonFinite(String),

    #[error("empty parameter grid: {0}")]
    EmptyGrid(String),

    #[error("information identity violated: max residual {0:e}")]
    IdentityViolation(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
