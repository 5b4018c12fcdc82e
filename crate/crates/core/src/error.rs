use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("exponential argument {0} exceeds the representable range")]
    RangeExceeded(f64),
    #[error("point {0} is too close to the boundary of the disk")]
    NearBoundary(f64),
    #[error("matrix is not in SU(1,1) (or has a non-real conjugate): residual {0:e}")]
    NotReal(f64),
    #[error("reduction did not terminate after {0} steps")]
    ReductionStalled(usize),
    #[error("group ball exceeded the element cap of {0}")]
    BallTooLarge(usize),
    #[error("group ball radius {0} exceeds the supported maximum")]
    BallRadius(f64),
    #[error("bump width {width} must be below half the systole ({limit})")]
    WidthTooLarge { width: f64, limit: f64 },
    #[error("time change is not certified positive: epsilon*sup|f0| = {0}")]
    NotPositive(f64),
    #[error("Newton inversion of the cocycle did not converge (residual {0:e})")]
    NewtonFailed(f64),
    #[error("insufficient signal: {usable} usable points, need at least {needed}")]
    InsufficientSignal { usable: usize, needed: usize },
    #[error("grid is not uniform")]
    NonUniformGrid,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
