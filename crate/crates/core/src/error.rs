use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ensemble produced zero entries after {0} resampling attempts")]
    ZeroEntries(usize),
    #[error("planted outcome is identically zero")]
    DegenerateOutcome,
    #[error("matrix entry A[{row}][{col}] = {value:e} is too small to divide by")]
    DegenerateEntry { row: usize, col: usize, value: f64 },
    #[error("non-positive or non-finite variance at edge ({row}, {col}): {value}")]
    BadVariance { row: usize, col: usize, value: f64 },
    #[error("instance is rank deficient: {0}")]
    RankDeficient(String),
    #[error("term count {count} exceeds enumeration cap {cap}")]
    TermCap { count: f64, cap: f64 },
    #[error("grid window too narrow: {0}")]
    GridTooNarrow(String),
    #[error("density has zero or non-finite mass: {0}")]
    DegenerateDensity(String),
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
