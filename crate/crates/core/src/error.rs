use alloc::string::String;
use core::fmt;

use crate::probability::Distribution;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    Argument(String),
    /// Alphabets or kernel shapes do not compose.
    Composition(String),
    /// A product state space exceeds the configured cell budget.
    Size { cells: u128, budget: u128 },
    /// A kernel row does not sum to one (or has a negative entry).
    Normalization { row: usize, sum: f64 },
    /// Every conditioning event has zero mass.
    DegenerateConditioning,
    /// The chain has more than one stationary distribution; one of them is carried along.
    NonUniqueStationary(Distribution),
    /// An iterative method failed to reach its tolerance.
    Numerical(String),
    /// A target distortion lies outside the attainable interval.
    Range { target: f64, d_min: f64, d_max: f64 },
    /// A concentration bound is not valid at the requested horizon.
    Inapplicable { n: u64, threshold: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Composition(msg) => write!(f, "inconsistent composition: {msg}"),
            Error::Size { cells, budget } => {
                write!(f, "state space of {cells} cells exceeds budget of {budget}")
            }
            Error::Normalization { row, sum } => {
                write!(f, "row {row} is not a probability vector (sum = {sum:.17})")
            }
            Error::DegenerateConditioning => write!(f, "all conditioning events have zero mass"),
            Error::NonUniqueStationary(_) => {
                write!(f, "chain is reducible: stationary distribution is not unique")
            }
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::Range { target, d_min, d_max } => {
                write!(f, "target distortion {target} outside attainable range ({d_min}, {d_max}); D_max = {d_max}")
            }
            Error::Inapplicable { n, threshold } => {
                write!(f, "bound is inapplicable at n = {n}; requires n > {threshold}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
