//! Error type shared across the library.

use std::fmt;

/// Everything that can go wrong while building systems or running computations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Alphabet larger than the packed-word representation supports.
    AlphabetTooLarge { size: usize, max: usize },
    /// Adjacency matrix has a row with no outgoing edge.
    DegenerateRow { index: usize },
    /// Adjacency matrix has a column with no incoming edge.
    DegenerateColumn { index: usize },
    /// No power of the adjacency matrix up to the Wielandt bound is positive.
    NotPrimitive { tried: usize },
    /// Symbol index outside the alphabet.
    SymbolOutOfRange { symbol: usize, m: usize },
    /// A word contains a forbidden transition.
    WordNotAdmissible { word: String },
    /// An enumeration would materialize more words than the configured cap.
    EnumerationCap { requested: u128, cap: u64 },
    /// A ball family or counting pass would visit more words than the cap allows.
    ResolutionTooFine { n: usize, count: u64, cap: u64 },
    /// Potential window does not fit the measure order (needs k <= order + 1).
    OrderMismatch { order: usize, step: usize },
    InvalidPotential { reason: String },
    /// Metric potential fails max phi_1 + C < 0 or has the wrong shape.
    InvalidMetric { reason: String },
    /// An iterative solver hit its iteration cap before certification.
    NonConvergence { what: &'static str, iterations: usize },
    /// Requested level alpha lies outside the rotation set of the potential.
    NotInLPhi { alpha: Vec<f64> },
    /// The value range of a localizing function leaves the rotation set.
    RangeEscapesLPhi { lo: Vec<f64>, hi: Vec<f64> },
    /// Legendre infimum not attained; alpha sits on the boundary.
    BoundaryAlpha { alpha: Vec<f64> },
    /// Contraction ratios differ where a homogeneous system is required.
    NotHomogeneous,
    /// Potential has nonzero pressure where a normalized one is required.
    NotNormalized { pressure: f64 },
    /// The rotation set is lower-dimensional; a d-dimensional grid is refused.
    NotFullDimensional { rank: usize, d: usize },
    InvalidIfs { reason: String },
    /// Two IFS pieces overlap on an open set.
    OverlapViolation { a: usize, b: usize },
    /// Only d = 1 and d = 2 potentials are supported here.
    DimensionUnsupported { d: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::AlphabetTooLarge { size, max } => {
                write!(f, "alphabet size {size} exceeds supported maximum {max}")
            }
            Error::DegenerateRow { index } => {
                write!(f, "adjacency row {index} has no outgoing edge")
            }
            Error::DegenerateColumn { index } => {
                write!(f, "adjacency column {index} has no incoming edge")
            }
            Error::NotPrimitive { tried } => {
                write!(f, "adjacency matrix is not primitive (checked powers up to {tried})")
            }
            Error::SymbolOutOfRange { symbol, m } => {
                write!(f, "symbol {symbol} outside alphabet of size {m}")
            }
            Error::WordNotAdmissible { word } => write!(f, "word {word} is not admissible"),
            Error::EnumerationCap { requested, cap } => {
                write!(f, "enumeration of {requested} words exceeds cap {cap}")
            }
            Error::ResolutionTooFine { n, count, cap } => {
                write!(f, "ball family at n = {n} needs {count} words, over the cap {cap}")
            }
            Error::OrderMismatch { order, step } => {
                write!(f, "{step}-step potential cannot be averaged by an order-{order} measure")
            }
            Error::InvalidPotential { reason } => write!(f, "invalid potential: {reason}"),
            Error::InvalidMetric { reason } => write!(f, "invalid metric potential: {reason}"),
            Error::NonConvergence { what, iterations } => {
                write!(f, "{what} did not converge within {iterations} iterations")
            }
            Error::NotInLPhi { alpha } => {
                write!(f, "alpha {alpha:?} lies outside the rotation set")
            }
            Error::RangeEscapesLPhi { lo, hi } => {
                write!(f, "localizing range [{lo:?}, {hi:?}] escapes the rotation set")
            }
            Error::BoundaryAlpha { alpha } => {
                write!(f, "alpha {alpha:?} is on the rotation set boundary; no witness measure")
            }
            Error::NotHomogeneous => write!(f, "contraction ratios are not all equal"),
            Error::NotNormalized { pressure } => {
                write!(f, "potential has pressure {pressure:e}, expected 0")
            }
            Error::NotFullDimensional { rank, d } => {
                write!(f, "rotation set has affine dimension {rank} < {d}")
            }
            Error::InvalidIfs { reason } => write!(f, "invalid IFS: {reason}"),
            Error::OverlapViolation { a, b } => {
                write!(f, "IFS pieces {a} and {b} overlap on an open set")
            }
            Error::DimensionUnsupported { d } => {
                write!(f, "potentials of dimension {d} are not supported (d <= 2)")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
