use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("interval {index} of the box is unbounded")]
    UnboundedBox { index: usize },

    #[error("interval {index} of the box is empty ({lo} > {hi})")]
    EmptyInterval { index: usize, lo: f64, hi: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(
        "residual {residual:e} is at the kink; the square-root penalty gradient does not exist"
    )]
    AtKink { residual: f64 },

    #[error("order {order} exceeds the enumeration limit of {limit}")]
    TooLarge { order: usize, limit: usize },

    #[error("solution set is empty; distance is +inf")]
    EmptySolutionSet,

    #[error("solution set at path index {index} has {count} points, expected exactly one")]
    NonUniqueSolution { index: usize, count: usize },

    #[error("need at least {required} usable samples, found {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("polyhedron is empty")]
    EmptyPolyhedron,

    #[error("unknown reproduction case `{0}`")]
    UnknownCase(String),
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}
