//! Crate-wide error type.
//!
//! Every fallible operation in the library reports through [`Error`]; there
//! are no panics on bad input. Variants carry enough context (indices, group
//! names, byte offsets, config line numbers) to make failures actionable
//! without a debugger.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A norm or reduction was asked of a tensor with no elements.
    #[error("tensor is empty")]
    EmptyTensor,

    /// Elementwise operands (or a gradient/parameter pair) disagree in shape.
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// Tensor construction where the data length does not equal the shape product.
    #[error("tensor data length {len} does not match shape {shape:?}")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },

    /// Elementwise division hit a zero divisor.
    #[error("division by zero at element {index}")]
    DivisionByZero { index: usize },

    /// Two parameter groups share a name.
    #[error("duplicate parameter group name `{0}`")]
    DuplicateGroup(String),

    /// A gradient list does not line up with the parameter set it targets.
    #[error("group count mismatch: {params} parameter groups, {grads} gradient tensors")]
    GroupCountMismatch { params: usize, grads: usize },

    /// An optimizer step received a NaN or infinite gradient entry.
    /// The step is rejected and optimizer state is left untouched.
    #[error("non-finite gradient entry in group `{group}`")]
    NonFiniteGradient { group: String },

    /// An optimizer step would have produced non-finite parameters.
    /// The step is rejected and optimizer state is left untouched.
    #[error("step produced non-finite parameters in group `{group}`")]
    StepDiverged { group: String },

    /// A hyperparameter is outside its legal range (alpha <= 0, beta >= 1, ...).
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    /// A diagonal projection metric entry was zero or negative.
    #[error("metric entry must be positive, got {value} at element {index}")]
    NonPositiveMetric { index: usize, value: f64 },

    /// SGD with momentum > 0 was asked to step without a velocity buffer.
    #[error("momentum buffer not allocated in optimizer state")]
    MissingMomentumBuffer,

    /// AMSGrad was asked to step without a running-max buffer.
    #[error("vmax buffer not allocated in optimizer state")]
    MissingVmaxBuffer,

    /// A schedule or bias correction was queried at t = 0; steps are 1-based.
    #[error("step index must be >= 1")]
    ZeroStep,

    /// Box constraint with lower > upper (or a NaN bound).
    #[error("malformed box: lower {lower} > upper {upper} at coordinate {index}")]
    MalformedBox {
        index: usize,
        lower: f64,
        upper: f64,
    },

    /// A bounded box does not cover the same number of coordinates as the
    /// point or parameter set it is applied to.
    #[error("box has {box_dim} coordinates but the point has {point_dim}")]
    BoxDimMismatch { box_dim: usize, point_dim: usize },

    /// A point violated a feasibility precondition.
    #[error("point outside feasible box at coordinate {index}")]
    OutsideBox { index: usize },

    /// A class label does not fit the declared number of classes.
    #[error("label {label} out of range for {classes} classes (sample {index})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    /// IDX file rejected; `offset` is the byte offset where parsing failed.
    #[error("idx parse error in `{path}` at byte {offset}: {msg}")]
    IdxParse {
        path: String,
        offset: usize,
        msg: String,
    },

    /// Config file rejected at a specific line (1-based).
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// Config rejected for a reason that has no single line (e.g. a missing key).
    #[error("config error: {0}")]
    ConfigGeneral(String),

    /// Any other violated mathematical precondition (gamma >= 1, degenerate
    /// samples, checkpoint past end of trace, ...).
    #[error("{0}")]
    Domain(String),

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Helper for wrapping `std::io::Error` with the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
