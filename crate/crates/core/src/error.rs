use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("metric is degenerate at {point:?} (scaled |det| = {scaled_det:e})")]
    DegenerateMetric { point: Vec<f64>, scaled_det: f64 },
    #[error("metric has {found} negative eigenvalues at {point:?}, declared index {declared}")]
    SignatureMismatch {
        point: Vec<f64>,
        declared: usize,
        found: usize,
    },
    #[error("metric is not symmetric at {point:?} (asymmetry {asymmetry:e})")]
    AsymmetricMetric { point: Vec<f64>, asymmetry: f64 },
    #[error("vector must be nonzero")]
    ZeroVector,
    #[error("finite differences unstable: step-halving discrepancy {discrepancy:e} exceeds value {value:e}")]
    FdUnstable { value: f64, discrepancy: f64 },
    #[error("invalid chart domain: {0}")]
    InvalidDomain(String),
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFiniteRhs { t: f64 },
    #[error("system reached the horizon at tightened tolerance; no escape detected")]
    NotIncomplete,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("bounding function is not positive at x = {x} (value {value})")]
    NonPositiveAlpha { x: f64, value: f64 },
    #[error("bounding function decreases near x = {x}")]
    NotNondecreasing { x: f64 },
    #[error("energy level {e} must exceed V0(0) = {v0}")]
    EnergyTooLow { e: f64, v0: f64 },
    #[error("sampling region is empty")]
    EmptyRegion,
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("input constant {name} must be positive (got {value})")]
    NonPositiveInput { name: String, value: f64 },
    #[error("fundamental tensor is not strongly convex (min eigenvalue {min_eigenvalue:e}, threshold {threshold:e})")]
    NotStronglyConvex { min_eigenvalue: f64, threshold: f64 },
    #[error("unsupported dimension {0}")]
    BadDimension(usize),
    #[error("u-velocity vanishes; the Riemannian reduction does not apply")]
    LightlikeUOrbit,
    #[error("reference vector field vanishes at {point:?}")]
    ZeroV { point: Vec<f64> },
    #[error("unknown scenario {name:?}; available: {available:?}")]
    UnknownScenario {
        name: String,
        available: Vec<String>,
    },
    #[error("parse error at byte {offset}: expected one of {expected:?}")]
    Parse {
        offset: usize,
        expected: Vec<String>,
    },
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("configuration error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
