use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension must be at least 1")]
    EmptyDimension,
    #[error("noise scale must be finite and nonnegative, got {0}")]
    InvalidSigma(f64),
    #[error("reward vector norm {0} exceeds 1")]
    NormTooLarge(f64),
    #[error("requested norm {0} is outside [0, 1]")]
    InvalidNorm(f64),
    #[error("sparsity {sparsity} is invalid for dimension {dim}")]
    InvalidSparsity { sparsity: usize, dim: usize },
    #[error("reward vector has {nonzeros} nonzeros but sparsity is {sparsity}")]
    SupportTooLarge { nonzeros: usize, sparsity: usize },
    #[error("action norm {0} exceeds 1")]
    ActionOutsideBall(f64),
    #[error("action dimension {got} does not match instance dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry in vector")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("clip radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("grid with radius {radius} and resolution {resolution} is too fine to index")]
    GridTooFine { radius: f64, resolution: f64 },
    #[error("value {value} lies outside [-{radius}, {radius}]")]
    OutOfRange { value: f64, radius: f64 },
    #[error("vector norm {norm} exceeds clip radius {radius}")]
    NormOutOfRange { norm: f64, radius: f64 },
    #[error("index {index} outside the grid range +/-{half}")]
    IndexOutOfRange { index: i64, half: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("coordinate {coordinate}: header bit at offset {offset} must be 0")]
    MalformedHeader { coordinate: usize, offset: usize },
    #[error("coordinate {coordinate}: stream truncated")]
    Truncated { coordinate: usize },
    #[error("coordinate {coordinate}: magnitude {magnitude} exceeds field limit {limit}")]
    MagnitudeOverflow { coordinate: usize, magnitude: u64, limit: u64 },
    #[error("coordinate {coordinate}: negative zero is not a canonical encoding")]
    NegativeZero { coordinate: usize },
    #[error("{0} trailing bits after the last coordinate")]
    TrailingBits(usize),
    #[error("message encoding {found} cannot be decoded as {expected}")]
    WrongEncoding { expected: &'static str, found: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("{field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("epoch {k} outside 1..={max}")]
    EpochOutOfRange { k: u32, max: u32 },
    #[error("sparse parameters requested on a dense configuration")]
    NotSparse,
}

impl ScheduleError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ScheduleError::InvalidConfig { field, reason: reason.into() }
    }
}

/// A violated protocol contract. These indicate bugs, not valid outcomes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("epoch {epoch}: expected {expected} agent messages, got {got}")]
    MissingMessages { epoch: u32, expected: usize, got: usize },
    #[error("epoch {epoch}: {direction} message of {bits} bits exceeds the size bound {bound}")]
    MessageTooLarge { epoch: u32, direction: &'static str, bits: usize, bound: f64 },
    #[error("epoch {epoch}: agent {agent} estimate diverged from the server")]
    Desynchronized { epoch: u32, agent: usize },
    #[error("operation not valid in phase {0}")]
    WrongPhase(&'static str),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("protocol violation: {0}")]
    Protocol(#[from] ProtocolError),
}

impl From<QuantError> for SimError {
    fn from(e: QuantError) -> Self {
        SimError::Protocol(ProtocolError::Quant(e))
    }
}

impl From<CodecError> for SimError {
    fn from(e: CodecError) -> Self {
        SimError::Protocol(ProtocolError::Codec(e))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("need at least {need} values of the swept variable, got {got}")]
    TooFewGroups { got: usize, need: usize },
    #[error("group {0} has no observations")]
    EmptyGroup(usize),
    #[error("log-log fit needs positive values, got {0}")]
    NonPositive(f64),
    #[error("records differ in {0}, which is not the swept variable")]
    Incomparable(&'static str),
}
