use thiserror::Error;

/// Errors produced by distribution constructors, mechanisms, and tests.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet must be even, got k = {0}")]
    OddAlphabet(usize),
    #[error("alphabet size must be positive")]
    EmptyAlphabet,
    #[error("pmf entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },
    #[error("pmf sums to {0}, expected 1 within 1e-12")]
    MassNotNormalized(f64),
    #[error("distributions have mismatched sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("chi-square divergence requires strictly positive reference, q({0}) = 0")]
    ZeroReference(usize),
    #[error("parameter {name} out of range: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("{0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("public coin must have cardinality k/2 = {expected}, got {got}")]
    BadCoinSize { expected: usize, got: usize },
    #[error("output space too large; use per-bit audit (k = {0} > 16)")]
    OutputSpaceTooLarge(usize),
    #[error("batch mechanism mismatch: expected {expected}, got {got}")]
    MechanismMismatch { expected: String, got: String },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample count {n} is not divisible by {reps} repetitions")]
    IndivisibleBatch { n: usize, reps: usize },
    #[error("learned product violates minimum-mass contract: min = {min}, required {required}")]
    ProductFloorViolated { min: f64, required: f64 },
    #[error("enumeration limit exceeded: {0}")]
    EnumerationTooLarge(String),
    #[error("invalid sign vector: entries must be +1 or -1")]
    BadSignVector,
}

pub type Result<T> = std::result::Result<T, Error>;
