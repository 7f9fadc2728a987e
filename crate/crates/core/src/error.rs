use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("sampling step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("series is degenerate (zero spread)")]
    DegenerateSeries,
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("{segment} segment has length {len}, too short")]
    SegmentTooShort { segment: &'static str, len: usize },
    #[error("gap at index {index} is not bounded by valid samples on both sides")]
    LeadingOrTrailingGap { index: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series too short: need {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("window too short: need {needed} samples, got {got}")]
    WindowTooShort { needed: usize, got: usize },
    #[error("no valid neighbour found outside the exclusion window")]
    NoValidNeighbor,
    #[error("profile is empty")]
    EmptyProfile,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("dataset is empty: {0}")]
    EmptyDataset(&'static str),
    #[error("truth value at index {index} is zero")]
    ZeroTruthValue { index: usize },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("model variant has no local branch")]
    VariantHasNoLocalBranch,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}
