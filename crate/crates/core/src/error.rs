//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building theories, wiring fragments,
/// or evaluating duotensors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // ---- theory construction ----
    #[error("type `{0}` is already registered")]
    DuplicateType(String),
    #[error("type `{0}` is not registered")]
    UnknownType(String),
    #[error("fiducial {role} set for type `{type_name}` has {got} elements, expected {expected}")]
    FiducialCount {
        type_name: String,
        role: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("fiducial {role} set for type `{type_name}` is linearly dependent (sigma_min/sigma_max = {ratio:.3e})")]
    DependentFiducials {
        type_name: String,
        role: &'static str,
        ratio: f64,
    },
    #[error("fiducial {role} {index} for type `{type_name}` violates constraint `{constraint}`")]
    UnphysicalFiducial {
        type_name: String,
        role: &'static str,
        index: usize,
        constraint: &'static str,
    },
    #[error(
        "hopping metric for type `{type_name}` is singular (condition estimate {condition:.3e})"
    )]
    SingularMetric { type_name: String, condition: f64 },
    #[error("fiducial transform for type `{0}` is singular")]
    SingularTransform(String),
    #[error("operation `{0}` is already registered")]
    DuplicateOperation(String),
    #[error("operation `{apparatus}` mixes backends across its port types")]
    MixedBackend { apparatus: String },

    // ---- duotensor algebra ----
    #[error("duotensor has no port labelled `{0}`")]
    NoSuchPort(String),
    #[error("type mismatch: {context}")]
    TypeMismatch { context: String },
    #[error("colour clash: link `{left}` -- `{right}` has the same colour at both ends")]
    ColorClash { left: String, right: String },
    #[error("direction mismatch: link `{left}` -- `{right}` must pair an output with an input")]
    DirectionMismatch { left: String, right: String },
    #[error("duplicate port label `{0}`")]
    DuplicatePort(String),
    #[error("index lists do not match: {context}")]
    IndexMismatch { context: String },
    #[error("no hopping metric available for type `{0}`")]
    MissingMetric(String),

    // ---- circuit wiring ----
    #[error("instance `{0}` already exists")]
    DuplicateInstance(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("port {port} is not open")]
    PortNotOpen { port: String },
    #[error("port {port} is already wired")]
    PortTaken { port: String },
    #[error("composition would create a cycle through {0:?}")]
    CycleCreated(Vec<String>),
    #[error("not a circuit: {0}")]
    InvalidCircuit(String),
    #[error("fragment fails validation: {0}")]
    ValidationFailed(String),
    #[error("foliation is incompatible with the circuit: {0}")]
    IncompatibleFoliation(String),

    // ---- backends ----
    #[error("shape mismatch for operation `{apparatus}`: {context}")]
    ShapeMismatch { apparatus: String, context: String },
    #[error("transition matrix for `{apparatus}` is unphysical: {context}")]
    UnphysicalZ { apparatus: String, context: String },
    #[error(
        "Kraus set for `{apparatus}` is trace increasing (max eigenvalue excess {excess:.3e})"
    )]
    TraceIncreasing { apparatus: String, excess: f64 },
    #[error("no operation registered for apparatus `{apparatus}` outcome `{outcome}`")]
    MissingOperation { apparatus: String, outcome: String },
    #[error("enumeration oracle refused: joint state space has {size} assignments (cap {cap})")]
    EnumerationTooLarge { size: u128, cap: u128 },

    // ---- engine ----
    #[error("fragments are not the same experiment: {0}")]
    NotSameExperiment(String),

    // ---- DSL ----
    #[error("lex error at {line}:{col}: {message}")]
    LexError {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("label `{label}` is produced (superscripted) more than once")]
    DuplicateProducer { label: String },
    #[error("label `{label}` is used more than twice")]
    TripleUse { label: String },
    #[error("type clash for `{apparatus}`: {context}")]
    TypeClash { apparatus: String, context: String },
    #[error("wiring contains a cycle through {0:?}")]
    CycleError(Vec<String>),

    // ---- files ----
    #[error("malformed {what}: {context}")]
    Malformed { what: &'static str, context: String },
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateType(_) => "duplicate_type",
            Error::UnknownType(_) => "unknown_type",
            Error::FiducialCount { .. } => "fiducial_count",
            Error::DependentFiducials { .. } => "dependent_fiducials",
            Error::UnphysicalFiducial { .. } => "unphysical_fiducial",
            Error::SingularMetric { .. } => "singular_metric",
            Error::SingularTransform(_) => "singular_transform",
            Error::DuplicateOperation(_) => "duplicate_operation",
            Error::MixedBackend { .. } => "mixed_backend",
            Error::NoSuchPort(_) => "no_such_port",
            Error::TypeMismatch { .. } => "type_mismatch",
            Error::ColorClash { .. } => "color_clash",
            Error::DirectionMismatch { .. } => "direction_mismatch",
            Error::DuplicatePort(_) => "duplicate_port",
            Error::IndexMismatch { .. } => "index_mismatch",
            Error::MissingMetric(_) => "missing_metric",
            Error::DuplicateInstance(_) => "duplicate_instance",
            Error::UnknownInstance(_) => "unknown_instance",
            Error::PortNotOpen { .. } => "port_not_open",
            Error::PortTaken { .. } => "port_taken",
            Error::CycleCreated(_) => "cycle_created",
            Error::InvalidCircuit(_) => "invalid_circuit",
            Error::ValidationFailed(_) => "validation_failed",
            Error::IncompatibleFoliation(_) => "incompatible_foliation",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::UnphysicalZ { .. } => "unphysical_z",
            Error::TraceIncreasing { .. } => "trace_increasing",
            Error::MissingOperation { .. } => "missing_operation",
            Error::EnumerationTooLarge { .. } => "enumeration_too_large",
            Error::NotSameExperiment(_) => "not_same_experiment",
            Error::LexError { .. } => "lex_error",
            Error::DuplicateProducer { .. } => "duplicate_producer",
            Error::TripleUse { .. } => "triple_use",
            Error::TypeClash { .. } => "type_clash",
            Error::CycleError(_) => "cycle_error",
            Error::Malformed { .. } => "malformed",
        }
    }
}
