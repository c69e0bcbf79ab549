//! Sparse nonnegative tensor toolkit built around the generalized
//! Kullback-Leibler divergence.
//!
//! The crate provides:
//!
//! - [`SparseTensor`]: coordinate-format storage for N-way nonnegative
//!   tensors, with the contraction kernels (mode marginals, all-mode
//!   tensor-vector products, MTTKRP) every fitting algorithm needs.
//! - [`CpdModel`]: canonical polyadic models with sum-to-one factor
//!   columns and nonnegative component weights.
//! - [`kl_principal_component`]: the closed-form rank-1 minimizer of the
//!   generalized KL loss (weight = total mass, factors = normalized mode
//!   marginals).
//! - [`em::fit`]: rank-K fitting by expectation-maximization style
//!   majorization, with restarts and monotone loss guarantees.
//! - [`synth`]: a multinomial generative sampler for planted-model
//!   recovery experiments.
//! - [`ingest`] / [`classify`]: discretization of labeled continuous
//!   records into count tensors and naive-Bayes training/prediction on
//!   top of them.
//!
//! File formats (COO tensors, model files, bin-spec sidecars) live in
//! [`io`].

pub mod classify;
pub mod em;
pub mod ingest;
pub mod io;
pub mod klpc;
pub mod loss;
pub mod model;
pub mod synth;
pub mod tensor;

pub use classify::ClassConditionalModel;
pub use em::{FitOptions, FitReport};
pub use ingest::{BinSpec, LabeledDataset};
pub use klpc::kl_principal_component;
pub use model::{CpdModel, NormalizedModel};
pub use synth::PlantedInstance;
pub use tensor::SparseTensor;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor must have at least one mode")]
    EmptyShape,
    #[error("mode {mode} has size zero")]
    ZeroModeSize { mode: usize },
    #[error("index {index:?} out of range for shape {shape:?}")]
    IndexOutOfRange { index: Vec<usize>, shape: Vec<usize> },
    #[error("invalid entry value {value} (must be a finite nonnegative real)")]
    InvalidValue { value: f64 },
    #[error("mode index {mode} out of range for a {modes}-way tensor")]
    ModeOutOfRange { mode: usize, modes: usize },
    #[error("mode {mode}: expected length {expected}, got {got}")]
    LengthMismatch {
        mode: usize,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("model rank must be at least 1")]
    ZeroRank,
    #[error("component {component} has negative weight {value}")]
    NegativeWeight { component: usize, value: f64 },
    #[error("factor {mode} column {component} has invalid entry {value}")]
    InvalidFactorEntry {
        mode: usize,
        component: usize,
        value: f64,
    },
    #[error("factor {mode} column {component} sums to {sum}, not 1")]
    ColumnNotStochastic {
        mode: usize,
        component: usize,
        sum: f64,
    },
    #[error("all component weights are zero")]
    ZeroWeightSum,
    #[error("weights sum to {sum}, expected a probability vector")]
    NotNormalized { sum: f64 },
    #[error("zero total mass")]
    ZeroMass,
    #[error("model mass {model_mass} is not within tolerance of data mass {data_mass}")]
    MassGap { model_mass: f64, data_mass: f64 },
    #[error("index {index:?} is not in the tensor support")]
    NotInSupport { index: Vec<usize> },
    #[error("number of draws must be positive")]
    ZeroDraws,
    #[error("invalid fit options: {message}")]
    InvalidOptions { message: String },
    #[error("row {row}: feature {feature} value {value} out of bin range")]
    FeatureOutOfRange {
        row: usize,
        feature: String,
        value: f64,
    },
    #[error("row {row}: feature {feature} is not finite")]
    NonFiniteFeature { row: usize, feature: String },
    #[error("row {row}: expected {expected} features, got {got}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}: missing class label")]
    MissingLabel { row: usize },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("class {label} has no samples")]
    EmptyClass { label: String },
    #[error("duplicate class label {label}")]
    DuplicateLabel { label: String },
    #[error("sample feature {feature} value {value} out of bin range")]
    SampleOutOfRange { feature: String, value: f64 },
    #[error("label {label:?} contains whitespace and cannot be serialized")]
    UnserializableLabel { label: String },
    #[error("column {name} not found in CSV header")]
    UnknownColumn { name: String },
    #[error("model has no bin specification attached")]
    MissingBinSpec,
    #[error("model has no class labels attached")]
    MissingLabels,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
