//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. Variants are
//! deliberately fine-grained so that callers (the CLI in particular) can
//! classify failures without parsing message strings.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector handed to a contraction does not match the rank of the mode
    /// it was bound to. `mode` is the zero-based mode index.
    #[error("mode {mode} expects a vector of length {expected}, got {actual}")]
    DimensionMismatch {
        mode: usize,
        expected: usize,
        actual: usize,
    },

    /// Core tensors are order 3 (triple memory) or order 4 (timed memory).
    #[error("unsupported core tensor order {order}; expected 3 or 4")]
    InvalidOrder { order: usize },

    /// Rank must be at least 1 and small enough that rank^order fits in memory.
    #[error("invalid rank {rank}: {reason}")]
    InvalidRank { rank: usize, reason: String },

    /// A dense value buffer has the wrong length for its declared shape.
    #[error("value buffer holds {actual} entries, shape requires {expected}")]
    WrongValueCount { expected: usize, actual: usize },

    /// NaN or infinity where a finite number is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A negative value reached a model that runs in nonnegative mode.
    #[error("negative value in {context}, but the model is nonnegative")]
    NegativeInNonnegative { context: String },

    /// Lookup of a symbol (by name or id) that was never registered.
    #[error("unknown {kind}: {what}")]
    UnknownSymbol { kind: &'static str, what: String },

    /// Attempt to register a fresh symbol under a name that is already taken.
    #[error("{kind} name {name:?} is already registered")]
    DuplicateSymbol { kind: &'static str, name: String },

    /// A slot pattern that cannot be evaluated against the given model.
    #[error("invalid slot pattern: {reason}")]
    InvalidPattern { reason: String },

    /// A parameter outside its documented range.
    #[error("invalid argument: {reason}")]
    InvalidArgument { reason: String },

    /// Marginalizing a slot sums the joint score over it, which is only
    /// meaningful when every score contribution is nonnegative.
    #[error("marginalization requires a nonnegative-mode model")]
    MarginalizationNeedsNonnegative,

    /// Linear (exponent-free) scoring reads scores as unnormalized
    /// probabilities, which requires nonnegative scores.
    #[error("linear scoring requires a nonnegative-mode model")]
    LinearScoringNeedsNonnegative,

    /// The inverse temperature must be finite and >= 0.
    #[error("invalid beta {value}: must be finite and nonnegative")]
    InvalidBeta { value: f64 },

    /// A query needs at least one candidate in the free slot's vocabulary.
    #[error("the {what} vocabulary is empty")]
    EmptyVocabulary { what: &'static str },

    /// Every candidate scored zero under linear scoring; there is no
    /// distribution to normalize.
    #[error("all candidate scores are zero; cannot normalize a linear distribution")]
    AllZeroScores,

    /// Exhaustive enumeration would exceed the configured tuple budget.
    #[error("enumeration over {tuples} tuples exceeds the cap of {cap}; use sampling instead")]
    VocabularyTooLarge { tuples: u128, cap: usize },

    /// An operation was handed an empty collection it cannot act on.
    #[error("{what} is empty")]
    EmptyInput { what: &'static str },

    /// Training produced a non-finite loss and was aborted.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    /// Confidences live in (0, 1].
    #[error("invalid confidence {value}: must lie in (0, 1]")]
    InvalidConfidence { value: f64 },

    /// Distillation thresholds live in (0, 1).
    #[error("invalid threshold {value}: must lie strictly between 0 and 1")]
    InvalidThreshold { value: f64 },

    /// Two models that must agree on rank do not.
    #[error("rank mismatch: expected {expected}, got {actual}")]
    RankMismatch { expected: usize, actual: usize },

    /// Engram traces are write-once; the row bound to an engram can only be
    /// adjusted by training, never replaced wholesale.
    #[error("time id {index} is bound to an engram; its trace cannot be replaced")]
    EngramBound { index: usize },

    /// A nonnegative-mode model must be trained with projection enabled,
    /// otherwise updates would break the sign invariant.
    #[error("nonnegative-mode model requires the nonnegative projection flag")]
    ProjectionRequired,

    /// A text input file failed to parse. Lines are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Checkpoint bytes do not match their own header.
    #[error("corrupt checkpoint: {reason}")]
    Corrupt { reason: String },

    /// Checkpoint written by an incompatible format version.
    #[error("checkpoint format version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    /// Loaded a checkpoint of the wrong model kind.
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch {
        expected: &'static str,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
