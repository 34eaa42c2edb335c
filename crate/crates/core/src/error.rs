//! Error and violation types shared across the crate.
//!
//! Errors abort an operation; [`Violation`]s are data returned by validators
//! so that a caller can report every problem found in one pass.

use serde::{Deserialize, Serialize};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An extension targeted an item that already has an observed state.
    #[error("item {item} already assigned in subrealization")]
    ItemAlreadyAssigned { item: usize },

    /// An enumeration, lattice, or tree would exceed its configured budget.
    #[error("{what} requires {needed} units, budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        budget: usize,
    },

    /// An ExplicitTable has no entry for a queried subrealization.
    #[error("utility table has no entry for rel {rel:?}")]
    TableMiss { rel: Vec<(usize, usize)> },

    /// A realization was found whose utility differs from the goal value.
    #[error("instance is not coverable: {detail}")]
    NotCoverable { detail: String },

    /// No exact eta, no declared eta, and the utility is not integer-valued.
    #[error("eta unavailable: lattice too large, no declared value, not integer-valued")]
    EtaUnavailable,

    /// A policy returned no item for a reachable non-cover subrealization.
    #[error("policy undefined at reachable subrealization {rel:?}")]
    PolicyIncomplete { rel: Vec<(usize, usize)> },

    /// A branch selected every item yet never reached the goal utility.
    #[error("branch exhausted all items at utility {reached} < {goal}")]
    NonCoveringPolicy { reached: f64, goal: f64 },

    /// Every remaining item has zero expected marginal at a non-cover node.
    #[error("no remaining item has positive expected marginal (coverability violation)")]
    NoProgressPossible,

    /// A numeric argument is outside its mathematical domain.
    #[error("domain error: {detail}")]
    DomainError { detail: String },

    /// A pinned reproduction diverged from its frozen reference values.
    #[error("reproduction mismatch: {detail}")]
    ReproductionMismatch { detail: String },

    /// Instance generation failed validation after bounded retries.
    #[error("instance generation failed after {attempts} attempts: {detail}")]
    GenerationFailed { attempts: usize, detail: String },

    /// Malformed configuration or instance data.
    #[error("invalid configuration: {detail}")]
    Config { detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Classifies a validator finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A cost is zero or negative.
    NonPositiveCost,
    /// A state probability lies outside [0, 1].
    MarginalOutOfRange,
    /// An item's state probabilities do not sum to 1 within tolerance.
    MarginalSumMismatch,
    /// Array lengths disagree with the declared n, k, or m.
    ShapeMismatch,
    /// f(empty) differs from zero.
    EmptyNotZero,
    /// A marginal gain is negative somewhere.
    NotMonotone,
    /// Diminishing returns fails somewhere.
    NotSubmodular,
    /// Some positive-probability realization misses the goal value.
    NotCoverable,
    /// Evaluation depends on the order observations were added.
    OrderDependent,
    /// An ExplicitTable lacks an entry it needs.
    TableMissing,
}

/// One validator finding: a kind plus a human-readable witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    pub fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}
