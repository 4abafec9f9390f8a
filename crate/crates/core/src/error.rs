use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(ValidationReport),

    #[error("policy is improper under total reward: its transition graph has a cycle")]
    ImproperPolicy,

    #[error("transition graph is cyclic")]
    CyclicGraph,

    #[error("singular linear system during policy evaluation")]
    Singular,

    #[error("policy has {got} entries, expected {expected}")]
    PolicyLength { expected: usize, got: usize },

    #[error("action {action} at state {state} is out of range (k = {k})")]
    ActionOutOfRange { state: usize, action: usize, k: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("enumeration budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("no enumerated policy attains the statewise maximum value")]
    NoDominatingPolicy,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("digit {digit} is not below base {base}")]
    DigitOutOfRange { digit: usize, base: usize },

    #[error("off-trajectory: {0}")]
    OffTrajectory(String),

    #[error("iteration limit of {0} steps reached before convergence")]
    MaxIterations(usize),

    #[error("certification failed at step {step}: {reason}")]
    Certification { step: usize, reason: String },

    #[error("Q-value gap is zero: state {state}, actions {a} and {b} tie under policy {policy}")]
    ZeroGap {
        state: usize,
        a: usize,
        b: usize,
        policy: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
