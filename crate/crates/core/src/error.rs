use thiserror::Error;

use crate::system::{StateId, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed system document: {0}")]
    Parse(String),

    #[error("invalid probability literal {0:?}")]
    BadProbability(String),

    #[error("system failed validation: {}", .0.summary())]
    Validation(ValidationReport),

    #[error("unknown state {0}")]
    UnknownState(StateId),

    #[error("system is a plain ARS; this analysis needs probabilities")]
    NotProbabilistic,

    #[error("{0} -> {1} is not a reduction of the system")]
    NotAPath(StateId, StateId),

    #[error("a path needs at least one state")]
    EmptyPath,

    #[error(
        "target {0} is reducible; reaching probabilities are only defined for normal forms \
         (summing over paths into a reducible state need not give a probability)"
    )]
    TargetNotNormalForm(StateId),

    #[error("normal form {target} is not reachable from {start}")]
    TargetUnreachable { start: StateId, target: StateId },

    #[error("tail bound must lie in [0, 1), got {0}")]
    TailBoundInvalid(String),

    #[error("no valuation for state {0}")]
    MissingValuation(StateId),

    #[error("valuation of {0} is negative")]
    NegativeValuation(StateId),

    #[error("epsilon must be positive")]
    NonPositiveEpsilon,

    #[error("margin report is empty")]
    EmptyReport,

    #[error("mapping is undefined on state {0}")]
    PartialMapping(StateId),

    #[error("mapping sends {from} to {image}, which is not a state of the target")]
    UnknownImage { from: StateId, image: StateId },

    #[error("analysis refused: exploration frontier is nonempty ({} states)", .0.len())]
    FrontierPresent(Vec<StateId>),

    #[error("unknown corpus entry {0:?}")]
    UnknownEntry(String),

    #[error("herman ring size {0} is outside 1..=12")]
    RingSize(usize),

    #[error("{0}")]
    Precondition(String),
}
