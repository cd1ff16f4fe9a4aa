use alloc::string::String;

use crate::lp::{LpError, LpStatus};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("grid: {0}")]
    Grid(#[from] GridError),

    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("peer {peer}: {reason}")]
    InvalidPeer { peer: usize, reason: &'static str },

    #[error("peer {peer} sits on unknown bus {bus}")]
    UnknownBus { peer: usize, bus: usize },

    #[error("invalid group partition: {0}")]
    InvalidPartition(&'static str),

    #[error("bids of seller {seller} and buyer {buyer} do not match")]
    BidMismatch { seller: usize, buyer: usize },

    #[error("at least two fairness groups are required, got {0}")]
    TooFewGroups(usize),

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("transport plan for groups ({0}, {1}) violates its marginals")]
    PlanMarginals(usize, usize),

    #[error("sacrifice level {0} outside [0, 1]")]
    EpsilonRange(f64),

    #[error("invalid solver setting: {0}")]
    InvalidSetting(&'static str),

    #[error("reference solution is not optimal ({0})")]
    ReferenceNotOptimal(LpStatus),

    /// An LP ended without an optimum. `family` names the constraint family
    /// that the incumbent point violates when one can be identified.
    #[error("{model} model ended {status}{}", family.map(|f| alloc::format!(" (suspect constraints: {f})")).unwrap_or_default())]
    Solver {
        model: &'static str,
        status: LpStatus,
        family: Option<&'static str>,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("no substation bus (every bus has a parent)")]
    NoSubstation,
    #[error("buses {0} and {1} both lack a parent")]
    MultipleSubstations(usize, usize),
    #[error("bus {0} declared twice")]
    DuplicateBus(usize),
    #[error("bus {bus} names unknown parent {parent}")]
    UnknownParent { bus: usize, parent: usize },
    #[error("bus {0} lies on a cycle")]
    Cycle(usize),
    #[error("bus {0} is not connected to the substation")]
    Disconnected(usize),
    #[error("line to bus {0} has negative or non-finite impedance")]
    BadImpedance(usize),
    #[error("voltage bounds must satisfy lower < v0 < upper")]
    BadVoltageBounds,
    #[error("base power must be positive")]
    BadBase,
    #[error("unknown bus {0}")]
    UnknownBus(usize),
}
