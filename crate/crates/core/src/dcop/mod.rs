//! Classical DCOP model: instances, pairwise cost tables, assignments, the
//! DSA reference solver, an exhaustive optimum oracle, and run metrics.

mod instance;
mod solve;

pub use instance::{AgentId, Assignment, CostTable, DcopInstance, Relation, VarId};
pub use solve::{
    anytime_curve, best_local_action, best_local_action_known, brute_force_optimum,
    global_cost, local_cost, local_cost_known, run_dsa, satisfaction, DsaParams, Satisfaction,
    Trace, DEFAULT_SEARCH_CAP,
};

use thiserror::Error;

/// Integral cost unit. All benchmark tables are integer valued.
pub type Cost = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcopError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("assignment is incomplete: variable {0} is unassigned")]
    IncompleteAssignment(VarId),
    #[error("unknown variable {0}")]
    UnknownVariable(VarId),
    #[error("value {value} is outside the domain of {var} (size {size})")]
    ValueOutOfDomain { var: VarId, value: usize, size: usize },
    #[error("neighbor {neighbor} of {var} is unassigned")]
    MissingNeighbor { var: VarId, neighbor: VarId },
    #[error("variable {0} has an empty domain")]
    EmptyDomain(VarId),
    #[error("search space of {size} assignments exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },
    #[error("edge {0} has no declared relation")]
    MissingRelation(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
