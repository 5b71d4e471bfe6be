//! The three agent archetypes: FMC-DSA (a model picks the best value inside
//! DSA), CoPA+DSA (pairwise cost-table negotiation followed by symbolic DSA)
//! and neural algorithm simulation (a model drives every algorithmic step).

mod copa;
mod fmc;
pub mod nas;
mod runtime;

pub use copa::{consensus_instance, copa_dsa_run, copa_negotiate, Negotiation, NegotiationHistory};
pub use fmc::fmc_dsa_run;
pub use nas::{decision_accuracy, nas_run, Accuracy, NasEnv, NasOutcome, NasStep};
pub use runtime::bus_dsa;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchgen::VlTask;
use crate::bus::{BusConfig, BusStats};
use crate::dcop::{AgentId, Cost, DcopError, VarId};
use crate::model::{AgentInfo, ModelError, VarRef};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dcop(#[from] DcopError),
    #[error("invalid run parameters: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub epsilon: f64,
    pub iterations: usize,
    pub seed: u64,
    pub bus: BusConfig,
    /// CoPA negotiation rounds.
    pub rounds: usize,
    pub bounds: (Cost, Cost),
    /// NAS step budget per iteration, as a multiple of the steps one
    /// iteration needs.
    pub budget_factor: usize,
}

impl RunParams {
    pub fn new(epsilon: f64, iterations: usize, seed: u64) -> RunParams {
        RunParams {
            epsilon,
            iterations,
            seed,
            bus: BusConfig { seed, ..BusConfig::default() },
            rounds: 2,
            bounds: (0, 20),
            budget_factor: 6,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AgentError::Invalid(format!("epsilon {} is outside [0, 1]", self.epsilon)));
        }
        if self.iterations == 0 {
            return Err(AgentError::Invalid("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.bus.drop) {
            return Err(AgentError::Invalid(format!("drop probability {} is outside [0, 1]", self.bus.drop)));
        }
        if self.rounds == 0 {
            return Err(AgentError::Invalid("CoPA needs at least one round".into()));
        }
        if self.bounds.1 < self.bounds.0 {
            return Err(AgentError::Invalid("cost bounds are empty".into()));
        }
        if self.budget_factor == 0 {
            return Err(AgentError::Invalid("budget factor must be at least 1".into()));
        }
        Ok(())
    }
}

/// What an archetype produced, before the harness adds observer metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchetypeRun {
    /// Complete assignments for iterations `0..=T`.
    pub assignments: Vec<Vec<usize>>,
    /// Cost the agents can compute themselves (CoPA only).
    pub self_costs: Option<Vec<Cost>>,
    pub bus: BusStats,
    pub nas: Option<NasOutcome>,
    pub truncated: bool,
    pub consensus_mismatches: usize,
}

pub(crate) fn agent_info(task: &VlTask, agent: AgentId) -> AgentInfo {
    AgentInfo {
        agent,
        name: task.instance.agent_name(agent).to_string(),
        instruction: task.instructions[agent.0].clone(),
    }
}

pub(crate) fn var_ref(task: &VlTask, var: VarId) -> VarRef {
    VarRef {
        var,
        name: task.instance.var_name(var).to_string(),
        domain: task.instance.domain(var).to_vec(),
    }
}
