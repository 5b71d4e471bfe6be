//! FMC-DSA: DSA whose constraint messages and best-value choices come from
//! a decision model. The ε-branch stays in symbolic code.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::runtime::bus_dsa;
use super::{agent_info, var_ref, AgentError, ArchetypeRun, RunParams};
use crate::benchgen::VlTask;
use crate::dcop::{AgentId, VarId};
use crate::model::{ConstraintCtx, MaxActionCtx, ModelClient, NeighborValue, QueryContext};

/// One constraint message per constraint the agent takes part in, each
/// delivered (reliably) to the owner of the other endpoint. Returns the
/// received messages of every agent in edge order.
pub(crate) fn exchange_constraints(task: &VlTask, client: &ModelClient) -> Result<Vec<Vec<String>>, AgentError> {
    let inst = &task.instance;
    let outgoing: Vec<Vec<(usize, AgentId, String)>> = (0..inst.num_agents())
        .into_par_iter()
        .map(|a| {
            let agent = AgentId(a);
            inst.agent_edges(agent)
                .into_iter()
                .map(|e| {
                    let (x, y) = inst.edges()[e];
                    let (own, other) = if inst.owner(x) == agent { (x, y) } else { (y, x) };
                    let ctx = QueryContext::ConstraintMessage(ConstraintCtx {
                        info: agent_info(task, agent),
                        edge: e,
                        own_var: var_ref(task, own),
                        other_var: var_ref(task, other),
                        other_agent: inst.agent_name(inst.owner(other)).to_string(),
                    });
                    let d = client.ask(&ctx, 0)?;
                    Ok((e, inst.owner(other), d.constraint().unwrap_or_default().to_string()))
                })
                .collect::<Result<Vec<_>, AgentError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut inbox: Vec<Vec<(usize, usize, String)>> = vec![Vec::new(); inst.num_agents()];
    for (from, msgs) in outgoing.into_iter().enumerate() {
        for (e, to, text) in msgs {
            inbox[to.0].push((e, from, text));
        }
    }
    Ok(inbox
        .into_iter()
        .map(|mut m| {
            m.sort();
            m.into_iter().map(|(_, _, t)| t).collect()
        })
        .collect())
}

/// Variables adjacent to `agent`'s variables but owned by someone else.
pub(crate) fn foreign_neighbors(task: &VlTask, agent: AgentId) -> Vec<VarId> {
    let inst = &task.instance;
    let set: BTreeSet<VarId> = inst
        .vars_of(agent)
        .into_iter()
        .flat_map(|v| inst.neighbors(v).map(|(_, o)| o).collect::<Vec<_>>())
        .filter(|&o| inst.owner(o) != agent)
        .collect();
    set.into_iter().collect()
}

pub fn fmc_dsa_run(task: &VlTask, client: &ModelClient, params: &RunParams) -> Result<ArchetypeRun, AgentError> {
    params.validate()?;
    let inst = &task.instance;
    let messages = exchange_constraints(task, client)?;
    let owned: Vec<Vec<VarId>> = (0..inst.num_agents()).map(|a| inst.vars_of(AgentId(a))).collect();
    let foreign: Vec<Vec<VarId>> = (0..inst.num_agents()).map(|a| foreign_neighbors(task, AgentId(a))).collect();
    let (assignments, bus) = bus_dsa(inst, params, |agent, known, t| {
        let ctx = QueryContext::MaxAction(MaxActionCtx {
            info: agent_info(task, agent),
            iteration: t,
            vars: owned[agent.0]
                .iter()
                .map(|&v| (var_ref(task, v), known.get(v).unwrap_or(0)))
                .collect(),
            neighbors: foreign[agent.0]
                .iter()
                .map(|&v| NeighborValue {
                    var: var_ref(task, v),
                    owner: inst.agent_name(inst.owner(v)).to_string(),
                    value: known.get(v),
                })
                .collect(),
            messages: messages[agent.0].clone(),
        });
        let d = client.ask(&ctx, t)?;
        Ok(d.values().map(<[_]>::to_vec).unwrap_or_default())
    })?;
    Ok(ArchetypeRun { assignments, self_costs: None, bus, nas: None, truncated: false, consensus_mismatches: 0 })
}
