//! Shared round loop for the DSA-based archetypes.

use rayon::prelude::*;

use super::{AgentError, RunParams};
use crate::bus::{BusStats, MessageBus};
use crate::dcop::{AgentId, Assignment, DcopInstance, VarId};
use crate::stream;

/// Round-synchronous DSA over the bus. Each iteration every agent sends its
/// values to its neighbor agents, the round advances, each agent merges its
/// inbox into its context `C` and `decide` returns the best value of every
/// owned variable. The ε-branch is applied here, outside the decision.
pub fn bus_dsa<F>(instance: &DcopInstance, params: &RunParams, decide: F) -> Result<(Vec<Vec<usize>>, BusStats), AgentError>
where
    F: Fn(AgentId, &Assignment, usize) -> Result<Vec<(VarId, usize)>, AgentError> + Sync,
{
    params.validate()?;
    let n = instance.num_vars();
    let agents = instance.num_agents();
    let sizes: Vec<usize> = (0..n).map(|v| instance.domain_size(VarId(v))).collect();
    let owned: Vec<Vec<VarId>> = (0..agents).map(|a| instance.vars_of(AgentId(a))).collect();
    let neighbors: Vec<Vec<AgentId>> = (0..agents).map(|a| instance.agent_neighbors(AgentId(a))).collect();

    let mut current: Vec<usize> = (0..n).map(|v| stream::initial_value(params.seed, v, sizes[v])).collect();
    let mut known: Vec<Assignment> = (0..agents).map(|_| Assignment::empty(n)).collect();
    let mut bus: MessageBus<Vec<(VarId, usize)>> = MessageBus::new(agents, params.bus);
    let mut assignments = Vec::with_capacity(params.iterations + 1);
    assignments.push(current.clone());

    for t in 1..=params.iterations {
        for a in 0..agents {
            let values: Vec<(VarId, usize)> = owned[a].iter().map(|&v| (v, current[v.0])).collect();
            for &b in &neighbors[a] {
                bus.send(AgentId(a), b, values.clone());
            }
        }
        bus.advance_round();
        for (a, ctx) in known.iter_mut().enumerate() {
            for &v in &owned[a] {
                ctx.set(v, current[v.0]);
            }
            for msg in bus.take_inbox(AgentId(a)) {
                for (v, value) in msg.payload {
                    ctx.set(v, value);
                }
            }
        }
        let decisions: Vec<Vec<(VarId, usize)>> = (0..agents)
            .into_par_iter()
            .map(|a| decide(AgentId(a), &known[a], t))
            .collect::<Result<_, _>>()?;
        let mut next = current.clone();
        for (a, best) in decisions.into_iter().enumerate() {
            for (v, d) in best {
                if instance.owner(v) != AgentId(a) || d >= sizes[v.0] {
                    return Err(AgentError::Invalid(format!("agent {a} returned an invalid value for {v}")));
                }
                next[v.0] = stream::dsa_choice(params.seed, v.0, t, params.epsilon, sizes[v.0], d);
            }
        }
        current = next;
        assignments.push(current.clone());
    }
    Ok((assignments, bus.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::gen_ldms;
    use crate::bus::BusConfig;
    use crate::dcop::{best_local_action_known, run_dsa, DsaParams};

    #[test]
    fn symbolic_decisions_reproduce_run_dsa() {
        let task = gen_ldms(6, (1, 3), 4, 3).unwrap();
        let inst = &task.instance;
        let params = RunParams::new(0.1, 30, 17);
        let (assignments, stats) = bus_dsa(inst, &params, |a, ctx, _| {
            Ok(inst.vars_of(a).into_iter().map(|v| (v, best_local_action_known(inst, v, ctx).0)).collect())
        })
        .unwrap();
        let trace = run_dsa(inst, DsaParams { epsilon: 0.1, iterations: 30 }, 17).unwrap();
        assert_eq!(assignments, trace.assignments);
        assert_eq!(stats.sent, stats.delivered);
    }

    #[test]
    fn drops_leave_stale_context_without_failing() {
        let task = gen_ldms(6, (1, 2), 4, 1).unwrap();
        let inst = &task.instance;
        let mut params = RunParams::new(0.1, 20, 2);
        params.bus = BusConfig { drop: 0.3, max_delay: 1, seed: 2 };
        let (assignments, stats) = bus_dsa(inst, &params, |a, ctx, _| {
            Ok(inst.vars_of(a).into_iter().map(|v| (v, best_local_action_known(inst, v, ctx).0)).collect())
        })
        .unwrap();
        assert_eq!(assignments.len(), 21);
        assert!(stats.dropped > 0);
    }
}
