//! CoPA: every constrained pair of agents exchanges proposed cost tables for
//! R rounds and then merges the final proposals into one shared table. DSA
//! then runs symbolically over the agreed tables.

use rayon::prelude::*;

use super::runtime::bus_dsa;
use super::{agent_info, var_ref, AgentError, ArchetypeRun, RunParams};
use crate::benchgen::VlTask;
use crate::dcop::{best_local_action_known, global_cost, AgentId, Assignment, CostTable, DcopInstance};
use crate::model::{ModelClient, ProposalCtx, QueryContext, ResolveCtx, ResolveRule};

/// Proposals made on one edge, in round order.
#[derive(Clone, Debug, PartialEq)]
pub struct NegotiationHistory {
    pub edge: usize,
    pub first: Vec<CostTable>,
    /// Empty when both endpoints belong to the same agent.
    pub second: Vec<CostTable>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Negotiation {
    /// Agreed table per edge, in edge orientation.
    pub consensus: Vec<CostTable>,
    /// What each endpoint's Resolve call returned.
    pub resolved: Vec<(CostTable, CostTable)>,
    pub histories: Vec<NegotiationHistory>,
    /// Edges whose two Resolve results differed and were averaged again.
    pub mismatches: usize,
}

struct EdgeOutcome {
    consensus: CostTable,
    resolved: (CostTable, CostTable),
    history: NegotiationHistory,
    mismatch: bool,
}

fn negotiate_edge(task: &VlTask, client: &ModelClient, params: &RunParams, e: usize) -> Result<EdgeOutcome, AgentError> {
    let inst = &task.instance;
    let (x, y) = inst.edges()[e];
    let scope = (var_ref(task, x), var_ref(task, y));
    let sides: Vec<AgentId> = if inst.owner(x) == inst.owner(y) {
        vec![inst.owner(x)]
    } else {
        vec![inst.owner(x), inst.owner(y)]
    };
    let propose = |agent: AgentId, round: usize, own: &[CostTable], counterpart: Option<&CostTable>| {
        let ctx = QueryContext::TableProposal(ProposalCtx {
            info: agent_info(task, agent),
            edge: e,
            scope: scope.clone(),
            round,
            own_history: own.to_vec(),
            counterpart: counterpart.cloned(),
            bounds: params.bounds,
        });
        let d = client.ask(&ctx, 0)?;
        d.table()
            .cloned()
            .ok_or_else(|| AgentError::Invalid("proposal answer is not a table".into()))
    };
    let mut hist: Vec<Vec<CostTable>> = vec![Vec::new(); sides.len()];
    for round in 0..=params.rounds {
        let mut next = Vec::with_capacity(sides.len());
        for (s, &agent) in sides.iter().enumerate() {
            // Single-owner edges negotiate against the agent's own last proposal.
            let other = if sides.len() == 2 { &hist[1 - s] } else { &hist[s] };
            next.push(propose(agent, round, &hist[s], other.last())?);
        }
        for (h, t) in hist.iter_mut().zip(next) {
            h.push(t);
        }
    }
    let resolve = |agent: AgentId, own: &CostTable, other: &CostTable| {
        let ctx = QueryContext::Resolve(ResolveCtx {
            info: agent_info(task, agent),
            edge: e,
            scope: scope.clone(),
            own: own.clone(),
            other: other.clone(),
            bounds: params.bounds,
        });
        let d = client.ask(&ctx, 0)?;
        d.table()
            .cloned()
            .ok_or_else(|| AgentError::Invalid("resolve answer is not a table".into()))
    };
    let last = |s: usize| hist[s].last().expect("at least one proposal");
    let (rx, ry) = if sides.len() == 2 {
        (resolve(sides[0], last(0), last(1))?, resolve(sides[1], last(1), last(0))?)
    } else {
        let r = resolve(sides[0], last(0), last(0))?;
        (r.clone(), r)
    };
    let mismatch = rx != ry;
    let consensus = if mismatch {
        crate::model::merge_tables(&rx, &ry, ResolveRule::Average, params.bounds)
    } else {
        rx.clone()
    };
    let mut hist = hist.into_iter();
    let history = NegotiationHistory { edge: e, first: hist.next().unwrap_or_default(), second: hist.next().unwrap_or_default() };
    Ok(EdgeOutcome { consensus, resolved: (rx, ry), history, mismatch })
}

/// Runs the pairwise negotiation on every edge independently.
pub fn copa_negotiate(task: &VlTask, client: &ModelClient, params: &RunParams) -> Result<Negotiation, AgentError> {
    params.validate()?;
    let outcomes: Vec<EdgeOutcome> = (0..task.instance.edges().len())
        .into_par_iter()
        .map(|e| negotiate_edge(task, client, params, e))
        .collect::<Result<_, _>>()?;
    let mut neg = Negotiation { consensus: Vec::new(), resolved: Vec::new(), histories: Vec::new(), mismatches: 0 };
    for o in outcomes {
        neg.mismatches += o.mismatch as usize;
        neg.consensus.push(o.consensus);
        neg.resolved.push(o.resolved);
        neg.histories.push(o.history);
    }
    Ok(neg)
}

/// The instance the agents believe in after negotiation.
pub fn consensus_instance(task: &VlTask, neg: &Negotiation) -> Result<DcopInstance, AgentError> {
    Ok(task.instance.with_tables(neg.consensus.clone())?)
}

pub fn copa_dsa_run(task: &VlTask, client: &ModelClient, params: &RunParams) -> Result<ArchetypeRun, AgentError> {
    let neg = copa_negotiate(task, client, params)?;
    let agreed = consensus_instance(task, &neg)?;
    let (assignments, bus) = bus_dsa(&agreed, params, |agent, known, _| {
        Ok(agreed
            .vars_of(agent)
            .into_iter()
            .map(|v| (v, best_local_action_known(&agreed, v, known).0))
            .collect())
    })?;
    let self_costs = assignments
        .iter()
        .map(|a| global_cost(&agreed, &Assignment::complete(a.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ArchetypeRun {
        assignments,
        self_costs: Some(self_costs),
        bus,
        nas: None,
        truncated: false,
        consensus_mismatches: neg.mismatches,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::benchgen::{gen_ldms, generate, BenchmarkKind, GenParams};
    use crate::dcop::Cost;
    use crate::model::{ModelClient, PromptOptions, ScriptedOracle, TaskKind};

    fn scripted(task: &VlTask) -> ModelClient {
        ModelClient::new(Arc::new(ScriptedOracle::new(ResolveRule::Average)), PromptOptions::default(), task.instance.num_agents())
    }

    #[test]
    fn consensus_is_half_up_average_of_local_views() {
        let task = generate(&GenParams::new(BenchmarkKind::Ldgc, 6, 8, 4, 11)).unwrap();
        let truth = &task.ground_truth;
        let params = RunParams::new(0.1, 10, 1);
        let neg = copa_negotiate(&task, &scripted(&task), &params).unwrap();
        assert_eq!(neg.mismatches, 0);
        let v = truth.violation_weight;
        for (e, &(x, y)) in task.instance.edges().iter().enumerate() {
            let rel = truth.relations[e];
            let (rx, ry) = (&truth.ranks[x.0], &truth.ranks[y.0]);
            let t = &neg.consensus[e];
            for a in 0..4 {
                for b in 0..4 {
                    let base = if rel.violated(a, b) { v } else { 0 };
                    let lx = base + (rx[a] + rx[b]) as Cost;
                    let ly = base + (ry[a] + ry[b]) as Cost;
                    assert_eq!(t.get(a, b), (lx + ly).div_ceil(2).min(20));
                }
            }
        }
    }

    #[test]
    fn query_count_is_degree_times_rounds_plus_two() {
        for task in [
            generate(&GenParams::new(BenchmarkKind::Ldgc, 7, 10, 4, 2)).unwrap(),
            gen_ldms(5, (1, 3), 4, 2).unwrap().with_machine_blocks(),
        ] {
            let client = scripted(&task);
            let mut params = RunParams::new(0.1, 10, 1);
            params.bounds = (0, 40);
            for r in [1, 2, 3] {
                params.rounds = r;
                let before: Vec<u64> =
                    (0..task.instance.num_agents()).map(|a| client.ledger().agent_total(AgentId(a))).collect();
                copa_negotiate(&task, &client, &params).unwrap();
                for (a, b) in before.iter().enumerate() {
                    let deg = task.instance.agent_degree(AgentId(a)) as u64;
                    assert_eq!(client.ledger().agent_total(AgentId(a)) - b, deg * (r as u64 + 2));
                }
            }
            assert_eq!(client.ledger().snapshot().iter().map(|k| k[TaskKind::GetMaxAction.index()]).sum::<u64>(), 0);
        }
    }

    #[test]
    fn dsa_on_agreed_tables_reports_self_cost() {
        let task = generate(&GenParams::new(BenchmarkKind::Ldgc, 6, 8, 4, 12)).unwrap();
        let params = RunParams::new(0.1, 15, 3);
        let run = copa_dsa_run(&task, &scripted(&task), &params).unwrap();
        assert_eq!(run.assignments.len(), 16);
        assert_eq!(run.self_costs.as_ref().unwrap().len(), 16);
    }
}
