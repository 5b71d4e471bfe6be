//! Deterministic ground-truth policy. Reads the agent's machine block and
//! answers every query the way an ideal model would.

use serde::{Deserialize, Serialize};

use super::parse::{format_answer, parse_decision};
use super::{
    Answer, ConstraintCtx, DecisionModel, MaxActionCtx, ModelDecision, ModelError, Prompt, ProposalCtx,
    QueryContext, ResolveCtx, ResolveRule,
};
use crate::agents::nas::reference_action;
use crate::benchgen::LocalTruth;
use crate::dcop::{Cost, CostTable, Relation, VarId};

/// Machine-readable payload appended to scripted constraint messages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintData {
    pub edge: usize,
    pub from_var: VarId,
    pub to_var: VarId,
    pub relation: Relation,
    pub ranks: Vec<usize>,
}

pub const DATA_PREFIX: &str = "constraint-data: ";

impl ConstraintData {
    pub fn find_all(messages: &[String]) -> Vec<ConstraintData> {
        messages
            .iter()
            .flat_map(|m| m.lines())
            .filter_map(|l| l.trim().strip_prefix(DATA_PREFIX))
            .filter_map(|j| serde_json::from_str(j).ok())
            .collect()
    }
}

fn relation_phrase(rel: Relation) -> &'static str {
    match rel {
        Relation::Avoid => "we must not take the same value",
        Relation::Match => "we should take the same value",
        Relation::NotEqual => "our values must differ",
    }
}

/// Human-readable message plus a `constraint-data:` line.
pub fn constraint_message(ctx: &ConstraintCtx, relation: Relation, ranks: &[usize]) -> String {
    let mut ordered: Vec<usize> = (0..ranks.len()).collect();
    ordered.sort_by_key(|&v| ranks[v]);
    let labels: Vec<&str> = ordered.iter().map(|&v| ctx.own_var.domain[v].as_str()).collect();
    let data = ConstraintData {
        edge: ctx.edge,
        from_var: ctx.own_var.var,
        to_var: ctx.other_var.var,
        relation,
        ranks: ranks.to_vec(),
    };
    format!(
        "{} to {}: for {} and {}, {}. My preference for {} from best to worst is {}.\n{DATA_PREFIX}{}",
        ctx.info.name,
        ctx.other_agent,
        ctx.own_var.name,
        ctx.other_var.name,
        relation_phrase(relation),
        ctx.own_var.name,
        labels.join(" > "),
        serde_json::to_string(&data).expect("serializable")
    )
}

/// Half-up element-wise average (or maximum) of two equally shaped tables,
/// clamped to `bounds`.
pub fn merge_tables(a: &CostTable, b: &CostTable, rule: ResolveRule, bounds: (Cost, Cost)) -> CostTable {
    let b = b.oriented(a.scope()).unwrap_or_else(|| b.clone());
    let (rows, cols) = a.shape();
    CostTable::from_fn(a.scope(), rows, cols, |i, j| {
        let (x, y) = (a.get(i, j), b.get(i, j));
        let v = match rule {
            ResolveRule::Average => (x + y).div_ceil(2),
            ResolveRule::Maximum => x.max(y),
        };
        v.clamp(bounds.0, bounds.1)
    })
}

#[derive(Clone, Debug)]
pub struct ScriptedOracle {
    rule: ResolveRule,
}

impl ScriptedOracle {
    pub fn new(rule: ResolveRule) -> ScriptedOracle {
        ScriptedOracle { rule }
    }

    fn truth(prompt: &Prompt, ctx: &QueryContext<'_>) -> Result<LocalTruth, ModelError> {
        let block = prompt
            .machine_block
            .as_ref()
            .or(ctx.info().instruction.machine_block.as_ref())
            .ok_or_else(|| ModelError::MissingMachineBlock(ctx.info().name.clone()))?;
        LocalTruth::parse(block).map_err(|e| ModelError::MissingContext(e.to_string()))
    }

    /// The correct answer without formatting.
    pub fn answer(&self, prompt: &Prompt, ctx: &QueryContext<'_>) -> Result<Answer, ModelError> {
        if let QueryContext::NextAction(c) = ctx {
            return Ok(Answer::Action(reference_action(c.log)));
        }
        let truth = Self::truth(prompt, ctx)?;
        Ok(match ctx {
            QueryContext::ConstraintMessage(c) => {
                let rel = relation_of(&truth, c.edge)?;
                let ranks = ranks_of(&truth, c.own_var.var)?;
                Answer::Constraint(constraint_message(c, rel, ranks))
            }
            QueryContext::MaxAction(c) => Answer::Values(best_values(&truth, c)?),
            QueryContext::TableProposal(c) => Answer::Table(local_view(&truth, c)?),
            QueryContext::Resolve(c) => Answer::Table(self.resolve(c)),
            QueryContext::NextAction(_) => unreachable!("handled above"),
        })
    }

    fn resolve(&self, c: &ResolveCtx) -> CostTable {
        merge_tables(&c.own, &c.other, self.rule, c.bounds)
    }
}

fn relation_of(truth: &LocalTruth, edge: usize) -> Result<Relation, ModelError> {
    truth
        .relations
        .iter()
        .find(|r| r.edge == edge)
        .map(|r| r.relation)
        .ok_or_else(|| ModelError::MissingContext(format!("relation of edge {edge}")))
}

fn ranks_of(truth: &LocalTruth, var: VarId) -> Result<&[usize], ModelError> {
    truth.ranks_of(var).ok_or_else(|| ModelError::MissingContext(format!("ranks of {var}")))
}

/// Best response per owned variable under the oracle cost rule, using only
/// the known neighbor values. Neighbor ranks come from received messages
/// when available; they shift all candidates equally and never change the
/// choice.
fn best_values(truth: &LocalTruth, c: &MaxActionCtx) -> Result<Vec<(VarId, usize)>, ModelError> {
    let data = ConstraintData::find_all(&c.messages);
    let value_of = |var: VarId| -> Option<usize> {
        c.vars
            .iter()
            .find(|(v, _)| v.var == var)
            .map(|(_, cur)| *cur)
            .or_else(|| c.neighbors.iter().find(|n| n.var.var == var).and_then(|n| n.value))
    };
    let rank_of = |var: VarId, value: usize| -> Cost {
        truth
            .ranks_of(var)
            .or_else(|| data.iter().find(|d| d.from_var == var).map(|d| d.ranks.as_slice()))
            .and_then(|r| r.get(value))
            .map_or(0, |&r| r as Cost)
    };
    let mut out = Vec::with_capacity(c.vars.len());
    for (v, _) in &c.vars {
        let own = ranks_of(truth, v.var)?;
        let mut best: Option<(usize, Cost)> = None;
        for a in 0..v.domain.len() {
            let mut cost = 0;
            for r in &truth.relations {
                let other = if r.var == v.var {
                    r.other
                } else if r.other == v.var {
                    r.var
                } else {
                    continue;
                };
                let Some(b) = value_of(other) else { continue };
                let violation = if r.relation.violated(a, b) { truth.violation_weight } else { 0 };
                cost += violation + own[a] as Cost + rank_of(other, b);
            }
            if best.map_or(true, |(_, bc)| cost < bc) {
                best = Some((a, cost));
            }
        }
        out.push((v.var, best.map_or(0, |(a, _)| a)));
    }
    Ok(out)
}

/// The agent's own view of an edge's table: its ranks stand in for the
/// neighbor's unknown preferences.
fn local_view(truth: &LocalTruth, c: &ProposalCtx) -> Result<CostTable, ModelError> {
    let (x, y) = (&c.scope.0, &c.scope.1);
    let rel = relation_of(truth, c.edge)?;
    let rx = truth.ranks_of(x.var);
    let ry = truth.ranks_of(y.var);
    let (rx, ry) = match (rx, ry) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, a),
        (None, Some(b)) => (b, b),
        (None, None) => return Err(ModelError::MissingContext(format!("ranks for edge {}", c.edge))),
    };
    let rank = |r: &[usize], v: usize| r.get(v).copied().unwrap_or(0) as Cost;
    Ok(CostTable::from_fn((x.var, y.var), x.domain.len(), y.domain.len(), |a, b| {
        let violation = if rel.violated(a, b) { truth.violation_weight } else { 0 };
        (violation + rank(rx, a) + rank(ry, b)).clamp(c.bounds.0, c.bounds.1)
    }))
}

impl DecisionModel for ScriptedOracle {
    fn query(&self, prompt: &Prompt, ctx: &QueryContext<'_>) -> Result<ModelDecision, ModelError> {
        let answer = self.answer(prompt, ctx)?;
        let raw = format_answer(&answer, ctx);
        Ok(parse_decision(ctx.kind(), &raw, ctx)?)
    }

    fn label(&self) -> String {
        "scripted".into()
    }

    fn wants_machine_block(&self) -> bool {
        true
    }
}
