//! Scripted oracle with controlled inaccuracy: with probability `p` the
//! correct decision is replaced by a uniformly drawn valid wrong one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::parse::{format_answer, parse_decision};
use super::scripted::{constraint_message, ConstraintData};
use super::{Answer, DecisionModel, ModelDecision, ModelError, Prompt, QueryContext, ResolveRule, ScriptedOracle};
use crate::agents::nas::EnvAction;
use crate::dcop::{Cost, CostTable, Relation};

#[derive(Clone, Debug)]
pub struct NoisyOracle {
    p: f64,
    seed: u64,
    oracle: ScriptedOracle,
}

/// Random stream determined by the seed, the task kind and the prompt.
pub fn prompt_rng(seed: u64, kind: &str, prompt: &Prompt) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(kind.as_bytes());
    h.update(prompt.render().as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

fn perturb_table(t: &CostTable, bounds: (Cost, Cost), rng: &mut impl Rng) -> CostTable {
    let (rows, cols) = t.shape();
    let mut out = CostTable::from_fn(t.scope(), rows, cols, |a, b| {
        let delta = rng.gen_range(1..=3) as i64 * if rng.gen_bool(0.5) { 1 } else { -1 };
        (t.get(a, b) as i64 + delta).clamp(bounds.0 as i64, bounds.1 as i64) as Cost
    });
    if out == *t && bounds.1 > bounds.0 {
        let x = t.get(0, 0);
        let bumped = if x < bounds.1 { x + 1 } else { x - 1 };
        out = CostTable::from_fn(t.scope(), rows, cols, |a, b| if (a, b) == (0, 0) { bumped } else { t.get(a, b) });
    }
    out
}

impl NoisyOracle {
    pub fn new(p: f64, seed: u64, rule: ResolveRule) -> NoisyOracle {
        NoisyOracle { p, seed, oracle: ScriptedOracle::new(rule) }
    }

    fn wrong(&self, correct: Answer, ctx: &QueryContext<'_>, rng: &mut ChaCha8Rng) -> Answer {
        match (correct, ctx) {
            (Answer::Values(vals), QueryContext::MaxAction(c)) => Answer::Values(
                vals.into_iter()
                    .map(|(var, v)| {
                        let d = c.vars.iter().find(|(r, _)| r.var == var).map_or(1, |(r, _)| r.domain.len());
                        if d < 2 {
                            return (var, v);
                        }
                        let shift = rng.gen_range(1..d);
                        (var, (v + shift) % d)
                    })
                    .collect(),
            ),
            (Answer::Table(t), _) => {
                let bounds = ctx.table_shape().map_or((0, Cost::MAX), |(_, _, b)| b);
                Answer::Table(perturb_table(&t, bounds, rng))
            }
            (Answer::Constraint(text), QueryContext::ConstraintMessage(c)) => {
                let data = ConstraintData::find_all(&[text.clone()]);
                let Some(d) = data.first() else { return Answer::Constraint(text) };
                let flipped = match d.relation {
                    Relation::Avoid | Relation::NotEqual => Relation::Match,
                    Relation::Match => Relation::Avoid,
                };
                let mut ranks = d.ranks.clone();
                ranks.rotate_left(1);
                Answer::Constraint(constraint_message(c, flipped, &ranks))
            }
            (Answer::Action(a), QueryContext::NextAction(c)) => {
                let wrong: Vec<&EnvAction> =
                    c.options.iter().filter(|o| **o != a && **o != EnvAction::Terminate).collect();
                match wrong.choose(rng) {
                    Some(w) => Answer::Action((*w).clone()),
                    None => Answer::Action(a),
                }
            }
            (other, _) => other,
        }
    }
}

impl DecisionModel for NoisyOracle {
    fn query(&self, prompt: &Prompt, ctx: &QueryContext<'_>) -> Result<ModelDecision, ModelError> {
        let correct = self.oracle.answer(prompt, ctx)?;
        let mut rng = prompt_rng(self.seed, ctx.kind().as_str(), prompt);
        let answer = if rng.gen::<f64>() < self.p { self.wrong(correct, ctx, &mut rng) } else { correct };
        let raw = format_answer(&answer, ctx);
        Ok(parse_decision(ctx.kind(), &raw, ctx)?)
    }

    fn label(&self) -> String {
        format!("noisy(p={})", self.p)
    }

    fn wants_machine_block(&self) -> bool {
        true
    }
}
