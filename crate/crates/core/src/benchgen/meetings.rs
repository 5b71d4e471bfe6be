//! Meeting scheduling. Every meeting is a variable owned by its organizer;
//! meetings that share a participant must take different slots.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::is_connected;
use super::text::{self, SlotStyle};
use super::truth::{oracle_cost_tables, random_permutation_ranks, violation_weight_for, GroundTruth, Network};
use super::{generate, BenchError, BenchmarkKind, GenParams, InstructionDoc, VlTask};
use crate::dcop::{AgentId, Relation, VarId};
use crate::stream::{stream, Purpose};

pub const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meeting {
    pub name: String,
    pub owner: AgentId,
    /// Sorted, includes the owner.
    pub participants: Vec<AgentId>,
    pub style: SlotStyle,
    pub preference_text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingProblem {
    pub meetings: Vec<Meeting>,
    pub slots: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeetingParams {
    pub agents: usize,
    pub meetings_per_agent: (usize, usize),
    pub slots: usize,
    pub seed: u64,
}

pub fn gen_ldms(agents: usize, meetings_per_agent: (usize, usize), slots: usize, seed: u64) -> Result<VlTask, BenchError> {
    let mut p = GenParams::new(BenchmarkKind::Ldms, agents, 0, slots, seed);
    p.meetings_per_agent = meetings_per_agent;
    generate(&p)
}

struct Layout {
    owner: Vec<AgentId>,
    participants: Vec<Vec<AgentId>>,
    edges: Vec<(usize, usize)>,
}

fn sample_layout(p: &MeetingParams, attempt: usize) -> Layout {
    let mut rng = stream(p.seed, Purpose::Meetings, attempt as u64, 0);
    let (lo, hi) = p.meetings_per_agent;
    let mut owner = Vec::new();
    let mut participants = Vec::new();
    for a in 0..p.agents {
        for _ in 0..rng.gen_range(lo..=hi) {
            let mut others: Vec<usize> = (0..p.agents).filter(|&o| o != a).collect();
            others.shuffle(&mut rng);
            let extra = rng.gen_range(1..=2).min(others.len());
            let mut set: Vec<AgentId> = others[..extra].iter().map(|&o| AgentId(o)).collect();
            set.push(AgentId(a));
            set.sort_unstable();
            owner.push(AgentId(a));
            participants.push(set);
        }
    }
    let mut edges = Vec::new();
    for i in 0..owner.len() {
        for j in i + 1..owner.len() {
            if participants[i].iter().any(|x| participants[j].contains(x)) {
                edges.push((i, j));
            }
        }
    }
    Layout { owner, participants, edges }
}

fn slot_ranks(rng: &mut impl Rng, slots: usize) -> (SlotStyle, Vec<usize>) {
    match rng.gen_range(0..4) {
        0 => (SlotStyle::Early, (0..slots).collect()),
        1 => (SlotStyle::Late, (0..slots).rev().collect()),
        _ => (SlotStyle::Explicit, random_permutation_ranks(rng, slots)),
    }
}

/// LDMS task without machine blocks.
pub fn gen_meetings(gp: &GenParams) -> Result<VlTask, BenchError> {
    let p = MeetingParams {
        agents: gp.n,
        meetings_per_agent: gp.meetings_per_agent,
        slots: gp.domain,
        seed: gp.seed,
    };
    let (lo, hi) = p.meetings_per_agent;
    if p.agents < 2 || p.slots < 2 || lo == 0 || hi < lo {
        return Err(BenchError::InvalidParameters(format!(
            "need >= 2 agents, >= 2 slots and 1 <= min <= max meetings per agent (got {}, {}, {lo}..{hi})",
            p.agents, p.slots
        )));
    }
    let layout = (0..MAX_ATTEMPTS)
        .map(|attempt| sample_layout(&p, attempt))
        .find(|l| is_connected(l.owner.len(), &l.edges))
        .ok_or(BenchError::InfeasibleMeetings(MAX_ATTEMPTS))?;

    let agents = text::agent_names(p.agents);
    let humans = text::instructing_names(p.agents);
    let names = text::meeting_names(layout.owner.len());
    let slots = text::slot_names(p.slots);
    let mut styles = Vec::new();
    let mut ranks = Vec::new();
    for m in 0..layout.owner.len() {
        let (style, r) = slot_ranks(&mut stream(p.seed, Purpose::Truth, m as u64, 0), p.slots);
        styles.push(style);
        ranks.push(r);
    }
    let gt = GroundTruth {
        violation_weight: violation_weight_for(p.slots),
        ranks,
        relations: vec![Relation::NotEqual; layout.edges.len()],
    };
    let network = Network {
        agents: agents.clone(),
        variables: names.clone(),
        owner: layout.owner.clone(),
        domains: vec![slots.clone(); layout.owner.len()],
        edges: layout.edges.iter().map(|&(a, b)| (VarId(a), VarId(b))).collect(),
    };
    let instance = oracle_cost_tables(&gt, &network)?;

    let mut meetings: Vec<Meeting> = Vec::with_capacity(names.len());
    for (m, name) in names.iter().enumerate() {
        let mut rng = stream(p.seed, Purpose::Text, m as u64, 1);
        let mut ordered: Vec<String> = slots.clone();
        ordered.sort_by_key(|s| gt.ranks[m][slots.iter().position(|x| x == s).unwrap_or(0)]);
        meetings.push(Meeting {
            name: name.clone(),
            owner: layout.owner[m],
            participants: layout.participants[m].clone(),
            style: styles[m],
            preference_text: text::slot_preference_sentence(&mut rng, styles[m], name, &ordered),
        });
    }

    let mut instructions = Vec::with_capacity(p.agents);
    for a in 0..p.agents {
        let agent = AgentId(a);
        let mut rng = stream(p.seed, Purpose::Text, a as u64, 0);
        let own = instance.vars_of(agent);
        let own_names: Vec<String> = own.iter().map(|v| names[v.0].clone()).collect();
        let mut sentences = vec![text::meeting_intro(&mut rng, &agents[a], &humans[a], &own_names, &slots)];
        for v in &own {
            let m = &meetings[v.0];
            sentences.push(format!("{} has {} attendees.", m.name, m.participants.len()));
            sentences.push(m.preference_text.clone());
        }
        let mut foreign: BTreeMap<AgentId, Vec<(String, String)>> = BTreeMap::new();
        let mut seen_own = BTreeSet::new();
        for e in instance.agent_edges(agent) {
            let (x, y) = instance.edges()[e];
            let (ox, oy) = (instance.owner(x), instance.owner(y));
            if ox == agent && oy == agent {
                if seen_own.insert(e) {
                    sentences.push(text::own_conflict_sentence(&mut rng, &names[x.0], &names[y.0]));
                }
            } else {
                let (mine, theirs, other) = if ox == agent { (x, y, oy) } else { (y, x, ox) };
                foreign.entry(other).or_default().push((names[theirs.0].clone(), names[mine.0].clone()));
            }
        }
        for (other, pairs) in foreign {
            sentences.push(text::foreign_conflict_sentence(&mut rng, &agents[other.0], &pairs));
        }
        instructions.push(InstructionDoc { text: sentences.join(" "), chart: None, machine_block: None });
    }

    Ok(VlTask {
        name: gp.task_name(),
        kind: BenchmarkKind::Ldms,
        seed: p.seed,
        instance,
        ground_truth: gt,
        instructing: humans,
        instructions,
        meetings: Some(MeetingProblem { meetings, slots }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcop::{brute_force_optimum, satisfaction, DEFAULT_SEARCH_CAP};

    #[test]
    fn default_ldms_is_valid_and_connected() {
        for seed in 0..10 {
            let task = gen_ldms(10, (1, 3), 8, seed).unwrap();
            task.validate().unwrap();
            let inst = &task.instance;
            assert!(inst.num_vars() >= 10 && inst.num_vars() <= 30);
            let edges: Vec<_> = inst.edges().iter().map(|&(a, b)| (a.0, b.0)).collect();
            assert!(is_connected(inst.num_vars(), &edges));
            assert_eq!(task.ground_truth.violation_weight, 15);
        }
    }

    #[test]
    fn shared_participants_create_edges() {
        let task = gen_ldms(6, (1, 2), 4, 2).unwrap();
        let mp = task.meetings.as_ref().unwrap();
        for i in 0..mp.meetings.len() {
            for j in i + 1..mp.meetings.len() {
                let shares = mp.meetings[i].participants.iter().any(|x| mp.meetings[j].participants.contains(x));
                let edge = task.instance.edges().contains(&(VarId(i), VarId(j)));
                assert_eq!(shares, edge);
            }
        }
    }

    #[test]
    fn same_slot_conflict_costs_the_violation_weight() {
        let task = gen_ldms(4, (1, 2), 3, 9).unwrap();
        let gt = &task.ground_truth;
        assert_eq!(gt.violation_weight, 10);
        let (x, y) = task.instance.edges()[0];
        let t = task.instance.table(0);
        for s in 0..3 {
            assert_eq!(t.get(s, s), 10 + (gt.ranks[x.0][s] + gt.ranks[y.0][s]) as u64);
        }
    }

    #[test]
    fn agents_with_several_meetings_own_several_variables() {
        let task = gen_ldms(10, (2, 2), 8, 1).unwrap();
        for a in 0..10 {
            assert_eq!(task.instance.vars_of(AgentId(a)).len(), 2);
        }
    }

    #[test]
    fn slot_styles_match_ranks() {
        let task = gen_ldms(10, (1, 3), 5, 4).unwrap();
        for (m, meeting) in task.meetings.as_ref().unwrap().meetings.iter().enumerate() {
            let r = &task.ground_truth.ranks[m];
            match meeting.style {
                SlotStyle::Early => assert_eq!(r, &vec![0, 1, 2, 3, 4]),
                SlotStyle::Late => assert_eq!(r, &vec![4, 3, 2, 1, 0]),
                SlotStyle::Explicit => {}
            }
        }
    }

    /// Brute force finds a violation-free schedule whenever one exists.
    #[test]
    fn brute_force_clears_violations_when_colorable() {
        let mut checked = 0;
        for seed in 0..200 {
            let task = gen_ldms(4, (1, 1), 3, seed).unwrap();
            assert_eq!(task.instance.num_vars(), 4);
            let inst = &task.instance;
            let colorable = (0..81usize).any(|code| {
                let a: Vec<usize> = (0..4).map(|i| code / 3usize.pow(i) % 3).collect();
                inst.edges().iter().all(|&(x, y)| a[x.0] != a[y.0])
            });
            if !colorable {
                continue;
            }
            let (best, _) = brute_force_optimum(inst, DEFAULT_SEARCH_CAP).unwrap();
            let sat = satisfaction(inst, &best, &task.ground_truth.relations).unwrap();
            assert_eq!(sat.satisfied, sat.total);
            checked += 1;
        }
        assert!(checked > 5, "only {checked} instances checked");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gen_ldms(10, (1, 3), 1, 0).is_err());
        assert!(gen_ldms(1, (1, 3), 8, 0).is_err());
        assert!(gen_ldms(10, (3, 1), 8, 0).is_err());
    }
}
