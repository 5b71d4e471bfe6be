//! Hidden ground truth and the handcrafted oracle cost rule
//! `V·violation + rank_i(a) + rank_j(b)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::dcop::{AgentId, Cost, CostTable, DcopInstance, Relation, VarId};
use crate::stream::{stream, Purpose};

/// Violation weight for a domain of `domain_size` values: 10, raised when
/// needed so a violation always outweighs the largest preference sum.
pub fn violation_weight_for(domain_size: usize) -> Cost {
    let max_pref = 2 * domain_size.saturating_sub(1) as Cost;
    10.max(max_pref + 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub violation_weight: Cost,
    /// `ranks[var][value]`, 0 = most preferred.
    pub ranks: Vec<Vec<usize>>,
    /// One relation per edge, in edge order.
    pub relations: Vec<Relation>,
}

/// Structural part of an instance: everything except the cost tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    pub agents: Vec<String>,
    pub variables: Vec<String>,
    pub owner: Vec<AgentId>,
    pub domains: Vec<Vec<String>>,
    pub edges: Vec<(VarId, VarId)>,
}

impl Network {
    pub fn of(instance: &DcopInstance) -> Network {
        Network {
            agents: instance.agent_names().to_vec(),
            variables: instance.var_names().to_vec(),
            owner: instance.owners().to_vec(),
            domains: instance.domains().to_vec(),
            edges: instance.edges().to_vec(),
        }
    }
}

pub fn random_permutation_ranks(rng: &mut impl Rng, size: usize) -> Vec<usize> {
    let mut ranks: Vec<usize> = (0..size).collect();
    ranks.shuffle(rng);
    ranks
}

/// Uniform rank permutation per variable; each edge is `avoid` with
/// probability `avoid_fraction`, otherwise `match`.
pub fn gen_ground_truth(
    num_vars: usize,
    edges: &[(VarId, VarId)],
    domain_size: usize,
    avoid_fraction: f64,
    seed: u64,
) -> Result<GroundTruth, BenchError> {
    if !(0.0..=1.0).contains(&avoid_fraction) {
        return Err(BenchError::InvalidParameters(format!(
            "avoid fraction {avoid_fraction} is outside [0, 1]"
        )));
    }
    let ranks = (0..num_vars)
        .map(|v| random_permutation_ranks(&mut stream(seed, Purpose::Truth, v as u64, 0), domain_size))
        .collect();
    let mut rng = stream(seed, Purpose::Truth, u64::MAX, 1);
    let relations = edges
        .iter()
        .map(|_| {
            if rng.gen::<f64>() < avoid_fraction {
                Relation::Avoid
            } else {
                Relation::Match
            }
        })
        .collect();
    Ok(GroundTruth { violation_weight: violation_weight_for(domain_size), ranks, relations })
}

/// Oracle entry for an edge `(first, second)` with values `(a, b)`.
pub fn oracle_entry(gt: &GroundTruth, relation: Relation, first: VarId, a: usize, second: VarId, b: usize) -> Cost {
    let violation = if relation.violated(a, b) { gt.violation_weight } else { 0 };
    violation + gt.ranks[first.0][a] as Cost + gt.ranks[second.0][b] as Cost
}

pub fn oracle_table(gt: &GroundTruth, edge: usize, scope: (VarId, VarId), rows: usize, cols: usize) -> CostTable {
    let rel = gt.relations[edge];
    CostTable::from_fn(scope, rows, cols, |a, b| oracle_entry(gt, rel, scope.0, a, scope.1, b))
}

/// Builds the evaluation instance from hidden ground truth.
pub fn oracle_cost_tables(gt: &GroundTruth, network: &Network) -> Result<DcopInstance, BenchError> {
    if gt.relations.len() != network.edges.len() {
        return Err(BenchError::InvalidParameters(format!(
            "{} relations for {} edges",
            gt.relations.len(),
            network.edges.len()
        )));
    }
    if gt.ranks.len() != network.variables.len()
        || gt.ranks.iter().zip(&network.domains).any(|(r, d)| r.len() != d.len())
    {
        return Err(BenchError::InvalidParameters("rank shapes do not match the domains".into()));
    }
    let tables = network
        .edges
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| oracle_table(gt, e, (a, b), network.domains[a.0].len(), network.domains[b.0].len()))
        .collect();
    Ok(DcopInstance::new(
        network.agents.clone(),
        network.variables.clone(),
        network.owner.clone(),
        network.domains.clone(),
        network.edges.clone(),
        tables,
    )?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarTruth {
    pub var: VarId,
    pub ranks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTruth {
    pub edge: usize,
    pub var: VarId,
    pub other: VarId,
    pub other_agent: AgentId,
    pub relation: Relation,
}

/// One agent's slice of the ground truth: its own preference ranks and the
/// relation on every constraint it takes part in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalTruth {
    pub agent: AgentId,
    pub violation_weight: Cost,
    pub variables: Vec<VarTruth>,
    pub relations: Vec<EdgeTruth>,
}

impl LocalTruth {
    pub fn to_block(&self) -> String {
        serde_json::to_string(self).expect("local truth serializes")
    }

    pub fn parse(block: &str) -> Result<LocalTruth, BenchError> {
        serde_json::from_str(block.trim()).map_err(|e| BenchError::MalformedBlock(e.to_string()))
    }

    pub fn ranks_of(&self, var: VarId) -> Option<&[usize]> {
        self.variables.iter().find(|v| v.var == var).map(|v| v.ranks.as_slice())
    }
}

impl GroundTruth {
    pub fn local_slice(&self, instance: &DcopInstance, agent: AgentId) -> LocalTruth {
        let variables = instance
            .vars_of(agent)
            .into_iter()
            .map(|var| VarTruth { var, ranks: self.ranks[var.0].clone() })
            .collect();
        let relations = instance
            .agent_edges(agent)
            .into_iter()
            .map(|e| {
                let (a, b) = instance.edges()[e];
                let (var, other) = if instance.owner(a) == agent { (a, b) } else { (b, a) };
                EdgeTruth {
                    edge: e,
                    var,
                    other,
                    other_agent: instance.owner(other),
                    relation: self.relations[e],
                }
            })
            .collect();
        LocalTruth { agent, violation_weight: self.violation_weight, variables, relations }
    }

    /// Largest oracle entry, i.e. `V + 2(|D|-1)` for uniform domains.
    pub fn max_cost(&self) -> Cost {
        let max_rank = self.ranks.iter().flatten().copied().max().unwrap_or(0) as Cost;
        self.violation_weight + 2 * max_rank
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_agent_network(d: usize) -> Network {
        let colors = ["A", "B", "C", "D"];
        Network {
            agents: vec!["X".into(), "Y".into()],
            variables: vec!["X".into(), "Y".into()],
            owner: vec![AgentId(0), AgentId(1)],
            domains: vec![colors[..d].iter().map(|s| s.to_string()).collect(); 2],
            edges: vec![(VarId(0), VarId(1))],
        }
    }

    #[test]
    fn avoid_fraction_one_gives_all_avoid() {
        let edges: Vec<_> = (0..30).map(|i| (VarId(i), VarId(i + 1))).collect();
        let gt = gen_ground_truth(31, &edges, 4, 1.0, 3).unwrap();
        assert!(gt.relations.iter().all(|&r| r == Relation::Avoid));
        assert_eq!(gt.violation_weight, 10);
        assert!(gen_ground_truth(31, &edges, 4, 1.5, 3).is_err());
    }

    #[test]
    fn ranks_are_permutations() {
        let edges = [(VarId(0), VarId(1))];
        for seed in 0..1000 {
            let gt = gen_ground_truth(2, &edges, 5, 0.8, seed).unwrap();
            for r in &gt.ranks {
                let mut s = r.clone();
                s.sort_unstable();
                assert_eq!(s, (0..5).collect::<Vec<_>>());
            }
        }
    }

    /// X: A≻B≻C, Y: B≻A≻C on an avoid edge.
    #[test]
    fn asymmetric_preferences_on_avoid_edge() {
        let gt = GroundTruth {
            violation_weight: 10,
            ranks: vec![vec![0, 1, 2], vec![1, 0, 2]],
            relations: vec![Relation::Avoid],
        };
        let inst = oracle_cost_tables(&gt, &two_agent_network(3)).unwrap();
        let t = inst.table(0);
        assert_eq!(t.get(2, 2), 14);
        assert_eq!(t.get(0, 0), 11);
        assert_eq!(t.get(1, 1), 11);
        assert!(t.get(2, 2) > t.get(0, 0) && t.get(2, 2) > t.get(1, 1));
        // Both rank-0 values, distinct colors: no violation, no preference cost.
        assert_eq!(t.get(0, 1), 0);
    }

    #[test]
    fn match_edge_equal_values_stay_below_violation() {
        let d = 4;
        let gt = GroundTruth {
            violation_weight: violation_weight_for(d),
            ranks: vec![vec![3, 1, 0, 2], vec![2, 0, 3, 1]],
            relations: vec![Relation::Match],
        };
        let inst = oracle_cost_tables(&gt, &two_agent_network(d)).unwrap();
        for a in 0..d {
            let c = inst.table(0).get(a, a);
            assert_eq!(c, (gt.ranks[0][a] + gt.ranks[1][a]) as Cost);
            assert!(c <= 2 * (d as Cost - 1) && c < gt.violation_weight);
        }
    }

    #[test]
    fn violation_weight_dominates_preferences() {
        for d in 1..20 {
            assert!(violation_weight_for(d) > 2 * (d as Cost).saturating_sub(1));
        }
        assert_eq!(violation_weight_for(4), 10);
        assert_eq!(violation_weight_for(8), 15);
    }

    #[test]
    fn local_slice_round_trips_through_block() {
        let gt = GroundTruth {
            violation_weight: 10,
            ranks: vec![vec![0, 1, 2], vec![1, 0, 2]],
            relations: vec![Relation::Avoid],
        };
        let inst = oracle_cost_tables(&gt, &two_agent_network(3)).unwrap();
        let slice = gt.local_slice(&inst, AgentId(1));
        assert_eq!(slice.relations[0].var, VarId(1));
        assert_eq!(slice.relations[0].other_agent, AgentId(0));
        assert_eq!(LocalTruth::parse(&slice.to_block()).unwrap(), slice);
    }
}
