//! Graph-coloring benchmarks. Each agent owns one color variable named after
//! the agent.

use rand::Rng;

use super::chart::{chart_from_ranks, ChartKind};
use super::text;
use super::truth::{gen_ground_truth, oracle_cost_tables, Network};
use super::{generate, BenchError, BenchmarkKind, GenParams, InstructionDoc, VlTask};
use crate::dcop::{AgentId, VarId};
use crate::stream::{stream, Purpose};

pub fn gen_ldgc(n: usize, m: usize, domain: usize, seed: u64) -> Result<VlTask, BenchError> {
    generate(&GenParams::new(BenchmarkKind::Ldgc, n, m, domain, seed))
}

pub fn gen_vldgc(n: usize, m: usize, domain: usize, seed: u64) -> Result<VlTask, BenchError> {
    generate(&GenParams::new(BenchmarkKind::Vldgc, n, m, domain, seed))
}

/// LDGC or VLDGC task without machine blocks.
pub fn gen_coloring(p: &GenParams) -> Result<VlTask, BenchError> {
    if p.kind == BenchmarkKind::Ldms {
        return Err(BenchError::InvalidParameters("meeting scheduling is not a coloring benchmark".into()));
    }
    if p.domain < 2 {
        return Err(BenchError::InvalidParameters(format!("need at least 2 colors, got {}", p.domain)));
    }
    let edges = p.topology.generate(p.n, p.m, p.seed)?;
    let agents = text::agent_names(p.n);
    let humans = text::instructing_names(p.n);
    let colors = text::color_names(p.domain);
    let network = Network {
        agents: agents.clone(),
        variables: agents.clone(),
        owner: (0..p.n).map(AgentId).collect(),
        domains: vec![colors.clone(); p.n],
        edges: edges.iter().map(|&(a, b)| (VarId(a), VarId(b))).collect(),
    };
    let gt = gen_ground_truth(p.n, &network.edges, p.domain, p.avoid_fraction, p.seed)?;
    let instance = oracle_cost_tables(&gt, &network)?;

    let mut instructions = Vec::with_capacity(p.n);
    for a in 0..p.n {
        let mut rng = stream(p.seed, Purpose::Text, a as u64, 0);
        let mut sentences = vec![text::color_intro(&mut rng, &agents[a], &humans[a], &colors)];
        for (e, other) in instance.neighbors(VarId(a)) {
            sentences.push(text::relation_sentence(&mut rng, gt.relations[e], &agents[other.0]));
        }
        let chart = if p.kind == BenchmarkKind::Vldgc {
            let mut crng = stream(p.seed, Purpose::Chart, a as u64, 0);
            let kind = ChartKind::ALL[crng.gen_range(0..3)];
            let title = format!("Color preferences of {}", humans[a]);
            let spec = chart_from_ranks(kind, &title, &colors, &gt.ranks[a], &mut crng)?;
            sentences.push(text::chart_sentence(&mut rng, kind));
            Some(spec)
        } else {
            let mut ordered = colors.clone();
            ordered.sort_by_key(|c| gt.ranks[a][colors.iter().position(|x| x == c).unwrap_or(0)]);
            sentences.push(text::preference_sentence(&mut rng, &ordered));
            None
        };
        instructions.push(InstructionDoc { text: sentences.join(" "), chart, machine_block: None });
    }

    Ok(VlTask {
        name: p.task_name(),
        kind: p.kind,
        seed: p.seed,
        instance,
        ground_truth: gt,
        instructing: humans,
        instructions,
        meetings: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{LocalTruth, Topology};

    #[test]
    fn ldgc_default_size() {
        let task = gen_ldgc(10, 23, 4, 7).unwrap();
        assert_eq!(task.instructions.len(), 10);
        assert_eq!(task.instance.edges().len(), 23);
        task.validate().unwrap();
    }

    #[test]
    fn every_neighbor_is_named_once() {
        for seed in 0..20 {
            let task = gen_ldgc(10, 23, 4, seed).unwrap();
            for a in 0..10 {
                let doc = &task.instructions[a].text;
                for nb in task.instance.agent_neighbors(AgentId(a)) {
                    assert_eq!(text::mention_count(doc, task.instance.agent_name(nb)), 1, "{doc}");
                }
            }
        }
    }

    #[test]
    fn machine_blocks_round_trip() {
        let task = gen_ldgc(10, 23, 4, 3).unwrap();
        for a in 0..10 {
            let block = task.instructions[a].machine_block.as_ref().unwrap();
            assert_eq!(LocalTruth::parse(block).unwrap(), task.local_truth(AgentId(a)));
        }
        assert!(!task.without_machine_blocks().has_machine_blocks());
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_vldgc(10, 23, 4, 11).unwrap(), gen_vldgc(10, 23, 4, 11).unwrap());
        assert_ne!(gen_ldgc(10, 23, 4, 11).unwrap().instructions, gen_ldgc(10, 23, 4, 12).unwrap().instructions);
    }

    #[test]
    fn vldgc_charts_decode_and_kinds_are_balanced() {
        let mut counts = [0usize; 3];
        for seed in 0..30 {
            let task = gen_vldgc(10, 23, 4, seed).unwrap();
            task.validate().unwrap();
            for (a, doc) in task.instructions.iter().enumerate() {
                let chart = doc.chart.as_ref().unwrap();
                assert_eq!(chart.decode_ranks(), task.ground_truth.ranks[a]);
                counts[ChartKind::ALL.iter().position(|&k| k == chart.kind()).unwrap()] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / 300.0;
            assert!((f - 1.0 / 3.0).abs() <= 0.07, "{counts:?}");
        }
    }

    #[test]
    fn scale_free_topology_is_supported() {
        let mut p = GenParams::new(BenchmarkKind::Ldgc, 50, 120, 4, 5);
        p.topology = Topology::ScaleFree;
        let task = generate(&p).unwrap();
        assert_eq!(task.instance.edges().len(), 120);
        task.validate().unwrap();
    }
}
