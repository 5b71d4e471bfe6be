//! Benchmark generation: LDGC (linguistic graph coloring), VLDGC (coloring
//! with chart-rendered preferences) and LDMS (meeting scheduling).

mod baseline;
mod chart;
mod graph;
mod ldgc;
mod meetings;
pub mod text;
mod truth;

pub use baseline::random_baseline;
pub use chart::{chart_from_ranks, render_chart, ChartKind, ChartSpec, SeriesEntry};
pub use graph::{degrees, gen_random_graph, gen_scale_free, is_connected, EdgeList};
pub use ldgc::{gen_coloring, gen_ldgc, gen_vldgc};
pub use meetings::{gen_ldms, gen_meetings, Meeting, MeetingParams, MeetingProblem};
pub use truth::{
    gen_ground_truth, oracle_cost_tables, oracle_entry, oracle_table, violation_weight_for,
    EdgeTruth, GroundTruth, LocalTruth, Network, VarTruth,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcop::{AgentId, DcopError, DcopInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("could not sample a connected meeting graph after {0} attempts")]
    InfeasibleMeetings(usize),
    #[error("malformed machine block: {0}")]
    MalformedBlock(String),
    #[error("chart: {0}")]
    Chart(String),
    #[error("task violates an invariant: {0}")]
    Invariant(String),
    #[error(transparent)]
    Dcop(#[from] DcopError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    Ldgc,
    Vldgc,
    Ldms,
}

impl BenchmarkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkKind::Ldgc => "ldgc",
            BenchmarkKind::Vldgc => "vldgc",
            BenchmarkKind::Ldms => "ldms",
        }
    }
}

impl std::str::FromStr for BenchmarkKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ldgc" => Ok(BenchmarkKind::Ldgc),
            "vldgc" => Ok(BenchmarkKind::Vldgc),
            "ldms" => Ok(BenchmarkKind::Ldms),
            other => Err(format!("unknown benchmark '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Random,
    ScaleFree,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Random => "random",
            Topology::ScaleFree => "scale-free",
        }
    }

    pub fn generate(self, n: usize, m: usize, seed: u64) -> Result<EdgeList, BenchError> {
        match self {
            Topology::Random => gen_random_graph(n, m, seed),
            Topology::ScaleFree => gen_scale_free(n, m, seed),
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Topology::Random),
            "scale-free" | "scale_free" | "scalefree" => Ok(Topology::ScaleFree),
            other => Err(format!("unknown topology '{other}'")),
        }
    }
}

/// What one coordinating agent is told by its instructing agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionDoc {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_block: Option<String>,
}

/// A generated benchmark task: instructions for every coordinating agent,
/// the hidden ground truth, and the oracle instance derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct VlTask {
    pub name: String,
    pub kind: BenchmarkKind,
    pub seed: u64,
    pub instance: DcopInstance,
    pub ground_truth: GroundTruth,
    /// Instructing agent of each coordinating agent.
    pub instructing: Vec<String>,
    pub instructions: Vec<InstructionDoc>,
    pub meetings: Option<MeetingProblem>,
}

impl VlTask {
    pub fn local_truth(&self, agent: AgentId) -> LocalTruth {
        self.ground_truth.local_slice(&self.instance, agent)
    }

    pub fn has_machine_blocks(&self) -> bool {
        self.instructions.iter().all(|d| d.machine_block.is_some())
    }

    pub fn with_machine_blocks(mut self) -> VlTask {
        for a in 0..self.instance.num_agents() {
            let block = self.local_truth(AgentId(a)).to_block();
            self.instructions[a].machine_block = Some(block);
        }
        self
    }

    pub fn without_machine_blocks(mut self) -> VlTask {
        for d in &mut self.instructions {
            d.machine_block = None;
        }
        self
    }

    /// Checks every generator invariant: oracle tables match the ground
    /// truth, instructions mention each neighbor exactly once, machine blocks
    /// and charts decode to the local truth.
    pub fn validate(&self) -> Result<(), BenchError> {
        let inst = &self.instance;
        let n = inst.num_agents();
        if self.instructions.len() != n || self.instructing.len() != n {
            return Err(BenchError::Invariant("one instruction per agent is required".into()));
        }
        let rebuilt = oracle_cost_tables(&self.ground_truth, &Network::of(inst))?;
        if rebuilt.tables() != inst.tables() {
            return Err(BenchError::Invariant("oracle tables differ from the ground truth".into()));
        }
        let max_pref = inst
            .domains()
            .iter()
            .map(|d| d.len().saturating_sub(1) as u64)
            .max()
            .unwrap_or(0);
        if self.ground_truth.violation_weight <= 2 * max_pref {
            return Err(BenchError::Invariant("violation weight does not dominate preferences".into()));
        }
        for (a, doc) in self.instructions.iter().enumerate() {
            let agent = AgentId(a);
            if inst.agent_degree(agent) > 0 && doc.text.trim().is_empty() {
                return Err(BenchError::Invariant(format!("{} has an empty instruction", inst.agent_name(agent))));
            }
            for nb in inst.agent_neighbors(agent) {
                let name = inst.agent_name(nb);
                let count = text::mention_count(&doc.text, name);
                if count != 1 {
                    return Err(BenchError::Invariant(format!(
                        "instruction of {} mentions {name} {count} times",
                        inst.agent_name(agent)
                    )));
                }
            }
            if let Some(block) = &doc.machine_block {
                if LocalTruth::parse(block)? != self.local_truth(agent) {
                    return Err(BenchError::Invariant(format!(
                        "machine block of {} disagrees with the ground truth",
                        inst.agent_name(agent)
                    )));
                }
            }
            if let Some(chart) = &doc.chart {
                let vars = inst.vars_of(agent);
                let ok = vars.len() == 1 && chart.decode_ranks() == self.ground_truth.ranks[vars[0].0];
                if !ok {
                    return Err(BenchError::Invariant(format!(
                        "chart of {} does not decode to its preferences",
                        inst.agent_name(agent)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameters shared by every generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub kind: BenchmarkKind,
    pub topology: Topology,
    /// Agents.
    pub n: usize,
    /// Edges (coloring benchmarks only).
    pub m: usize,
    /// Colors or time slots.
    pub domain: usize,
    pub seed: u64,
    pub avoid_fraction: f64,
    pub machine_blocks: bool,
    pub meetings_per_agent: (usize, usize),
}

impl GenParams {
    pub fn new(kind: BenchmarkKind, n: usize, m: usize, domain: usize, seed: u64) -> GenParams {
        GenParams {
            kind,
            topology: Topology::Random,
            n,
            m,
            domain,
            seed,
            avoid_fraction: 0.8,
            machine_blocks: true,
            meetings_per_agent: (1, 3),
        }
    }

    pub fn task_name(&self) -> String {
        match self.kind {
            BenchmarkKind::Ldms => format!("ldms-n{}-d{}-s{}", self.n, self.domain, self.seed),
            k => format!(
                "{}-{}-n{}-m{}-d{}-s{}",
                k.as_str(),
                self.topology.as_str(),
                self.n,
                self.m,
                self.domain,
                self.seed
            ),
        }
    }
}

pub fn generate(params: &GenParams) -> Result<VlTask, BenchError> {
    let task = match params.kind {
        BenchmarkKind::Ldgc | BenchmarkKind::Vldgc => gen_coloring(params)?,
        BenchmarkKind::Ldms => gen_meetings(params)?,
    };
    Ok(if params.machine_blocks { task.with_machine_blocks() } else { task })
}
