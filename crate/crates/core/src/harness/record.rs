//! Run records and their line-delimited JSON log format: a header with the
//! configuration, one line per iteration, per-agent query lines, NAS step
//! lines, captured prompt lines and a closing summary line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{write_atomic, HarnessError};
use crate::agents::{Accuracy, NasStep};
use crate::bus::BusStats;
use crate::dcop::{AgentId, Cost};
use crate::model::{CapturedPrompt, TaskKind};

pub const RUN_LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// The NAS step budget ran out for at least one agent.
    Truncated,
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub assignment: Vec<usize>,
    /// Global cost under the oracle tables (observer view).
    pub cost: Cost,
    /// Running minimum of `cost`.
    pub anytime: Cost,
    pub satisfied: usize,
    pub constraints: usize,
    /// Cost the agents compute on their agreed tables (CoPA only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_cost: Option<Cost>,
}

impl IterationRecord {
    pub fn satisfaction(&self) -> f64 {
        if self.constraints == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.constraints as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentQueries {
    pub agent: String,
    pub generate_constraint: u64,
    pub get_max_action: u64,
    pub resolve: u64,
    pub get_action: u64,
    pub fallbacks: u64,
}

impl AgentQueries {
    pub fn new(agent: String, counts: [u64; 4], fallbacks: u64) -> AgentQueries {
        AgentQueries {
            agent,
            generate_constraint: counts[TaskKind::GenerateConstraint.index()],
            get_max_action: counts[TaskKind::GetMaxAction.index()],
            resolve: counts[TaskKind::Resolve.index()],
            get_action: counts[TaskKind::GetAction.index()],
            fallbacks,
        }
    }

    pub fn total(&self) -> u64 {
        self.generate_constraint + self.get_max_action + self.resolve + self.get_action
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NasSummary {
    pub accuracy: Option<Accuracy>,
    pub steps_per_agent: Vec<usize>,
    pub truncated_agents: Vec<AgentId>,
    pub steps: Vec<NasStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub task: String,
    pub adapter: String,
    pub config: RunConfig,
    pub status: RunStatus,
    pub iterations: Vec<IterationRecord>,
    pub queries: Vec<AgentQueries>,
    pub text_fallbacks: u64,
    pub bus: BusStats,
    pub consensus_mismatches: usize,
    pub nas: Option<NasSummary>,
    pub captured: Vec<CapturedPrompt>,
}

impl RunRecord {
    pub fn costs(&self) -> Vec<Cost> {
        self.iterations.iter().map(|i| i.cost).collect()
    }

    pub fn total_queries(&self) -> u64 {
        self.queries.iter().map(AgentQueries::total).sum()
    }

    pub fn fallbacks(&self) -> u64 {
        self.queries.iter().map(|q| q.fallbacks).sum()
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed { .. })
    }

    /// Checks the record's internal consistency.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Data(format!("{}: {m}", self.run_id)));
        let mut best = Cost::MAX;
        let width = self.iterations.first().map(|i| i.assignment.len());
        for (k, it) in self.iterations.iter().enumerate() {
            if it.t != k {
                return bad(format!("iteration {} is out of order", it.t));
            }
            best = best.min(it.cost);
            if it.anytime != best {
                return bad(format!("anytime cost at t={} is not the running minimum", it.t));
            }
            if Some(it.assignment.len()) != width {
                return bad(format!("assignment at t={} has the wrong length", it.t));
            }
            if it.satisfied > it.constraints {
                return bad(format!("more satisfied constraints than constraints at t={}", it.t));
            }
        }
        if !self.failed() && self.iterations.len() != self.config.iterations() + 1 {
            return bad(format!("expected {} iteration lines, found {}", self.config.iterations() + 1, self.iterations.len()));
        }
        if let Some(nas) = &self.nas {
            let total: usize = nas.steps_per_agent.iter().sum();
            if total != nas.steps.len() {
                return bad(format!("{} NAS steps logged but {} counted", nas.steps.len(), total));
            }
            if !nas.truncated_agents.is_empty() && self.status == RunStatus::Completed {
                return bad("truncated agents in a run marked completed".into());
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum LogLine {
    Header { version: u32, run_id: String, task: String, adapter: String, config: RunConfig },
    Iteration(IterationRecord),
    Queries(AgentQueries),
    NasStep(NasStep),
    Prompt(CapturedPrompt),
    Summary {
        status: RunStatus,
        text_fallbacks: u64,
        bus: BusStats,
        consensus_mismatches: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nas_accuracy: Option<Accuracy>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nas_steps_per_agent: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nas_truncated_agents: Option<Vec<AgentId>>,
    },
}

fn line(l: &LogLine) -> String {
    let mut s = serde_json::to_string(l).expect("log lines serialize");
    s.push('\n');
    s
}

/// Renders a record as run-log text.
pub fn write_run_log(r: &RunRecord) -> String {
    let mut out = line(&LogLine::Header {
        version: RUN_LOG_VERSION,
        run_id: r.run_id.clone(),
        task: r.task.clone(),
        adapter: r.adapter.clone(),
        config: r.config.clone(),
    });
    for it in &r.iterations {
        out.push_str(&line(&LogLine::Iteration(it.clone())));
    }
    for q in &r.queries {
        out.push_str(&line(&LogLine::Queries(q.clone())));
    }
    if let Some(nas) = &r.nas {
        for s in &nas.steps {
            out.push_str(&line(&LogLine::NasStep(s.clone())));
        }
    }
    for p in &r.captured {
        out.push_str(&line(&LogLine::Prompt(p.clone())));
    }
    out.push_str(&line(&LogLine::Summary {
        status: r.status.clone(),
        text_fallbacks: r.text_fallbacks,
        bus: r.bus,
        consensus_mismatches: r.consensus_mismatches,
        nas_accuracy: r.nas.as_ref().and_then(|n| n.accuracy.clone()),
        nas_steps_per_agent: r.nas.as_ref().map(|n| n.steps_per_agent.clone()),
        nas_truncated_agents: r.nas.as_ref().map(|n| n.truncated_agents.clone()),
    }));
    out
}

/// Parses run-log text.
pub fn read_run_log(text: &str) -> Result<RunRecord, HarnessError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse = |i: usize, l: &str| -> Result<LogLine, HarnessError> {
        serde_json::from_str(l).map_err(|e| HarnessError::format("run log", format!("line {}: {e}", i + 1)))
    };
    let (i, first) = lines.next().ok_or_else(|| HarnessError::format("run log", "empty file"))?;
    let LogLine::Header { version, run_id, task, adapter, config } = parse(i, first)? else {
        return Err(HarnessError::format("run log", "first line is not a header"));
    };
    if version != RUN_LOG_VERSION {
        return Err(HarnessError::format("run log", format!("unsupported version {version}")));
    }
    let mut r = RunRecord {
        run_id,
        task,
        adapter,
        config,
        status: RunStatus::Failed { error: "run log has no summary".into() },
        iterations: Vec::new(),
        queries: Vec::new(),
        text_fallbacks: 0,
        bus: BusStats::default(),
        consensus_mismatches: 0,
        nas: None,
        captured: Vec::new(),
    };
    let mut steps = Vec::new();
    let mut summary = false;
    for (i, l) in lines {
        if summary {
            return Err(HarnessError::format("run log", format!("line {}: data after the summary", i + 1)));
        }
        match parse(i, l)? {
            LogLine::Header { .. } => return Err(HarnessError::format("run log", format!("line {}: second header", i + 1))),
            LogLine::Iteration(it) => r.iterations.push(it),
            LogLine::Queries(q) => r.queries.push(q),
            LogLine::NasStep(s) => steps.push(s),
            LogLine::Prompt(p) => r.captured.push(p),
            LogLine::Summary {
                status,
                text_fallbacks,
                bus,
                consensus_mismatches,
                nas_accuracy,
                nas_steps_per_agent,
                nas_truncated_agents,
            } => {
                summary = true;
                r.status = status;
                r.text_fallbacks = text_fallbacks;
                r.bus = bus;
                r.consensus_mismatches = consensus_mismatches;
                if let Some(steps_per_agent) = nas_steps_per_agent {
                    r.nas = Some(NasSummary {
                        accuracy: nas_accuracy,
                        steps_per_agent,
                        truncated_agents: nas_truncated_agents.unwrap_or_default(),
                        steps: std::mem::take(&mut steps),
                    });
                }
            }
        }
    }
    if !summary {
        return Err(HarnessError::format("run log", "missing summary line"));
    }
    if !steps.is_empty() {
        return Err(HarnessError::format("run log", "NAS steps without a NAS summary"));
    }
    Ok(r)
}

pub(crate) fn save_run_log(path: &Path, r: &RunRecord) -> Result<(), HarnessError> {
    write_atomic(path, &write_run_log(r))
}

pub(crate) fn load_run_log(path: &Path) -> Result<RunRecord, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    read_run_log(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}
