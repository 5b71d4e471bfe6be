//! Task documents: a versioned TOML file holding the network, the hidden
//! ground truth, the oracle tables and every agent's instruction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, HarnessError};
use crate::benchgen::{render_chart, BenchmarkKind, ChartSpec, GroundTruth, InstructionDoc, MeetingProblem, VlTask};
use crate::dcop::{AgentId, CostTable, DcopInstance, VarId};

pub const TASK_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    schema_version: u32,
    task: TaskMeta,
    network: NetworkDoc,
    ground_truth: GroundTruth,
    tables: TablesDoc,
    instructions: InstructionsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meetings: Option<MeetingProblem>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskMeta {
    name: String,
    kind: BenchmarkKind,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    agents: Vec<String>,
    instructing: Vec<String>,
    variables: Vec<String>,
    owner: Vec<usize>,
    domains: Vec<Vec<String>>,
    edges: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TablesDoc {
    edge: Vec<TableDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    scope: [usize; 2],
    rows: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstructionsDoc {
    agent: Vec<AgentDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    name: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chart: Option<ChartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    machine_block: Option<String>,
}

/// Serializes a task to its document text.
pub fn task_doc(task: &VlTask) -> Result<String, HarnessError> {
    let inst = &task.instance;
    let doc = TaskDoc {
        schema_version: TASK_SCHEMA_VERSION,
        task: TaskMeta { name: task.name.clone(), kind: task.kind, seed: task.seed },
        network: NetworkDoc {
            agents: inst.agent_names().to_vec(),
            instructing: task.instructing.clone(),
            variables: inst.var_names().to_vec(),
            owner: inst.owners().iter().map(|a| a.0).collect(),
            domains: inst.domains().to_vec(),
            edges: inst.edges().iter().map(|&(x, y)| [x.0, y.0]).collect(),
        },
        ground_truth: task.ground_truth.clone(),
        tables: TablesDoc {
            edge: inst
                .tables()
                .iter()
                .map(|t| TableDoc { scope: [t.scope().0 .0, t.scope().1 .0], rows: t.to_rows() })
                .collect(),
        },
        instructions: InstructionsDoc {
            agent: task
                .instructions
                .iter()
                .enumerate()
                .map(|(a, d)| AgentDoc {
                    name: inst.agent_name(AgentId(a)).to_string(),
                    text: d.text.clone(),
                    chart: d.chart.clone(),
                    machine_block: d.machine_block.clone(),
                })
                .collect(),
        },
        meetings: task.meetings.clone(),
    };
    toml::to_string(&doc).map_err(|e| HarnessError::format("task document", e))
}

/// Parses and validates a task document.
pub fn parse_task_doc(text: &str) -> Result<VlTask, HarnessError> {
    let version: toml::Table = toml::from_str(text).map_err(|e| HarnessError::format("task document", e))?;
    match version.get("schema_version").and_then(toml::Value::as_integer) {
        Some(v) if v == i64::from(TASK_SCHEMA_VERSION) => {}
        Some(v) => return Err(HarnessError::format("task document", format!("unsupported schema_version {v}"))),
        None => return Err(HarnessError::format("task document", "schema_version is missing")),
    }
    let doc: TaskDoc = toml::from_str(text).map_err(|e| HarnessError::format("task document", e))?;
    let net = doc.network;
    let edges: Vec<(VarId, VarId)> = net.edges.iter().map(|&[x, y]| (VarId(x), VarId(y))).collect();
    let tables = doc
        .tables
        .edge
        .into_iter()
        .map(|t| CostTable::from_rows((VarId(t.scope[0]), VarId(t.scope[1])), t.rows))
        .collect::<Result<Vec<_>, _>>()?;
    let instance = DcopInstance::new(
        net.agents.clone(),
        net.variables,
        net.owner.into_iter().map(AgentId).collect(),
        net.domains,
        edges,
        tables,
    )?;
    if doc.instructions.agent.len() != net.agents.len() {
        return Err(HarnessError::format("task document", "one [[instructions.agent]] entry per agent is required"));
    }
    let instructions = doc
        .instructions
        .agent
        .into_iter()
        .zip(&net.agents)
        .map(|(a, name)| {
            if &a.name != name {
                return Err(HarnessError::format("task document", format!("instruction for {} is out of order", a.name)));
            }
            Ok(InstructionDoc { text: a.text, chart: a.chart, machine_block: a.machine_block })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let task = VlTask {
        name: doc.task.name,
        kind: doc.task.kind,
        seed: doc.task.seed,
        instance,
        ground_truth: doc.ground_truth,
        instructing: net.instructing,
        instructions,
        meetings: doc.meetings,
    };
    task.validate()?;
    Ok(task)
}

pub fn read_task_doc(path: &Path) -> Result<VlTask, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_task_doc(&text)
}

/// Writes `<dir>/<task>/task.toml`, one plain-text instruction file per agent
/// and one chart image per agent that has a chart. Returns the written paths.
pub fn write_task_dir(task: &VlTask, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let root = dir.join(&task.name);
    let mut written = Vec::new();
    let doc_path = root.join("task.toml");
    write_atomic(&doc_path, &task_doc(task)?)?;
    written.push(doc_path);
    for (a, doc) in task.instructions.iter().enumerate() {
        let name = task.instance.agent_name(AgentId(a));
        let mut text = format!("{}\n", doc.text);
        if let Some(chart) = &doc.chart {
            let svg_path = root.join(format!("{name}_pref.svg"));
            write_atomic(&svg_path, &render_chart(chart))?;
            text.push_str(&format!("\n[chart: {name}_pref.svg]\n"));
            written.push(svg_path);
        }
        let path = root.join("instructions").join(format!("{name}.txt"));
        write_atomic(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{generate, BenchmarkKind, GenParams};

    #[test]
    fn documents_round_trip_for_every_benchmark() {
        for kind in [BenchmarkKind::Ldgc, BenchmarkKind::Vldgc, BenchmarkKind::Ldms] {
            let d = if kind == BenchmarkKind::Ldms { 8 } else { 4 };
            let task = generate(&GenParams::new(kind, 6, 9, d, 3)).unwrap();
            let text = task_doc(&task).unwrap();
            let back = parse_task_doc(&text).unwrap();
            assert_eq!(back, task);
            assert_eq!(task_doc(&back).unwrap(), text);
        }
    }

    #[test]
    fn schema_version_is_required() {
        let task = generate(&GenParams::new(BenchmarkKind::Ldgc, 5, 6, 4, 1)).unwrap();
        let text = task_doc(&task).unwrap();
        let stripped = text.replacen("schema_version = 1\n", "", 1);
        assert!(parse_task_doc(&stripped).is_err());
        let bumped = text.replacen("schema_version = 1", "schema_version = 9", 1);
        assert!(parse_task_doc(&bumped).is_err());
    }

    #[test]
    fn tampered_tables_are_rejected() {
        let task = generate(&GenParams::new(BenchmarkKind::Ldgc, 5, 6, 4, 2)).unwrap();
        let mut doc: toml::Table = toml::from_str(&task_doc(&task).unwrap()).unwrap();
        let rows = &mut doc["tables"]["edge"][0]["rows"][0][0];
        *rows = toml::Value::Integer(rows.as_integer().unwrap() + 1);
        assert!(parse_task_doc(&toml::to_string(&doc).unwrap()).is_err());
    }

    #[test]
    fn task_dir_has_one_instruction_per_agent() {
        let dir = tempfile::tempdir().unwrap();
        let task = generate(&GenParams::new(BenchmarkKind::Vldgc, 10, 23, 4, 7)).unwrap();
        let written = write_task_dir(&task, dir.path()).unwrap();
        let txt = written.iter().filter(|p| p.extension().is_some_and(|e| e == "txt")).count();
        let svg = written.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")).count();
        assert_eq!((txt, svg), (10, 10));
        assert_eq!(read_task_doc(&dir.path().join(&task.name).join("task.toml")).unwrap(), task);
    }
}
