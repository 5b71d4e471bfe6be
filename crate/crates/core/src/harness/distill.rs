//! Distillation datasets: captured prompts paired with ground-truth answers.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use super::{write_atomic, HarnessError};
use crate::model::{validate_pair, TaskKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillPair {
    pub prompt: String,
    pub answer: String,
    pub kind: TaskKind,
    pub agent: String,
    pub iteration: usize,
}

/// Collects captured pairs of the requested kinds (all kinds when empty),
/// in record order. With a `limit`, exactly that many pairs are returned or
/// an error if fewer were captured. Every pair is validated against its
/// prompt.
pub fn export_distill(
    records: &[RunRecord],
    kinds: &[TaskKind],
    limit: Option<usize>,
    dedup: bool,
) -> Result<Vec<DistillPair>, HarnessError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in records {
        for c in &r.captured {
            if !kinds.is_empty() && !kinds.contains(&c.kind) {
                continue;
            }
            if dedup && !seen.insert((c.prompt.clone(), c.answer.clone())) {
                continue;
            }
            validate_pair(c.kind, &c.prompt, &c.answer)
                .map_err(|e| HarnessError::Data(format!("{}: invalid pair for {}: {e}", r.run_id, c.agent)))?;
            out.push(DistillPair {
                prompt: c.prompt.clone(),
                answer: c.answer.clone(),
                kind: c.kind,
                agent: c.agent.clone(),
                iteration: c.iteration,
            });
            if limit == Some(out.len()) {
                return Ok(out);
            }
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Data("no captured prompts; run with capture_prompts = true".into()));
    }
    if let Some(n) = limit {
        return Err(HarnessError::Data(format!("only {} pairs captured, {n} requested", out.len())));
    }
    Ok(out)
}

/// Writes one JSON object per line.
pub fn write_distill(pairs: &[DistillPair], path: &Path) -> Result<(), HarnessError> {
    let mut text = String::new();
    for p in pairs {
        text.push_str(&serde_json::to_string(p).expect("pairs serialize"));
        text.push('\n');
    }
    write_atomic(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcop::AgentId;
    use crate::harness::{load_or_generate, run_experiment, Archetype, RunConfig};

    #[test]
    fn fmc_capture_yields_degree_plus_iterations_per_agent() {
        let cfg = RunConfig { archetype: Archetype::FmcDsa, capture_prompts: true, ..RunConfig::default() };
        let rec = run_experiment(&cfg).unwrap();
        let task = load_or_generate(&cfg).unwrap();
        let pairs = export_distill(std::slice::from_ref(&rec), &[], None, false).unwrap();
        for a in 0..10 {
            let name = task.instance.agent_name(AgentId(a));
            let count = pairs.iter().filter(|p| p.agent == name).count();
            assert_eq!(count, task.instance.agent_degree(AgentId(a)) + 50);
        }
        let only = export_distill(std::slice::from_ref(&rec), &[TaskKind::GetMaxAction], None, false).unwrap();
        assert_eq!(only.len(), 500);
        assert_eq!(export_distill(std::slice::from_ref(&rec), &[], Some(37), false).unwrap().len(), 37);
        assert!(export_distill(std::slice::from_ref(&rec), &[], Some(100_000), false).is_err());
    }

    #[test]
    fn no_capture_is_an_error() {
        let rec = run_experiment(&RunConfig { iterations: Some(5), ..RunConfig::default() }).unwrap();
        assert!(export_distill(&[rec], &[], None, false).is_err());
    }

    #[test]
    fn pairs_are_written_one_per_line() {
        let cfg = RunConfig {
            archetype: Archetype::CopaDsa,
            capture_prompts: true,
            iterations: Some(5),
            ..RunConfig::default()
        };
        let rec = run_experiment(&cfg).unwrap();
        let pairs = export_distill(&[rec], &[], None, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        write_distill(&pairs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), pairs.len());
        let back: DistillPair = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, pairs[0]);
    }
}
