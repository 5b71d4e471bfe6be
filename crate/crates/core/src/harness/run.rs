use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Archetype, RunConfig};
use super::record::{save_run_log, AgentQueries, IterationRecord, NasSummary, RunRecord, RunStatus};
use super::taskdoc::read_task_doc;
use super::{write_atomic, HarnessError};
use crate::agents::{copa_dsa_run, decision_accuracy, fmc_dsa_run, nas_run, AgentError, ArchetypeRun};
use crate::benchgen::{generate, random_baseline, VlTask};
use crate::bus::BusStats;
use crate::dcop::{global_cost, run_dsa, satisfaction, AgentId, Assignment, DsaParams, VarId};
use crate::model::{default_cost_max, ModelClient, PromptOptions};
use crate::stream;

/// The task named by `config`: loaded from `task_file` or generated from the
/// instance seed.
pub fn load_or_generate(config: &RunConfig) -> Result<VlTask, HarnessError> {
    match &config.task_file {
        Some(path) => read_task_doc(path),
        None => Ok(generate(&config.gen_params())?),
    }
}

fn iteration_records(task: &VlTask, run: &ArchetypeRun) -> Result<Vec<IterationRecord>, HarnessError> {
    let inst = &task.instance;
    let mut best = u64::MAX;
    run.assignments
        .iter()
        .enumerate()
        .map(|(t, values)| {
            let a = Assignment::complete(values.clone());
            let cost = global_cost(inst, &a)?;
            let sat = satisfaction(inst, &a, &task.ground_truth.relations)?;
            best = best.min(cost);
            Ok(IterationRecord {
                t,
                assignment: values.clone(),
                cost,
                anytime: best,
                satisfied: sat.satisfied,
                constraints: sat.total,
                self_cost: run.self_costs.as_ref().map(|c| c[t]),
            })
        })
        .collect()
}

fn client_for(config: &RunConfig, task: &VlTask) -> Result<ModelClient, HarnessError> {
    let mut adapter = config.adapter.clone();
    adapter.noise_seed = stream::mix(adapter.noise_seed, config.stream_seed());
    let model = adapter.build()?;
    let options = PromptOptions {
        token_cap: adapter.token_cap,
        multimodal: adapter.multimodal,
        include_machine_block: false,
        resolve_rule: adapter.resolve_rule,
    };
    let agents = task.instance.num_agents();
    let client = ModelClient::new(model, options, agents);
    Ok(if config.capture_prompts {
        client.with_capture((0..agents).map(|a| task.local_truth(AgentId(a)).to_block()).collect())
    } else {
        client
    })
}

/// Runs one configuration. Generation and configuration problems are
/// errors; adapter failures produce a record marked failed.
pub fn run_experiment(config: &RunConfig) -> Result<RunRecord, HarnessError> {
    config.validate()?;
    let task = load_or_generate(config)?;
    run_on_task(config, &task)
}

pub(crate) fn run_on_task(config: &RunConfig, task: &VlTask) -> Result<RunRecord, HarnessError> {
    config.validate()?;
    let inst = &task.instance;
    let seed = config.stream_seed();
    let max_domain = inst.domains().iter().map(Vec::len).max().unwrap_or(2);
    let bounds = (
        config.adapter.cost_min,
        config.adapter.cost_max.unwrap_or_else(|| default_cost_max(task.ground_truth.violation_weight, max_domain)),
    );
    let params = config.run_params(bounds);
    let mut record = RunRecord {
        run_id: config.run_id(&task.name),
        task: task.name.clone(),
        adapter: config.adapter_label(),
        config: config.clone(),
        status: RunStatus::Completed,
        iterations: Vec::new(),
        queries: Vec::new(),
        text_fallbacks: 0,
        bus: BusStats::default(),
        consensus_mismatches: 0,
        nas: None,
        captured: Vec::new(),
    };
    let zero_queries = || {
        (0..inst.num_agents())
            .map(|a| AgentQueries::new(inst.agent_name(AgentId(a)).to_string(), [0; 4], 0))
            .collect::<Vec<_>>()
    };

    let run: Result<ArchetypeRun, AgentError> = match config.archetype {
        Archetype::DsaOracle | Archetype::Random => {
            let trace = if config.archetype == Archetype::DsaOracle {
                run_dsa(inst, DsaParams { epsilon: params.epsilon, iterations: params.iterations }, seed)?
            } else {
                random_baseline(inst, params.iterations, seed)?
            };
            record.queries = zero_queries();
            Ok(ArchetypeRun {
                assignments: trace.assignments,
                self_costs: None,
                bus: BusStats::default(),
                nas: None,
                truncated: false,
                consensus_mismatches: 0,
            })
        }
        arch => {
            let client = client_for(config, task)?;
            let out = match arch {
                Archetype::FmcDsa => fmc_dsa_run(task, &client, &params),
                Archetype::CopaDsa => copa_dsa_run(task, &client, &params),
                _ => nas_run(task, &client, &params),
            };
            let snapshot = client.ledger().snapshot();
            record.queries = snapshot
                .into_iter()
                .enumerate()
                .map(|(a, counts)| {
                    AgentQueries::new(inst.agent_name(AgentId(a)).to_string(), counts, client.ledger().fallbacks(AgentId(a)))
                })
                .collect();
            record.text_fallbacks = client.ledger().text_fallbacks();
            record.captured = client.captured();
            out
        }
    };

    match run {
        Ok(run) => {
            record.iterations = iteration_records(task, &run)?;
            record.bus = run.bus;
            record.consensus_mismatches = run.consensus_mismatches;
            if run.truncated {
                record.status = RunStatus::Truncated;
            }
            if let Some(nas) = run.nas {
                record.nas = Some(NasSummary {
                    accuracy: decision_accuracy(&nas.steps, params.iterations).ok(),
                    steps_per_agent: nas.steps_per_agent,
                    truncated_agents: nas.truncated_agents,
                    steps: nas.steps,
                });
            }
        }
        Err(AgentError::Model(e)) if e.is_fatal() => {
            log::error!("{}: {e}", record.run_id);
            record.status = RunStatus::Failed { error: e.to_string() };
        }
        Err(e) => return Err(e.into()),
    }
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct Timing {
    pub run_id: String,
    pub seconds: f64,
}

pub(crate) fn timing_path(log: &Path) -> PathBuf {
    log.with_extension("timing.json")
}

/// Writes the run log and its wall-clock sidecar; returns the log path.
pub fn write_run(record: &RunRecord, dir: &Path, seconds: f64) -> Result<PathBuf, HarnessError> {
    let path = dir.join(format!("{}.jsonl", record.run_id));
    save_run_log(&path, record)?;
    let timing = Timing { run_id: record.run_id.clone(), seconds };
    write_atomic(&timing_path(&path), &serde_json::to_string(&timing).expect("timing serializes"))?;
    Ok(path)
}

/// Runs every configuration in parallel, writing each log as it finishes.
/// `progress` receives one JSON line per finished run.
pub fn run_sweep(
    configs: &[RunConfig],
    progress: &(dyn Fn(String) + Sync),
) -> Vec<Result<(RunRecord, PathBuf), HarnessError>> {
    configs
        .par_iter()
        .map(|cfg| {
            let start = Instant::now();
            let outcome = run_experiment(cfg).and_then(|rec| {
                let path = write_run(&rec, &cfg.output_dir, start.elapsed().as_secs_f64())?;
                Ok((rec, path))
            });
            let line = match &outcome {
                Ok((rec, path)) => serde_json::json!({
                    "event": "run-finished",
                    "run": rec.run_id,
                    "status": rec.status,
                    "final_cost": rec.iterations.last().map(|i| i.cost),
                    "anytime_cost": rec.iterations.last().map(|i| i.anytime),
                    "queries": rec.total_queries(),
                    "log": path.display().to_string(),
                }),
                Err(e) => serde_json::json!({
                    "event": "run-error",
                    "benchmark": cfg.benchmark,
                    "archetype": cfg.archetype,
                    "instance_seed": cfg.instance_seed,
                    "error": e.to_string(),
                }),
            };
            progress(line.to_string());
            outcome
        })
        .collect()
}

/// Owner-respecting check that every assignment value is inside its domain.
pub(crate) fn assignments_in_domain(task: &VlTask, record: &RunRecord) -> bool {
    record.iterations.iter().all(|it| {
        it.assignment.len() == task.instance.num_vars()
            && it.assignment.iter().enumerate().all(|(v, &x)| x < task.instance.domain_size(VarId(v)))
    })
}
