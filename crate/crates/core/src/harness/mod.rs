//! Experiment orchestration: run configuration, the run loop over all
//! archetypes and baselines, run logs, metrics, reports, distillation export
//! and the command-line interface.

pub mod cli;
mod config;
mod distill;
mod metrics;
mod record;
mod report;
mod run;
mod taskdoc;

pub use config::{Archetype, RunConfig, SweepManifest, SweepSpec};
pub use distill::{export_distill, write_distill, DistillPair};
pub use metrics::{metrics, window_mean, MetricsSummary};
pub use record::{read_run_log, write_run_log, IterationRecord, NasSummary, RunRecord, RunStatus, RUN_LOG_VERSION};
pub use report::{aggregate, load_records, render_csv, render_curves_svg, render_table, TableRow};
pub use run::{load_or_generate, run_experiment, run_sweep, write_run};
pub use taskdoc::{parse_task_doc, read_task_doc, task_doc, write_task_dir, TASK_SCHEMA_VERSION};

use thiserror::Error;

use crate::agents::AgentError;
use crate::benchgen::BenchError;
use crate::dcop::DcopError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Dcop(#[from] DcopError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed {what}: {msg}")]
    Format { what: String, msg: String },
    #[error("{0}")]
    Data(String),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> HarnessError {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn format(what: &str, msg: impl ToString) -> HarnessError {
        HarnessError::Format { what: what.to_string(), msg: msg.to_string() }
    }
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub(crate) fn write_atomic(path: &std::path::Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
