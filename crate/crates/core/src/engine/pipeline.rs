//! Module-by-module analysis in schedule order.

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use super::backend::{Backend, BackendError, Request, Task};
use super::finding::{parse_finding, ModuleFinding, SchemaError};
use super::prompt::{formulate_module_prompt, repair_prompt, AnalysisContext, PromptBundle, PromptError, PromptTemplates};
use crate::design::Design;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallStats {
    pub task: String,
    pub prompt_chars: usize,
    pub response_chars: usize,
    pub attempts: u32,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{task}: {source}")]
    Prompt {
        task: String,
        #[source]
        source: PromptError,
    },
    #[error("{task}: {source}")]
    Backend {
        task: String,
        #[source]
        source: BackendError,
    },
    #[error("{task}: {source} (after one repair prompt)")]
    Schema {
        task: String,
        #[source]
        source: SchemaError,
    },
}

impl PipelineError {
    pub fn is_backend(&self) -> bool {
        matches!(self, PipelineError::Backend { .. })
    }
}

fn task_label(task: &Task) -> String {
    match task {
        Task::Module(m) => format!("module `{m}`"),
        Task::Report => "final report".into(),
        Task::Monolithic => "monolithic report".into(),
    }
}

/// Sends `prompt`, parses the reply and, on a schema error, sends one repair
/// prompt before giving up.
pub(crate) fn invoke_parsed<T>(
    backend: &dyn Backend,
    task: &Task,
    prompt: &PromptBundle,
    templates: &PromptTemplates,
    parse: impl Fn(&str) -> Result<T, SchemaError>,
) -> Result<(T, CallStats), PipelineError> {
    let start = Instant::now();
    let label = task_label(task);
    let backend_err = |source| PipelineError::Backend {
        task: label.clone(),
        source,
    };
    let mut stats = CallStats {
        task: label.clone(),
        prompt_chars: prompt.chars(),
        response_chars: 0,
        attempts: 1,
        elapsed: Duration::ZERO,
    };
    let reply = backend
        .complete(&Request {
            prompt,
            task,
            attempt: 0,
        })
        .map_err(backend_err)?;
    stats.response_chars += reply.chars().count();
    let first_err = match parse(&reply) {
        Ok(v) => {
            stats.elapsed = start.elapsed();
            return Ok((v, stats));
        }
        Err(e) => e,
    };
    log::warn!("{label}: {first_err}; sending repair prompt");
    let repair = repair_prompt(prompt, &reply, &first_err.reason, templates).map_err(|e| PipelineError::Prompt {
        task: label.clone(),
        source: e.into(),
    })?;
    stats.attempts = 2;
    stats.prompt_chars += repair.chars();
    let reply = backend
        .complete(&Request {
            prompt: &repair,
            task,
            attempt: 1,
        })
        .map_err(backend_err)?;
    stats.response_chars += reply.chars().count();
    let value = parse(&reply).map_err(|source| PipelineError::Schema {
        task: label.clone(),
        source,
    })?;
    stats.elapsed = start.elapsed();
    Ok((value, stats))
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub context: AnalysisContext,
    pub stats: Vec<CallStats>,
}

/// Analyses every module in schedule order, adding each finding to the
/// context before the next module is prompted.
pub fn run_pipeline(
    design: &Design,
    backend: &dyn Backend,
    ctx0: AnalysisContext,
    templates: &PromptTemplates,
) -> Result<PipelineRun, PipelineError> {
    let mut ctx = ctx0;
    let mut stats = Vec::new();
    for name in &design.schedule.order {
        let task = Task::Module(name.clone());
        let decl = design.unit.module(name).expect("scheduled modules are defined");
        let prompt = formulate_module_prompt(name, &ctx, &design.graph, decl, &design.seeds, templates).map_err(
            |source| PipelineError::Prompt {
                task: task_label(&task),
                source,
            },
        )?;
        let (finding, call): (ModuleFinding, _) =
            invoke_parsed(backend, &task, &prompt, templates, |raw| parse_finding(raw, name, Some(decl)))?;
        log::info!(
            "{name}: {} sources, {} assets, {} flows",
            finding.sensitive_sources.len(),
            finding.influenced_assets.len(),
            finding.flows.len()
        );
        ctx.push(finding);
        stats.push(call);
    }
    Ok(PipelineRun { context: ctx, stats })
}
