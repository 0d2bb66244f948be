//! Per-module analysis with a pluggable backend and accumulated context.

mod backend;
mod finding;
mod pipeline;
mod prompt;

pub use backend::{
    fixture_key, fixture_path, Backend, BackendConfig, BackendError, BackendKind, HttpBackend, MockTaintBackend,
    RecordingBackend, ReplayBackend, Request, Task,
};
pub use finding::{extract_json_object, parse_finding, Flow, FlowScope, ModuleFinding, SchemaError};
pub(crate) use finding::string_list;
pub(crate) use pipeline::invoke_parsed;
pub use pipeline::{run_pipeline, CallStats, PipelineError, PipelineRun};
pub use prompt::{
    adjacency_text, assets_text, formulate_module_prompt, formulate_monolithic_prompt, order_text, render,
    repair_prompt, serialize_findings, AnalysisContext, PromptBundle, PromptError, PromptTemplates, SchemaKind,
    Technique, TemplateError, DEFAULT_CONTEXT_BUDGET,
};
