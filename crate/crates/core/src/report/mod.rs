//! Global leakage assessment over the per-module findings.

mod mock;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::design::Design;
use crate::engine::{
    adjacency_text, assets_text, extract_json_object, formulate_monolithic_prompt, invoke_parsed, order_text,
    render, run_pipeline, serialize_findings, string_list, AnalysisContext, Backend, CallStats, PipelineError,
    PromptBundle, PromptError, PromptTemplates, SchemaError, SchemaKind, Task,
};
use crate::graph::DesignGraph;
use crate::taint::AssetSeed;

pub use mock::mock_report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageType {
    Confidentiality,
    Integrity,
    TimingSideChannel,
    None,
    Other,
}

impl LeakageType {
    fn parse(s: &str) -> Option<LeakageType> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        Some(match norm.as_str() {
            "confidentiality" => LeakageType::Confidentiality,
            "integrity" => LeakageType::Integrity,
            "timing_side_channel" | "timing" => LeakageType::TimingSideChannel,
            "none" => LeakageType::None,
            "other" => LeakageType::Other,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transformation {
    pub from_module: String,
    pub source: String,
    pub sink: String,
    pub to_module: String,
}

impl Transformation {
    pub fn new(from_module: &str, source: &str, sink: &str, to_module: &str) -> Self {
        Transformation {
            from_module: from_module.into(),
            source: source.into(),
            sink: sink.into(),
            to_module: to_module.into(),
        }
    }
}

/// Field order is the canonical key order of the serialized report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub vulnerability_found: bool,
    pub vulnerable_modules: Vec<String>,
    pub leakage_path: Vec<String>,
    pub leakage_type: LeakageType,
    pub explanation: String,
    pub transformations: Vec<Transformation>,
}

impl LeakageReport {
    pub fn clean(explanation: impl Into<String>) -> Self {
        LeakageReport {
            vulnerability_found: false,
            vulnerable_modules: Vec::new(),
            leakage_path: Vec::new(),
            leakage_type: LeakageType::None,
            explanation: explanation.into(),
            transformations: Vec::new(),
        }
    }

    /// Two-space indented JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn summary(&self) -> String {
        if self.vulnerability_found {
            let lt = serde_json::to_value(self.leakage_type).expect("enum");
            format!(
                "leakage found ({}): {}",
                lt.as_str().unwrap_or("other"),
                self.leakage_path.join(" -> ")
            )
        } else {
            "no leakage found".into()
        }
    }
}

fn transformation_list(obj: &Map<String, Value>, raw: &str) -> Result<Vec<Transformation>, SchemaError> {
    let err = |reason: String| SchemaError::new("report", raw, reason);
    let items = match obj.get("transformations") {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(v)) => v,
        Some(_) => return Err(err("`transformations` is not a list".into())),
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let fields: Vec<String> = match item {
            Value::Object(o) => ["from_module", "source", "sink", "to_module"]
                .iter()
                .map(|k| match o.get(*k) {
                    Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
                    _ => Err(err(format!("`transformations[{i}].{k}` is missing or not a nonempty string"))),
                })
                .collect::<Result<_, _>>()?,
            Value::Array(a) if a.len() == 4 && a.iter().all(|v| v.as_str().is_some_and(|s| !s.trim().is_empty())) => {
                a.iter().map(|v| v.as_str().unwrap_or_default().trim().to_string()).collect()
            }
            _ => return Err(err(format!("`transformations[{i}]` is not a transformation object"))),
        };
        out.push(Transformation::new(&fields[0], &fields[1], &fields[2], &fields[3]));
    }
    Ok(out)
}

/// Parses a backend reply into a report. An unrecognised leakage type is
/// kept as `other` with the original text prepended to the explanation.
pub fn parse_report(raw: &str) -> Result<LeakageReport, SchemaError> {
    let obj = extract_json_object(raw).ok_or_else(|| SchemaError::new("report", raw, "no JSON object found"))?;
    let v = match obj.get("vulnerability_found") {
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(SchemaError::new("report", raw, "`vulnerability_found` is not a boolean")),
        None => return Err(SchemaError::new("report", raw, "missing `vulnerability_found`")),
    };
    let mut explanation = match obj.get("explanation") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.trim().to_string(),
        Some(_) => return Err(SchemaError::new("report", raw, "`explanation` is not a string")),
    };
    let leakage_type = match obj.get("leakage_type") {
        None | Some(Value::Null) => {
            if v {
                explanation = format!("[leakage type not reported] {explanation}").trim_end().to_string();
                LeakageType::Other
            } else {
                LeakageType::None
            }
        }
        Some(Value::String(s)) => match LeakageType::parse(s) {
            Some(t) => t,
            None => {
                explanation = format!("[reported leakage type: {}] {explanation}", s.trim())
                    .trim_end()
                    .to_string();
                LeakageType::Other
            }
        },
        Some(_) => return Err(SchemaError::new("report", raw, "`leakage_type` is not a string")),
    };
    Ok(LeakageReport {
        vulnerability_found: v,
        vulnerable_modules: string_list(&obj, "vulnerable_modules", "report", raw)?,
        leakage_path: string_list(&obj, "leakage_path", "report", raw)?,
        leakage_type,
        explanation,
        transformations: transformation_list(&obj, raw)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation")]
pub enum Violation {
    UnknownModule { field: String, module: String },
    DisconnectedPair { from: String, to: String },
    InconsistentVerdict { detail: String },
    EmptyLeakagePath,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownModule { field, module } => {
                write!(f, "UnknownModule: {field} names `{module}`, which is not in the design graph")
            }
            Violation::DisconnectedPair { from, to } => {
                write!(f, "DisconnectedPair: `{from}` -> `{to}` are not connected in the design graph")
            }
            Violation::InconsistentVerdict { detail } => write!(f, "InconsistentVerdict: {detail}"),
            Violation::EmptyLeakagePath => write!(f, "EmptyLeakagePath: vulnerability reported without a leakage path"),
        }
    }
}

/// Consecutive path modules must be joined by an edge in either direction
/// or be instantiated by a common parent.
pub fn modules_connected(g: &DesignGraph, a: &str, b: &str) -> bool {
    a == b
        || g.has_edge(a, b)
        || g.has_edge(b, a)
        || g.successors(a).iter().any(|p| g.successors(b).contains(p))
}

pub fn validate_report(r: &LeakageReport, g: &DesignGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.vulnerability_found {
        if r.leakage_path.is_empty() {
            out.push(Violation::EmptyLeakagePath);
        }
        if r.leakage_type == LeakageType::None {
            out.push(Violation::InconsistentVerdict {
                detail: "vulnerability_found is true but leakage_type is none".into(),
            });
        }
    } else {
        let mut bad = Vec::new();
        if !r.vulnerable_modules.is_empty() {
            bad.push("vulnerable_modules");
        }
        if !r.leakage_path.is_empty() {
            bad.push("leakage_path");
        }
        if !r.transformations.is_empty() {
            bad.push("transformations");
        }
        if r.leakage_type != LeakageType::None {
            bad.push("leakage_type");
        }
        if !bad.is_empty() {
            out.push(Violation::InconsistentVerdict {
                detail: format!("vulnerability_found is false but {} not empty/none", bad.join(", ")),
            });
        }
    }
    let mut unknown = |field: &str, m: &str| {
        if !g.contains(m) {
            out.push(Violation::UnknownModule {
                field: field.into(),
                module: m.into(),
            });
        }
    };
    for m in &r.vulnerable_modules {
        unknown("vulnerable_modules", m);
    }
    for m in &r.leakage_path {
        unknown("leakage_path", m);
    }
    for t in &r.transformations {
        unknown("transformations.from_module", &t.from_module);
        unknown("transformations.to_module", &t.to_module);
    }
    for pair in r.leakage_path.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if g.contains(a) && g.contains(b) && !modules_connected(g, a, b) {
            out.push(Violation::DisconnectedPair {
                from: a.clone(),
                to: b.clone(),
            });
        }
    }
    out
}

/// The integration prompt: order, adjacency, every finding and the report schema.
pub fn formulate_final_prompt(
    ctx: &AnalysisContext,
    g: &DesignGraph,
    seeds: &[AssetSeed],
    top: &str,
    templates: &PromptTemplates,
) -> Result<PromptBundle, PromptError> {
    let mut findings = Vec::with_capacity(g.order().len());
    for m in g.order() {
        findings.push(ctx.finding(m).ok_or_else(|| PromptError::IncompleteContext(m.clone()))?);
    }
    let user_text = render(
        "final.txt",
        &templates.final_report,
        &[
            ("order", &order_text(g)),
            ("adjacency", &adjacency_text(g)),
            ("assets", &assets_text(seeds)),
            ("techniques", &ctx.techniques_text()),
            ("context", &serialize_findings(&findings, ctx.budget)),
            ("top", top),
        ],
    )?;
    Ok(PromptBundle {
        system_text: templates.system.clone(),
        user_text,
        expected_schema: SchemaKind::Report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DivideAndConquer,
    Monolithic,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::DivideAndConquer => "with divide and conquer",
            Mode::Monolithic => "w/o divide and conquer",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: LeakageReport,
    pub violations: Vec<Violation>,
    /// Module findings; empty in monolithic mode.
    pub context: AnalysisContext,
    pub stats: Vec<CallStats>,
}

/// Runs the whole flow for one design and validates the resulting report.
pub fn analyze(
    design: &Design,
    backend: &dyn Backend,
    templates: &PromptTemplates,
    ctx0: AnalysisContext,
    mode: Mode,
) -> Result<Analysis, PipelineError> {
    let (report, context, stats) = match mode {
        Mode::DivideAndConquer => {
            let run = run_pipeline(design, backend, ctx0, templates)?;
            let prompt = formulate_final_prompt(&run.context, &design.graph, &design.seeds, design.top_name(), templates)
                .map_err(|source| PipelineError::Prompt {
                    task: "final report".into(),
                    source,
                })?;
            let (report, call) = invoke_parsed(backend, &Task::Report, &prompt, templates, parse_report)?;
            let mut stats = run.stats;
            stats.push(call);
            (report, run.context, stats)
        }
        Mode::Monolithic => {
            let prompt = formulate_monolithic_prompt(design, &ctx0, templates).map_err(|source| PipelineError::Prompt {
                task: "monolithic report".into(),
                source,
            })?;
            let (report, call) = invoke_parsed(backend, &Task::Monolithic, &prompt, templates, parse_report)?;
            (report, ctx0, vec![call])
        }
    };
    let violations = validate_report(&report, &design.graph);
    Ok(Analysis {
        report,
        violations,
        context,
        stats,
    })
}
