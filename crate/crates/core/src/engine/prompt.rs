//! Prompt templates, technique definitions and the accumulated context.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use super::finding::ModuleFinding;
use crate::design::Design;
use crate::frontend::ModuleDecl;
use crate::graph::DesignGraph;
use crate::taint::AssetSeed;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
    #[error("template `{template}` uses unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}` has an unclosed placeholder")]
    Unclosed { template: String },
    #[error("unknown technique `{0}`, expected net-level or gate-level")]
    UnknownTechnique(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Finding,
    Report,
}

impl SchemaKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemaKind::Finding => "finding",
            SchemaKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub expected_schema: SchemaKind,
}

impl PromptBundle {
    pub fn chars(&self) -> usize {
        self.system_text.chars().count() + self.user_text.chars().count()
    }
}

/// Template texts, either built in or read from a directory with the same layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub module: String,
    pub final_report: String,
    pub monolithic: String,
    pub repair: String,
    pub net_level: String,
    pub gate_level: String,
}

const FILES: [&str; 7] = [
    "system.txt",
    "module.txt",
    "final.txt",
    "monolithic.txt",
    "repair.txt",
    "techniques/net-level.txt",
    "techniques/gate-level.txt",
];

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: include_str!("../../prompts/system.txt").into(),
            module: include_str!("../../prompts/module.txt").into(),
            final_report: include_str!("../../prompts/final.txt").into(),
            monolithic: include_str!("../../prompts/monolithic.txt").into(),
            repair: include_str!("../../prompts/repair.txt").into(),
            net_level: include_str!("../../prompts/techniques/net-level.txt").into(),
            gate_level: include_str!("../../prompts/techniques/gate-level.txt").into(),
        }
    }
}

impl PromptTemplates {
    /// Reads templates from `dir`; files that are absent keep the built-in text.
    pub fn load(dir: &Path) -> Result<PromptTemplates, TemplateError> {
        let mut t = PromptTemplates::default();
        for name in FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let slot = match name {
                "system.txt" => &mut t.system,
                "module.txt" => &mut t.module,
                "final.txt" => &mut t.final_report,
                "monolithic.txt" => &mut t.monolithic,
                "repair.txt" => &mut t.repair,
                "techniques/net-level.txt" => &mut t.net_level,
                _ => &mut t.gate_level,
            };
            *slot = text;
        }
        Ok(t)
    }

    pub fn technique(&self, name: &str) -> Result<Technique, TemplateError> {
        let definition = match name {
            "net-level" => &self.net_level,
            "gate-level" => &self.gate_level,
            other => return Err(TemplateError::UnknownTechnique(other.to_string())),
        };
        Ok(Technique {
            name: name.to_string(),
            definition: definition.trim().to_string(),
        })
    }
}

/// Substitutes `{{name}}` placeholders in one pass; substituted text is not rescanned.
pub fn render(template_name: &str, template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or_else(|| TemplateError::Unclosed {
            template: template_name.to_string(),
        })?;
        let name = after[..close].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::UnknownPlaceholder {
                template: template_name.to_string(),
                name: name.to_string(),
            })?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Technique {
    pub name: String,
    pub definition: String,
}

/// Findings gathered so far, in schedule order, plus the technique
/// definitions and the character budget for injected context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisContext {
    findings: Vec<ModuleFinding>,
    pub techniques: Vec<Technique>,
    pub budget: usize,
}

pub const DEFAULT_CONTEXT_BUDGET: usize = 24_000;

impl AnalysisContext {
    pub fn new(techniques: Vec<Technique>, budget: usize) -> Self {
        AnalysisContext {
            findings: Vec::new(),
            techniques,
            budget,
        }
    }

    /// Both built-in techniques and the default budget.
    pub fn with_defaults(templates: &PromptTemplates) -> Self {
        let techniques = ["net-level", "gate-level"]
            .iter()
            .map(|n| templates.technique(n).expect("built-in technique"))
            .collect();
        Self::new(techniques, DEFAULT_CONTEXT_BUDGET)
    }

    pub fn findings(&self) -> &[ModuleFinding] {
        &self.findings
    }

    pub fn finding(&self, module: &str) -> Option<&ModuleFinding> {
        self.findings.iter().find(|f| f.module == module)
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub(crate) fn push(&mut self, f: ModuleFinding) {
        self.findings.push(f);
    }

    pub fn techniques_text(&self) -> String {
        if self.techniques.is_empty() {
            return "(none)".into();
        }
        self.techniques
            .iter()
            .map(|t| format!("### {}\n{}", t.name, t.definition))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn finding_block(f: &ModuleFinding) -> String {
    format!("### {}\n{}", f.module, f.to_reply_json())
}

/// Serialises findings oldest first. When the text exceeds `budget`
/// characters the oldest findings are dropped and replaced by an
/// `[elided k findings]` marker.
pub fn serialize_findings(findings: &[&ModuleFinding], budget: usize) -> String {
    if findings.is_empty() {
        return "(none)".into();
    }
    let blocks: Vec<String> = findings.iter().map(|f| finding_block(f)).collect();
    let mut skip = 0;
    loop {
        let kept = &blocks[skip..];
        let body = kept.join("\n\n");
        let text = if skip == 0 {
            body
        } else if kept.is_empty() {
            format!("[elided {skip} findings]")
        } else {
            format!("[elided {skip} findings]\n\n{body}")
        };
        if text.chars().count() <= budget || kept.is_empty() {
            return text;
        }
        skip += 1;
    }
}

pub fn assets_text(seeds: &[AssetSeed]) -> String {
    if seeds.is_empty() {
        return "(none designated)".into();
    }
    seeds
        .iter()
        .map(|s| format!("- `{}` in module `{}` (asset `{}`)", s.signal, s.module, s.label))
        .collect::<Vec<_>>()
        .join("\n")
}

fn name_list(names: &[String]) -> String {
    if names.is_empty() {
        "(none)".into()
    } else {
        names.join(", ")
    }
}

pub fn order_text(g: &DesignGraph) -> String {
    g.order().join(" -> ")
}

pub fn adjacency_text(g: &DesignGraph) -> String {
    let mut out = String::new();
    for n in g.order() {
        let succ = g.successors(n);
        let _ = writeln!(out, "{n}: [{}]", succ.join(", "));
    }
    out.trim_end().to_string()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("module `{module}` scheduled before its ancestor `{ancestor}` was analysed")]
    MissingAncestorFinding { module: String, ancestor: String },
    #[error("module `{0}` is not part of the design")]
    UnknownModule(String),
    #[error("context has no finding for module `{0}`")]
    IncompleteContext(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// The prompt for one module: its source, ancestors, dependents, techniques
/// and the findings of its ancestors. The design overview (order and
/// adjacency) is included only while the context is still empty.
pub fn formulate_module_prompt(
    module: &str,
    ctx: &AnalysisContext,
    g: &DesignGraph,
    decl: &ModuleDecl,
    seeds: &[AssetSeed],
    templates: &PromptTemplates,
) -> Result<PromptBundle, PromptError> {
    let ancestors = g
        .ancestors(module)
        .map_err(|_| PromptError::UnknownModule(module.to_string()))?;
    let dependents = g
        .dependents(module)
        .map_err(|_| PromptError::UnknownModule(module.to_string()))?;
    let mut prior = Vec::with_capacity(ancestors.len());
    for a in &ancestors {
        let f = ctx.finding(a).ok_or_else(|| PromptError::MissingAncestorFinding {
            module: module.to_string(),
            ancestor: a.clone(),
        })?;
        prior.push(f);
    }
    let overview = if ctx.is_empty() {
        format!(
            "## Design overview\nModule order (dependencies first): {}\nAdjacency list (module -> modules that depend on it):\n{}\n\n",
            order_text(g),
            adjacency_text(g)
        )
    } else {
        String::new()
    };
    let user_text = render(
        "module.txt",
        &templates.module,
        &[
            ("overview", &overview),
            ("module_name", module),
            ("module_source", decl.source_text.trim_end()),
            ("ancestors", &name_list(&ancestors)),
            ("dependents", &name_list(&dependents)),
            ("assets", &assets_text(seeds)),
            ("techniques", &ctx.techniques_text()),
            ("context", &serialize_findings(&prior, ctx.budget)),
        ],
    )?;
    Ok(PromptBundle {
        system_text: templates.system.clone(),
        user_text,
        expected_schema: SchemaKind::Finding,
    })
}

/// The whole design in one prompt, asking for the report directly.
pub fn formulate_monolithic_prompt(
    design: &Design,
    ctx: &AnalysisContext,
    templates: &PromptTemplates,
) -> Result<PromptBundle, PromptError> {
    let sources: Vec<&str> = design.unit.modules.iter().map(|m| m.source_text.trim_end()).collect();
    let user_text = render(
        "monolithic.txt",
        &templates.monolithic,
        &[
            ("sources", &sources.join("\n\n")),
            ("assets", &assets_text(&design.seeds)),
            ("techniques", &ctx.techniques_text()),
            ("top", design.top_name()),
        ],
    )?;
    Ok(PromptBundle {
        system_text: templates.system.clone(),
        user_text,
        expected_schema: SchemaKind::Report,
    })
}

/// Follow-up prompt after a reply that failed schema validation.
pub fn repair_prompt(
    original: &PromptBundle,
    reply: &str,
    reason: &str,
    templates: &PromptTemplates,
) -> Result<PromptBundle, TemplateError> {
    let note = render(
        "repair.txt",
        &templates.repair,
        &[
            ("schema", original.expected_schema.name()),
            ("reason", reason),
            ("reply", reply),
        ],
    )?;
    Ok(PromptBundle {
        system_text: original.system_text.clone(),
        user_text: format!("{}\n\n{}", original.user_text.trim_end(), note),
        expected_schema: original.expected_schema,
    })
}
