//! Verilog front end: parsing, module hierarchy and per-module dependency edges.

pub mod ast;
mod deps;
mod lexer;
mod parser;
mod printer;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use ast::*;
pub use deps::{assignment_sites, extract_dependencies, AssignSite, DepEdge, DepOptions, FlowKind};
pub use parser::{parse_source, ParseOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Note,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Note => "note",
        })
    }
}

/// A non-fatal finding about the source, printed as `file:line:col: severity: message`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}: {}",
            self.file, self.line, self.col, self.severity, self.message
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{file}:{line}:{col}: error: {message}")]
    Parse {
        file: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{file}:{line}:{col}: error: unsupported construct: {construct}")]
    Unsupported {
        file: String,
        line: u32,
        col: u32,
        construct: String,
    },
    #[error("{file}: error: module `{name}` defined more than once")]
    DuplicateModule { name: String, file: String },
    #[error("{path}: error: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

/// One `(parent, child, instance)` instantiation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct HierarchyEdge {
    pub parent: String,
    pub child: String,
    pub instance: String,
}

/// All modules of a design, with instance targets resolved where possible.
#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub files: Vec<SourceFile>,
    pub modules: Vec<ModuleDecl>,
    pub top: Option<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl SourceUnit {
    /// Parses every file (in parallel) and resolves instances across files.
    pub fn from_sources(files: Vec<SourceFile>) -> Result<SourceUnit, FrontendError> {
        let parsed: Vec<ParseOutput> = files
            .par_iter()
            .map(|f| parse_source(&f.text, &f.path))
            .collect::<Result<_, _>>()?;
        let mut modules = Vec::new();
        let mut diagnostics = Vec::new();
        for out in parsed {
            modules.extend(out.modules);
            diagnostics.extend(out.diagnostics);
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, m) in modules.iter().enumerate() {
            if index.insert(m.name.clone(), i).is_some() {
                return Err(FrontendError::DuplicateModule {
                    name: m.name.clone(),
                    file: m.file.clone(),
                });
            }
        }
        let port_lists: HashMap<String, Vec<(String, Direction)>> = modules
            .iter()
            .map(|m| {
                let ports = m.ports.iter().map(|p| (p.name.clone(), p.direction)).collect();
                (m.name.clone(), ports)
            })
            .collect();
        for m in &mut modules {
            for (i, inst) in m.instances.iter_mut().enumerate() {
                let pos = m.spans.instances[i];
                let Some(ports) = port_lists.get(&inst.module_name) else {
                    let mut message = format!(
                        "module `{}` instantiated as `{}` in `{}` is not defined; treating it as a black box",
                        inst.module_name, inst.instance_name, m.name
                    );
                    if inst.is_positional() {
                        message.push_str(" (positional connections kept unnamed)");
                    }
                    diagnostics.push(Diagnostic {
                        file: m.file.clone(),
                        line: pos.line,
                        col: pos.col,
                        severity: Severity::Warning,
                        message,
                    });
                    continue;
                };
                let names: Vec<String> = ports.iter().map(|(n, _)| n.clone()).collect();
                let at = |message: String| FrontendError::Parse {
                    file: m.file.clone(),
                    line: pos.line,
                    col: pos.col,
                    message,
                };
                parser::normalize_positional(inst, &names).map_err(at)?;
                for conn in &inst.connections {
                    if let PortRef::Named(formal) = &conn.port {
                        if !names.contains(formal) {
                            return Err(at(format!(
                                "module `{}` has no port `{formal}` (instance `{}`)",
                                inst.module_name, inst.instance_name
                            )));
                        }
                    }
                }
            }
        }
        Ok(SourceUnit {
            files,
            modules,
            top: None,
            diagnostics,
        })
    }

    pub fn from_text(path: &str, text: &str) -> Result<SourceUnit, FrontendError> {
        Self::from_sources(vec![SourceFile {
            path: path.to_string(),
            text: text.to_string(),
        }])
    }

    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<SourceUnit, FrontendError> {
        let files = paths
            .iter()
            .map(|p| {
                let p = p.as_ref();
                std::fs::read_to_string(p)
                    .map(|text| SourceFile {
                        path: p.display().to_string(),
                        text,
                    })
                    .map_err(|e| FrontendError::Io {
                        path: p.display().to_string(),
                        message: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_sources(files)
    }

    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn module_names(&self) -> impl Iterator<Item = &str> {
        self.modules.iter().map(|m| m.name.as_str())
    }

    pub fn is_black_box(&self, module_name: &str) -> bool {
        self.module(module_name).is_none()
    }

    /// One entry per instance whose target module is defined, in file then
    /// declaration order. Black-box instances are left out.
    pub fn resolve_hierarchy(&self) -> Vec<HierarchyEdge> {
        self.modules
            .iter()
            .flat_map(|m| {
                m.instances
                    .iter()
                    .filter(|inst| self.module(&inst.module_name).is_some())
                    .map(|inst| HierarchyEdge {
                        parent: m.name.clone(),
                        child: inst.module_name.clone(),
                        instance: inst.instance_name.clone(),
                    })
            })
            .collect()
    }

    /// `(parent, instance, missing module)` for every unresolved instance.
    pub fn black_boxes(&self) -> Vec<(&str, &str, &str)> {
        self.modules
            .iter()
            .flat_map(|m| {
                m.instances
                    .iter()
                    .filter(|inst| self.module(&inst.module_name).is_none())
                    .map(move |inst| {
                        (
                            m.name.as_str(),
                            inst.instance_name.as_str(),
                            inst.module_name.as_str(),
                        )
                    })
            })
            .collect()
    }

    /// Modules that no other defined module instantiates.
    pub fn uninstantiated(&self) -> Vec<&str> {
        let children: std::collections::HashSet<&str> = self
            .modules
            .iter()
            .flat_map(|m| m.instances.iter().map(|i| i.module_name.as_str()))
            .collect();
        self.module_names().filter(|n| !children.contains(n)).collect()
    }

    /// Restricts the unit to `top` and the modules it transitively instantiates.
    pub fn restrict_to(&self, top: &str) -> Option<SourceUnit> {
        self.module(top)?;
        let mut keep = std::collections::HashSet::new();
        let mut stack = vec![top.to_string()];
        while let Some(name) = stack.pop() {
            if !keep.insert(name.clone()) {
                continue;
            }
            if let Some(m) = self.module(&name) {
                for inst in &m.instances {
                    if self.module(&inst.module_name).is_some() {
                        stack.push(inst.module_name.clone());
                    }
                }
            }
        }
        Some(SourceUnit {
            files: self.files.clone(),
            modules: self
                .modules
                .iter()
                .filter(|m| keep.contains(&m.name))
                .cloned()
                .collect(),
            top: Some(top.to_string()),
            diagnostics: self.diagnostics.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_only_unit_has_no_hierarchy() {
        let unit = SourceUnit::from_text("a.v", "module leaf(input a, output b); assign b = a; endmodule").unwrap();
        assert!(unit.resolve_hierarchy().is_empty());
    }

    #[test]
    fn missing_module_is_black_box_diagnostic() {
        let unit = SourceUnit::from_text(
            "top.v",
            "module top(input a, output b);\n  ext_phy u_phy(.din(a), .dout(b));\nendmodule",
        )
        .unwrap();
        assert!(unit.resolve_hierarchy().is_empty());
        assert_eq!(unit.diagnostics.len(), 1);
        let text = unit.diagnostics[0].to_string();
        assert!(text.starts_with("top.v:2:11: warning:"), "{text}");
        assert!(text.contains("ext_phy"));
        assert_eq!(unit.black_boxes(), vec![("top", "u_phy", "ext_phy")]);
    }

    #[test]
    fn positional_connections_resolve_across_files() {
        let unit = SourceUnit::from_sources(vec![
            SourceFile {
                path: "top.v".into(),
                text: "module top(input x, output y); leaf u0(x, y); endmodule".into(),
            },
            SourceFile {
                path: "leaf.v".into(),
                text: "module leaf(input a, output b); assign b = a; endmodule".into(),
            },
        ])
        .unwrap();
        let inst = &unit.module("top").unwrap().instances[0];
        assert!(!inst.is_positional());
        assert!(inst.connection("b").is_some());
        assert_eq!(
            unit.resolve_hierarchy(),
            vec![HierarchyEdge {
                parent: "top".into(),
                child: "leaf".into(),
                instance: "u0".into()
            }]
        );
    }

    #[test]
    fn unknown_formal_port_is_an_error() {
        let err = SourceUnit::from_text(
            "t.v",
            "module leaf(input a); endmodule\nmodule top(input x); leaf u(.nope(x)); endmodule",
        )
        .unwrap_err();
        assert!(err.to_string().contains("no port `nope`"), "{err}");
    }

    #[test]
    fn duplicate_module_across_files() {
        let f = |p: &str| SourceFile {
            path: p.into(),
            text: "module m; endmodule".into(),
        };
        let err = SourceUnit::from_sources(vec![f("a.v"), f("b.v")]).unwrap_err();
        assert!(matches!(err, FrontendError::DuplicateModule { .. }));
    }
}
