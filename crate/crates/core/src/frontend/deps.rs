//! Intra-module dependency edges.

use std::collections::HashSet;

use serde::Serialize;

use super::ast::{Expr, ModuleDecl, ProcBlock, Stmt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DepEdge {
    pub from_signal: String,
    pub to_signal: String,
    pub kind: FlowKind,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DepOptions {
    /// Also draw implicit edges from event-control signals (clocks, async resets).
    pub include_clocks: bool,
}

/// One assignment with the signals that feed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignSite {
    pub targets: Vec<String>,
    /// Right-hand side plus any signals selecting the written bits.
    pub explicit_sources: Vec<String>,
    /// Signals of every enclosing `if`/`case` guard.
    pub implicit_sources: Vec<String>,
    /// Event-control signals of the enclosing `always` block.
    pub event_signals: Vec<String>,
    /// Rendered assignment, e.g. `load = key ^ lfsr_stream`.
    pub text: String,
    /// Rendered guard conditions, outermost first.
    pub guards: Vec<String>,
}

impl AssignSite {
    /// The assignment text with its guards, for human-readable descriptions.
    pub fn describe(&self) -> String {
        if self.guards.is_empty() {
            self.text.clone()
        } else {
            format!("{} when {}", self.text, self.guards.join(" && "))
        }
    }
}

fn owned(v: Vec<&str>) -> Vec<String> {
    v.into_iter().map(str::to_string).collect()
}

fn push_unique(dst: &mut Vec<String>, src: impl IntoIterator<Item = String>) {
    for s in src {
        if !dst.contains(&s) {
            dst.push(s);
        }
    }
}

/// Every continuous and procedural assignment of `m`, in source order.
pub fn assignment_sites(m: &ModuleDecl) -> Vec<AssignSite> {
    let mut sites = Vec::new();
    for a in &m.assigns {
        let mut explicit = owned(a.value.signals());
        push_unique(&mut explicit, owned(a.target.lvalue_selectors()));
        sites.push(AssignSite {
            targets: owned(a.target.lvalue_targets()),
            explicit_sources: explicit,
            implicit_sources: Vec::new(),
            event_signals: Vec::new(),
            text: format!("{} = {}", a.target, a.value),
            guards: Vec::new(),
        });
    }
    for block in &m.always_blocks {
        walk_block(block, &mut sites);
    }
    sites
}

fn walk_block(block: &ProcBlock, sites: &mut Vec<AssignSite>) {
    let events = owned(block.event_signals());
    let mut guard_signals = Vec::new();
    let mut guard_text = Vec::new();
    walk_stmt(&block.body, &events, &mut guard_signals, &mut guard_text, sites);
}

fn walk_stmt(
    s: &Stmt,
    events: &[String],
    guard_signals: &mut Vec<Vec<String>>,
    guard_text: &mut Vec<String>,
    sites: &mut Vec<AssignSite>,
) {
    match s {
        Stmt::Empty => {}
        Stmt::Block(stmts) => {
            for inner in stmts {
                walk_stmt(inner, events, guard_signals, guard_text, sites);
            }
        }
        Stmt::Assign {
            target,
            value,
            blocking,
        } => {
            let mut explicit = owned(value.signals());
            push_unique(&mut explicit, owned(target.lvalue_selectors()));
            let mut implicit = Vec::new();
            for g in guard_signals.iter() {
                push_unique(&mut implicit, g.iter().cloned());
            }
            sites.push(AssignSite {
                targets: owned(target.lvalue_targets()),
                explicit_sources: explicit,
                implicit_sources: implicit,
                event_signals: events.to_vec(),
                text: format!("{target} {} {value}", if *blocking { "=" } else { "<=" }),
                guards: guard_text.clone(),
            });
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
        } => {
            // the condition taints both arms
            guard_signals.push(owned(cond.signals()));
            guard_text.push(cond.to_string());
            walk_stmt(then_branch, events, guard_signals, guard_text, sites);
            guard_text.pop();
            if let Some(e) = else_branch {
                guard_text.push(format!("!({cond})"));
                walk_stmt(e, events, guard_signals, guard_text, sites);
                guard_text.pop();
            }
            guard_signals.pop();
        }
        Stmt::Case {
            subject, items, ..
        } => {
            let mut sig = owned(subject.signals());
            for item in items {
                for l in &item.labels {
                    push_unique(&mut sig, owned(l.signals()));
                }
            }
            guard_signals.push(sig);
            for item in items {
                let text = if item.labels.is_empty() {
                    format!("{subject} matches default")
                } else {
                    let labels: Vec<String> = item.labels.iter().map(Expr::to_string).collect();
                    format!("{subject} matches {}", labels.join(", "))
                };
                guard_text.push(text);
                walk_stmt(&item.body, events, guard_signals, guard_text, sites);
                guard_text.pop();
            }
            guard_signals.pop();
        }
    }
}

/// Dependency edges of `m`: explicit edges from right-hand sides, implicit
/// edges from dominating guards. Edges are deduplicated in first-occurrence
/// order and only join declared signals.
pub fn extract_dependencies(m: &ModuleDecl, opts: DepOptions) -> Vec<DepEdge> {
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    let mut push = |from: &str, to: &str, kind: FlowKind| {
        if !m.is_declared(from) || !m.is_declared(to) {
            return;
        }
        let e = DepEdge {
            from_signal: from.to_string(),
            to_signal: to.to_string(),
            kind,
        };
        if seen.insert(e.clone()) {
            edges.push(e);
        }
    };
    for site in assignment_sites(m) {
        for t in &site.targets {
            for s in &site.explicit_sources {
                push(s, t, FlowKind::Explicit);
            }
            for s in &site.implicit_sources {
                push(s, t, FlowKind::Implicit);
            }
            if opts.include_clocks {
                for s in &site.event_signals {
                    push(s, t, FlowKind::Implicit);
                }
            }
        }
    }
    edges
}
