//! Deterministic net-level information flow tracking.

mod eval;
mod oracle;
mod propagate;

use crate::engine::{Flow, FlowScope, ModuleFinding};
use crate::frontend::{assignment_sites, extract_dependencies, DepOptions, Direction, PortRef, SourceUnit};

pub use oracle::{influence_oracle, influenced_bits, OracleError, ORACLE_MAX_INPUT_BITS};
pub use propagate::{propagate, AssetSeed, Hop, HopKind, SignalRef, SignalTaint, TaintEngine, TaintError, TaintState};

fn push_unique<T: PartialEq>(v: &mut Vec<T>, item: T) {
    if !v.contains(&item) {
        v.push(item);
    }
}

/// Summarises the taint of one module as a finding.
///
/// Sources are tainted inputs and seeds, assets are tainted outputs,
/// transformations are assignments that move taint, and flows are the
/// tainted dependency edges (internal) and instance connections (external).
pub fn finding_from_taint(module: &str, state: &TaintState, unit: &SourceUnit) -> ModuleFinding {
    let mut f = ModuleFinding::empty(module);
    let Some(m) = unit.module(module) else { return f };
    let tainted = state.tainted_in_module(module);
    if tainted.is_empty() {
        return f;
    }
    for p in &m.ports {
        if !tainted.contains(p.name.as_str()) {
            continue;
        }
        match p.direction {
            Direction::Input => push_unique(&mut f.sensitive_sources, p.name.clone()),
            Direction::Output => push_unique(&mut f.influenced_assets, p.name.clone()),
            Direction::Inout => {
                push_unique(&mut f.sensitive_sources, p.name.clone());
                push_unique(&mut f.influenced_assets, p.name.clone());
            }
        }
    }
    for s in state.seeds.iter().filter(|s| s.module == module) {
        push_unique(&mut f.sensitive_sources, s.signal.clone());
    }
    for site in assignment_sites(m) {
        let moves = site.targets.iter().any(|t| tainted.contains(t.as_str()))
            && site
                .explicit_sources
                .iter()
                .chain(&site.implicit_sources)
                .any(|s| tainted.contains(s.as_str()));
        if moves {
            push_unique(&mut f.transformations, site.describe());
        }
    }
    for e in extract_dependencies(m, DepOptions::default()) {
        if tainted.contains(e.from_signal.as_str()) {
            push_unique(
                &mut f.flows,
                Flow {
                    source: e.from_signal,
                    sink: e.to_signal,
                    scope: FlowScope::Internal,
                },
            );
        }
    }
    let paths: Vec<&str> = state.paths_of(module).collect();
    for inst in &m.instances {
        let target = unit.module(&inst.module_name);
        for conn in &inst.connections {
            let Some(actual) = &conn.actual else { continue };
            let formal = match &conn.port {
                PortRef::Named(n) => n.clone(),
                PortRef::Positional(i) => format!("#{i}"),
            };
            let qualified = format!("{}.{formal}", inst.instance_name);
            let dir = target.and_then(|t| t.port(&formal)).map(|p| p.direction);
            for sig in actual.signals() {
                let parent_tainted = paths.iter().any(|p| state.is_tainted(p, sig));
                let child_tainted = paths
                    .iter()
                    .any(|p| state.is_tainted(&format!("{p}.{}", inst.instance_name), &formal));
                let inward = matches!(dir, Some(Direction::Input | Direction::Inout) | None) && parent_tainted;
                let outward = matches!(dir, Some(Direction::Output | Direction::Inout)) && child_tainted;
                if inward {
                    push_unique(
                        &mut f.flows,
                        Flow {
                            source: sig.to_string(),
                            sink: qualified.clone(),
                            scope: FlowScope::External,
                        },
                    );
                }
                if outward {
                    push_unique(
                        &mut f.flows,
                        Flow {
                            source: qualified.clone(),
                            sink: sig.to_string(),
                            scope: FlowScope::External,
                        },
                    );
                }
            }
        }
    }
    f
}
