//! Report built directly from the taint fixpoint.

use super::{modules_connected, LeakageReport, LeakageType, Transformation};
use crate::design::Design;
use crate::frontend::{assignment_sites, Direction};
use crate::taint::{Hop, HopKind, TaintState};

fn internal(kind: HopKind) -> bool {
    matches!(kind, HopKind::Explicit | HopKind::Implicit | HopKind::BlackBox)
}

/// Consecutive hops grouped by instance path: `(path, has_internal_hop)`.
fn segments(hops: &[Hop], end_path: &str) -> Vec<(String, bool)> {
    let mut out: Vec<(String, bool)> = Vec::new();
    let mut visit = |path: &str, inner: bool| match out.last_mut() {
        Some((p, flag)) if p == path => *flag |= inner,
        _ => out.push((path.to_string(), inner)),
    };
    if hops.is_empty() {
        visit(end_path, true);
    }
    for h in hops {
        visit(&h.from.path, internal(h.kind));
        visit(&h.to.path, false);
    }
    out
}

fn module_path(design: &Design, state: &TaintState, segs: &[(String, bool)]) -> Vec<String> {
    let module = |p: &str| state.module_of(p).unwrap_or(p).to_string();
    let mut kept: Vec<String> = Vec::new();
    for (i, (path, inner)) in segs.iter().enumerate() {
        let last = i + 1 == segs.len();
        if !inner && !last {
            // pure wiring: drop it when the path stays connected without it
            let next = module(&segs[i + 1].0);
            let droppable = match kept.last() {
                None => true,
                Some(prev) => modules_connected(&design.graph, prev, &next),
            };
            if droppable {
                continue;
            }
        }
        let m = module(path);
        if kept.last() != Some(&m) {
            kept.push(m);
        }
    }
    kept
}

fn transformations(state: &TaintState, hops: &[Hop], segs: &[(String, bool)]) -> Vec<Transformation> {
    let module = |p: &str| state.module_of(p).unwrap_or(p).to_string();
    let mut out: Vec<Transformation> = Vec::new();
    for h in hops {
        let t = if internal(h.kind) {
            let here = segs.iter().position(|(p, _)| *p == h.from.path).unwrap_or(0);
            let next = segs
                .iter()
                .skip(here + 1)
                .map(|(p, _)| module(p))
                .find(|m| *m != module(&h.from.path))
                .unwrap_or_else(|| module(&h.from.path));
            Transformation::new(&module(&h.from.path), &h.from.signal, &h.to.signal, &next)
        } else {
            Transformation::new(&module(&h.from.path), &h.from.signal, &h.to.signal, &module(&h.to.path))
        };
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn logic_on_path(design: &Design, state: &TaintState, hops: &[Hop]) -> Vec<String> {
    let mut out = Vec::new();
    for h in hops.iter().filter(|h| matches!(h.kind, HopKind::Explicit | HopKind::Implicit)) {
        let Some(m) = state.module_of(&h.from.path).and_then(|n| design.unit.module(n)) else {
            continue;
        };
        for site in assignment_sites(m) {
            let feeds = site.explicit_sources.contains(&h.from.signal) || site.implicit_sources.contains(&h.from.signal);
            if site.targets.contains(&h.to.signal) && feeds {
                let text = format!("{} (in {})", site.describe(), m.name);
                if !out.contains(&text) {
                    out.push(text);
                }
            }
        }
    }
    out
}

/// Leakage verdict from taint: a leak exists iff some asset tag reaches an
/// output port of the top module. The path follows the first tainted
/// output in port order.
pub fn mock_report(design: &Design, state: &TaintState) -> LeakageReport {
    let Some(top) = design.top.as_deref().and_then(|t| design.unit.module(t)) else {
        return LeakageReport::clean("The design has no top module to analyse.");
    };
    if design.seeds.is_empty() {
        return LeakageReport::clean("No security assets were designated, so nothing can leak.");
    }
    let leaking: Vec<&str> = top
        .ports
        .iter()
        .filter(|p| matches!(p.direction, Direction::Output | Direction::Inout))
        .filter(|p| state.is_tainted(&top.name, &p.name))
        .map(|p| p.name.as_str())
        .collect();
    let Some(first) = leaking.first() else {
        return LeakageReport::clean(format!(
            "No asset reaches an output port of `{}`; taint stays inside the design.",
            top.name
        ));
    };

    let mut vulnerable: Vec<String> = Vec::new();
    for out in &leaking {
        let hops = &state.get(&top.name, out).expect("tainted").provenance;
        for h in hops.iter().filter(|h| internal(h.kind)) {
            let m = state.module_of(&h.from.path).unwrap_or(&h.from.path).to_string();
            if !vulnerable.contains(&m) {
                vulnerable.push(m);
            }
        }
    }

    let taint = state.get(&top.name, first).expect("tainted");
    let hops = &taint.provenance;
    let segs = segments(hops, &top.name);
    let path = module_path(design, state, &segs);
    let chain: Vec<String> = match hops.first() {
        Some(h) => std::iter::once(&h.from)
            .chain(hops.iter().map(|h| &h.to))
            .map(|r| format!("{}.{}", r.path, r.signal))
            .collect(),
        None => vec![format!("{}.{first}", top.name)],
    };
    let tags: Vec<&str> = taint.tags.iter().map(String::as_str).collect();
    let mut explanation = format!(
        "Asset {} reaches output `{first}` of `{}` along {}.",
        tags.iter().map(|t| format!("`{t}`")).collect::<Vec<_>>().join(", "),
        top.name,
        chain.join(" -> ")
    );
    let logic = logic_on_path(design, state, hops);
    if !logic.is_empty() {
        explanation.push_str(&format!(" Logic on the path: {}.", logic.join("; ")));
    }
    if leaking.len() > 1 {
        explanation.push_str(&format!(" Other tainted outputs: {}.", leaking[1..].join(", ")));
    }
    LeakageReport {
        vulnerability_found: true,
        vulnerable_modules: vulnerable,
        leakage_path: path,
        leakage_type: LeakageType::Confidentiality,
        explanation,
        transformations: transformations(state, hops, &segs),
    }
}
