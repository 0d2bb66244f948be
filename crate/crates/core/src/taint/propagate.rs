//! Net-level taint propagation over the elaborated instance tree.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{extract_dependencies, DepOptions, Direction, FlowKind, SourceUnit};
use crate::graph::DesignGraph;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssetSeed {
    pub module: String,
    pub signal: String,
    pub label: String,
}

impl AssetSeed {
    pub fn new(module: &str, signal: &str, label: &str) -> Self {
        AssetSeed {
            module: module.into(),
            signal: signal.into(),
            label: label.into(),
        }
    }

    /// Parses `signal@module` or `label=signal@module`.
    pub fn parse(text: &str) -> Option<AssetSeed> {
        let (label, rest) = match text.split_once('=') {
            Some((l, r)) => (Some(l.trim()), r),
            None => (None, text),
        };
        let (signal, module) = rest.split_once('@')?;
        let (signal, module) = (signal.trim(), module.trim());
        if signal.is_empty() || module.is_empty() || label.is_some_and(str::is_empty) {
            return None;
        }
        Some(AssetSeed::new(module, signal, label.unwrap_or(signal)))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaintError {
    #[error("unknown seed `{signal}@{module}`: {reason}")]
    UnknownSeed {
        module: String,
        signal: String,
        reason: String,
    },
}

/// A signal inside one elaborated instance, e.g. `top.u_tsc` / `load`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignalRef {
    pub path: String,
    pub signal: String,
}

impl std::fmt::Display for SignalRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.path, self.signal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopKind {
    Explicit,
    Implicit,
    /// Parent actual into child input port.
    PortIn,
    /// Child output port into parent actual.
    PortOut,
    /// Conservative flow between signals wired to an unresolved module.
    BlackBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub from: SignalRef,
    pub to: SignalRef,
    pub kind: HopKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignalTaint {
    pub tags: BTreeSet<String>,
    /// Hops from a seed to this signal along the path that first tainted it.
    pub provenance: Vec<Hop>,
}

/// Tags per instance signal plus the seeds that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaintState {
    pub seeds: Vec<AssetSeed>,
    /// Elaborated instance paths and their module names.
    pub instances: BTreeMap<String, String>,
    pub signals: BTreeMap<SignalRef, SignalTaint>,
}

impl TaintState {
    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn get(&self, path: &str, signal: &str) -> Option<&SignalTaint> {
        self.signals.get(&SignalRef {
            path: path.into(),
            signal: signal.into(),
        })
    }

    pub fn is_tainted(&self, path: &str, signal: &str) -> bool {
        self.get(path, signal).is_some_and(|t| !t.tags.is_empty())
    }

    pub fn paths_of<'a>(&'a self, module: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.instances
            .iter()
            .filter(move |(_, m)| m.as_str() == module)
            .map(|(p, _)| p.as_str())
    }

    /// Signals of `module` tainted in at least one of its instances.
    pub fn tainted_in_module(&self, module: &str) -> BTreeSet<&str> {
        let paths: BTreeSet<&str> = self.paths_of(module).collect();
        self.signals
            .iter()
            .filter(|(r, t)| paths.contains(r.path.as_str()) && !t.tags.is_empty())
            .map(|(r, _)| r.signal.as_str())
            .collect()
    }

    pub fn module_of(&self, path: &str) -> Option<&str> {
        self.instances.get(path).map(String::as_str)
    }

    /// `{module: {signal: [tags]}}` merged over instances, optionally with
    /// provenance chains per instance signal.
    pub fn to_json(&self, with_provenance: bool) -> String {
        let mut modules: BTreeMap<&str, BTreeMap<&str, BTreeSet<&str>>> = BTreeMap::new();
        for m in self.instances.values() {
            modules.entry(m.as_str()).or_default();
        }
        for (r, t) in &self.signals {
            let Some(m) = self.module_of(&r.path) else { continue };
            modules
                .entry(m)
                .or_default()
                .entry(r.signal.as_str())
                .or_default()
                .extend(t.tags.iter().map(String::as_str));
        }
        let mut out = serde_json::Map::new();
        out.insert("seeds".into(), serde_json::to_value(&self.seeds).expect("seeds serialize"));
        out.insert("modules".into(), serde_json::to_value(&modules).expect("modules serialize"));
        if with_provenance {
            let chains: BTreeMap<String, Vec<String>> = self
                .signals
                .iter()
                .map(|(r, t)| (r.to_string(), chain_text(r, &t.provenance)))
                .collect();
            out.insert("provenance".into(), serde_json::to_value(chains).expect("chains serialize"));
        }
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(out)).expect("json");
        text.push('\n');
        text
    }
}

fn chain_text(end: &SignalRef, hops: &[Hop]) -> Vec<String> {
    let mut out: Vec<String> = hops.iter().map(|h| h.from.to_string()).collect();
    out.push(end.to_string());
    out
}

/// Signal-level flow graph of one elaborated design.
pub struct TaintEngine {
    instances: BTreeMap<String, String>,
    nodes: Vec<SignalRef>,
    index: HashMap<SignalRef, usize>,
    out: Vec<Vec<(usize, HopKind)>>,
}

impl TaintEngine {
    /// Elaborates every root of the hierarchy (`unit.top` when set, else all
    /// modules without dependents) and wires signal-level flow edges.
    pub fn new(unit: &SourceUnit, g: &DesignGraph, opts: DepOptions) -> TaintEngine {
        let mut engine = TaintEngine {
            instances: BTreeMap::new(),
            nodes: Vec::new(),
            index: HashMap::new(),
            out: Vec::new(),
        };
        let roots: Vec<String> = match &unit.top {
            Some(t) => vec![t.clone()],
            None => g.sinks().into_iter().map(str::to_string).collect(),
        };
        let deps: HashMap<&str, _> = unit
            .modules
            .iter()
            .map(|m| (m.name.as_str(), extract_dependencies(m, opts)))
            .collect();
        let mut stack: Vec<(String, String)> = roots.into_iter().rev().map(|r| (r.clone(), r)).collect();
        while let Some((path, module)) = stack.pop() {
            let Some(m) = unit.module(&module) else { continue };
            engine.instances.insert(path.clone(), module.clone());
            for s in m.signal_names() {
                engine.node(&path, s);
            }
            for e in &deps[module.as_str()] {
                let kind = match e.kind {
                    FlowKind::Explicit => HopKind::Explicit,
                    FlowKind::Implicit => HopKind::Implicit,
                };
                engine.link(&path, &e.from_signal, &path, &e.to_signal, kind);
            }
            let mut children = Vec::new();
            for inst in &m.instances {
                let child_path = format!("{path}.{}", inst.instance_name);
                let Some(target) = unit.module(&inst.module_name) else {
                    let wired: Vec<&str> = {
                        let mut v: Vec<&str> = inst
                            .connections
                            .iter()
                            .filter_map(|c| c.actual.as_ref())
                            .flat_map(|a| a.signals())
                            .filter(|s| m.is_declared(s))
                            .collect();
                        v.dedup();
                        v
                    };
                    for a in &wired {
                        for b in &wired {
                            if a != b {
                                engine.link(&path, a, &path, b, HopKind::BlackBox);
                            }
                        }
                    }
                    continue;
                };
                for s in target.signal_names() {
                    engine.node(&child_path, s);
                }
                for conn in &inst.connections {
                    let (crate::frontend::PortRef::Named(formal), Some(actual)) = (&conn.port, &conn.actual) else {
                        continue;
                    };
                    let Some(port) = target.port(formal) else { continue };
                    let actuals: Vec<&str> = actual.signals().into_iter().filter(|s| m.is_declared(s)).collect();
                    if matches!(port.direction, Direction::Input | Direction::Inout) {
                        for a in &actuals {
                            engine.link(&path, a, &child_path, formal, HopKind::PortIn);
                        }
                    }
                    if matches!(port.direction, Direction::Output | Direction::Inout) {
                        let written = if actual.is_lvalue() {
                            actual.lvalue_targets()
                        } else {
                            actuals.clone()
                        };
                        for a in written {
                            engine.link(&child_path, formal, &path, a, HopKind::PortOut);
                        }
                    }
                }
                children.push((child_path, inst.module_name.clone()));
            }
            stack.extend(children.into_iter().rev());
        }
        engine
    }

    fn node(&mut self, path: &str, signal: &str) -> usize {
        let r = SignalRef {
            path: path.to_string(),
            signal: signal.to_string(),
        };
        if let Some(&i) = self.index.get(&r) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(r.clone());
        self.index.insert(r, i);
        self.out.push(Vec::new());
        i
    }

    fn link(&mut self, from_path: &str, from: &str, to_path: &str, to: &str, kind: HopKind) {
        let a = self.node(from_path, from);
        let b = self.node(to_path, to);
        if !self.out[a].iter().any(|(t, _)| *t == b) {
            self.out[a].push((b, kind));
        }
    }

    pub fn instances(&self) -> &BTreeMap<String, String> {
        &self.instances
    }

    fn resolve_seed(&self, unit: &SourceUnit, seed: &AssetSeed) -> Result<AssetSeed, TaintError> {
        let unknown = |reason: String| TaintError::UnknownSeed {
            module: seed.module.clone(),
            signal: seed.signal.clone(),
            reason,
        };
        let m = unit
            .module(&seed.module)
            .ok_or_else(|| unknown(format!("no module `{}`", seed.module)))?;
        if !self.instances.values().any(|n| n == &m.name) {
            return Err(unknown(format!("module `{}` is not instantiated under the analysed top", m.name)));
        }
        let signal = m
            .resolve_signal(&seed.signal)
            .ok_or_else(|| unknown(format!("module `{}` declares no signal `{}`", m.name, seed.signal)))?;
        Ok(AssetSeed::new(&m.name, signal, &seed.label))
    }

    /// Least fixpoint from the given seeds.
    pub fn propagate(&self, unit: &SourceUnit, seeds: &[AssetSeed]) -> Result<TaintState, TaintError> {
        let resolved = seeds
            .iter()
            .map(|s| self.resolve_seed(unit, s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut state = TaintState {
            seeds: resolved,
            instances: self.instances.clone(),
            signals: BTreeMap::new(),
        };
        let mut queue = VecDeque::new();
        for seed in &state.seeds.clone() {
            for (path, module) in &self.instances {
                if module != &seed.module {
                    continue;
                }
                let r = SignalRef {
                    path: path.clone(),
                    signal: seed.signal.clone(),
                };
                let entry = state.signals.entry(r.clone()).or_default();
                if entry.tags.insert(seed.label.clone()) {
                    queue.push_back(self.index[&r]);
                }
            }
        }
        self.run(&mut state, queue);
        Ok(state)
    }

    /// Continues propagation from an existing state. A fixpoint is returned unchanged.
    pub fn resume(&self, mut state: TaintState) -> TaintState {
        let queue = state
            .signals
            .keys()
            .filter_map(|r| self.index.get(r).copied())
            .collect();
        self.run(&mut state, queue);
        state
    }

    fn run(&self, state: &mut TaintState, mut queue: VecDeque<usize>) {
        while let Some(n) = queue.pop_front() {
            let src = &self.nodes[n];
            let Some(src_taint) = state.signals.get(src).cloned() else { continue };
            for &(t, kind) in &self.out[n] {
                let dst = &self.nodes[t];
                let entry = state.signals.entry(dst.clone()).or_default();
                let fresh = entry.tags.is_empty();
                let before = entry.tags.len();
                entry.tags.extend(src_taint.tags.iter().cloned());
                if entry.tags.len() == before {
                    continue;
                }
                if fresh {
                    entry.provenance = src_taint.provenance.clone();
                    entry.provenance.push(Hop {
                        from: src.clone(),
                        to: dst.clone(),
                        kind,
                    });
                }
                queue.push_back(t);
            }
        }
    }
}

/// One-shot propagation with default dependency options.
pub fn propagate(unit: &SourceUnit, g: &DesignGraph, seeds: &[AssetSeed]) -> Result<TaintState, TaintError> {
    TaintEngine::new(unit, g, DepOptions::default()).propagate(unit, seeds)
}
