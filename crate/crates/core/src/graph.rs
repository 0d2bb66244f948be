//! Module dependency DAG, topological schedule and hierarchy levels.
//!
//! An edge `(child, parent)` means the parent depends on the child it
//! instantiates, so children come first in the schedule.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::frontend::{HierarchyEdge, SourceUnit};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("cyclic module hierarchy: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown module `{0}`")]
    UnknownModule(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignGraph {
    nodes: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
    adjacency: BTreeMap<String, Vec<String>>,
    reverse_adjacency: BTreeMap<String, Vec<String>>,
    order: Vec<String>,
    position: HashMap<String, usize>,
}

/// Processing order and per-module level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub order: Vec<String>,
    pub levels: BTreeMap<String, u32>,
}

#[derive(Serialize)]
struct GraphJson<'a> {
    nodes: Vec<&'a str>,
    edges: Vec<[&'a str; 2]>,
    order: &'a [String],
    levels: BTreeMap<String, u32>,
}

impl DesignGraph {
    /// Builds the graph from every module name plus the resolved hierarchy.
    /// Repeated instantiations collapse to one edge.
    pub fn build<'a>(
        modules: impl IntoIterator<Item = &'a str>,
        hierarchy: &[HierarchyEdge],
    ) -> Result<DesignGraph, GraphError> {
        let mut nodes: BTreeSet<String> = modules.into_iter().map(str::to_string).collect();
        let mut edges = BTreeSet::new();
        for h in hierarchy {
            nodes.insert(h.parent.clone());
            nodes.insert(h.child.clone());
            edges.insert((h.child.clone(), h.parent.clone()));
        }
        let mut adjacency: BTreeMap<String, Vec<String>> =
            nodes.iter().map(|n| (n.clone(), Vec::new())).collect();
        let mut reverse_adjacency = adjacency.clone();
        for (from, to) in &edges {
            adjacency.get_mut(from).expect("node").push(to.clone());
            reverse_adjacency.get_mut(to).expect("node").push(from.clone());
        }

        // Kahn's algorithm; the min-heap gives byte-wise lexicographic tie-breaking
        let mut indegree: HashMap<&str, usize> = reverse_adjacency
            .iter()
            .map(|(n, preds)| (n.as_str(), preds.len()))
            .collect();
        let mut ready: BinaryHeap<Reverse<&str>> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| Reverse(*n))
            .collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(Reverse(n)) = ready.pop() {
            order.push(n.to_string());
            for succ in &adjacency[n] {
                let d = indegree.get_mut(succ.as_str()).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(succ.as_str()));
                }
            }
        }
        if order.len() != nodes.len() {
            let done: BTreeSet<&str> = order.iter().map(String::as_str).collect();
            return Err(GraphError::Cycle(find_cycle(&nodes, &reverse_adjacency, &done)));
        }
        let position = order.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(DesignGraph {
            nodes,
            edges,
            adjacency,
            reverse_adjacency,
            order,
            position,
        })
    }

    pub fn from_unit(unit: &SourceUnit) -> Result<DesignGraph, GraphError> {
        Self::build(unit.module_names(), &unit.resolve_hierarchy())
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    pub fn contains(&self, m: &str) -> bool {
        self.nodes.contains(m)
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains(&(from.to_string(), to.to_string()))
    }

    /// `A(m)`: modules that directly depend on `m`.
    pub fn successors(&self, m: &str) -> &[String] {
        self.adjacency.get(m).map_or(&[], Vec::as_slice)
    }

    /// Modules `m` directly depends on.
    pub fn predecessors(&self, m: &str) -> &[String] {
        self.reverse_adjacency.get(m).map_or(&[], Vec::as_slice)
    }

    pub fn adjacency(&self) -> &BTreeMap<String, Vec<String>> {
        &self.adjacency
    }

    /// Modules without dependents (the tops of the hierarchy).
    pub fn sinks(&self) -> Vec<&str> {
        self.order
            .iter()
            .filter(|n| self.adjacency[*n].is_empty())
            .map(String::as_str)
            .collect()
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    /// Topological order with ties broken by name, plus the level of every
    /// module: 0 without successors, else one more than the deepest successor.
    pub fn topo_sort(&self) -> Schedule {
        let mut levels = BTreeMap::new();
        for n in self.order.iter().rev() {
            let level = self.adjacency[n]
                .iter()
                .map(|s| levels[s] + 1)
                .max()
                .unwrap_or(0);
            levels.insert(n.clone(), level);
        }
        Schedule {
            order: self.order.clone(),
            levels,
        }
    }

    fn closure(
        &self,
        m: &str,
        next: &BTreeMap<String, Vec<String>>,
    ) -> Result<Vec<String>, GraphError> {
        if !self.contains(m) {
            return Err(GraphError::UnknownModule(m.to_string()));
        }
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = next[m].iter().map(String::as_str).collect();
        while let Some(n) = queue.pop_front() {
            if seen.insert(n) {
                queue.extend(next[n].iter().map(String::as_str));
            }
        }
        let mut out: Vec<String> = seen.into_iter().map(str::to_string).collect();
        out.sort_by_key(|n| self.position[n]);
        Ok(out)
    }

    /// Every module that transitively influences `m`, in schedule order.
    pub fn ancestors(&self, m: &str) -> Result<Vec<String>, GraphError> {
        self.closure(m, &self.reverse_adjacency)
    }

    /// Every module that transitively depends on `m`, in schedule order.
    pub fn dependents(&self, m: &str) -> Result<Vec<String>, GraphError> {
        self.closure(m, &self.adjacency)
    }

    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            nodes: self.nodes.iter().map(String::as_str).collect(),
            edges: self
                .edges
                .iter()
                .map(|(a, b)| [a.as_str(), b.as_str()])
                .collect(),
            order: &self.order,
            levels: self.topo_sort().levels,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn to_dot(&self) -> String {
        let levels = self.topo_sort().levels;
        let mut s = String::from("digraph design {\n  rankdir=BT;\n");
        for n in &self.order {
            let _ = writeln!(s, "  \"{n}\" [label=\"{n} (L={})\"];", levels[n]);
        }
        for (a, b) in &self.edges {
            let _ = writeln!(s, "  \"{a}\" -> \"{b}\";");
        }
        s.push_str("}\n");
        s
    }
}

/// Walks predecessor links among unscheduled nodes until one repeats. Every
/// unscheduled node keeps at least one unscheduled predecessor, so this ends
/// on a cycle.
fn find_cycle(
    nodes: &BTreeSet<String>,
    reverse_adjacency: &BTreeMap<String, Vec<String>>,
    done: &BTreeSet<&str>,
) -> Vec<String> {
    let start = nodes
        .iter()
        .find(|n| !done.contains(n.as_str()))
        .expect("an unscheduled node");
    let mut path: Vec<&str> = vec![start];
    loop {
        let cur = *path.last().expect("nonempty");
        let pred = reverse_adjacency[cur]
            .iter()
            .find(|p| !done.contains(p.as_str()))
            .expect("unscheduled predecessor");
        if let Some(i) = path.iter().position(|n| *n == pred) {
            let mut cycle: Vec<String> = path[i..].iter().rev().map(|s| s.to_string()).collect();
            let min = cycle
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            cycle.rotate_left(min);
            cycle.push(cycle[0].clone());
            return cycle;
        }
        path.push(pred);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(parent: &str, child: &str, inst: &str) -> HierarchyEdge {
        HierarchyEdge {
            parent: parent.into(),
            child: child.into(),
            instance: inst.into(),
        }
    }

    fn fig2() -> DesignGraph {
        DesignGraph::build(
            ["top", "TSC", "lfsr_counter"],
            &[h("top", "TSC", "u_tsc"), h("top", "lfsr_counter", "u_lfsr")],
        )
        .unwrap()
    }

    #[test]
    fn parent_depends_on_children() {
        let g = DesignGraph::build([], &[h("top", "a", "u1"), h("top", "b", "u2")]).unwrap();
        assert_eq!(g.nodes().len(), 3);
        let e: Vec<_> = g.edges().iter().cloned().collect();
        assert_eq!(e, vec![("a".into(), "top".into()), ("b".into(), "top".into())]);
    }

    #[test]
    fn fig2_schedule_and_levels() {
        let g = fig2();
        let s = g.topo_sort();
        assert_eq!(s.order, vec!["TSC", "lfsr_counter", "top"]);
        assert_eq!(s.levels["top"], 0);
        assert_eq!(s.levels["TSC"], 1);
        assert_eq!(s.levels["lfsr_counter"], 1);
        assert_eq!(g.ancestors("top").unwrap(), vec!["TSC", "lfsr_counter"]);
        assert_eq!(g.dependents("TSC").unwrap(), vec!["top"]);
        assert!(g.dependents("top").unwrap().is_empty());
        assert!(g.ancestors("TSC").unwrap().is_empty());
    }

    #[test]
    fn chain_levels_and_closures() {
        // a instantiates b, b instantiates c
        let g = DesignGraph::build([], &[h("a", "b", "u0"), h("b", "c", "u1")]).unwrap();
        let s = g.topo_sort();
        assert_eq!(s.order, vec!["c", "b", "a"]);
        assert_eq!((s.levels["a"], s.levels["b"], s.levels["c"]), (0, 1, 2));
        assert_eq!(g.ancestors("a").unwrap(), vec!["c", "b"]);
        assert_eq!(g.dependents("c").unwrap(), vec!["b", "a"]);
    }

    #[test]
    fn single_node() {
        let g = DesignGraph::build(["m"], &[]).unwrap();
        let s = g.topo_sort();
        assert_eq!(s.order, vec!["m"]);
        assert_eq!(s.levels["m"], 0);
    }

    #[test]
    fn two_cycle_is_reported() {
        let err = DesignGraph::build([], &[h("a", "b", "u0"), h("b", "a", "u1")]).unwrap_err();
        assert_eq!(err, GraphError::Cycle(vec!["a".into(), "b".into(), "a".into()]));
    }

    #[test]
    fn cycle_with_downstream_node() {
        // x -> y -> z -> x, plus a top instantiating x
        let err = DesignGraph::build(
            [],
            &[h("x", "y", "u0"), h("y", "z", "u1"), h("z", "x", "u2"), h("top", "x", "u3")],
        )
        .unwrap_err();
        let GraphError::Cycle(c) = err else { panic!() };
        assert_eq!(c.first(), c.last());
        assert_eq!(c.len(), 4);
        assert_eq!(c[0], "x");
    }

    #[test]
    fn unknown_module_query() {
        assert_eq!(
            fig2().ancestors("nope").unwrap_err(),
            GraphError::UnknownModule("nope".into())
        );
    }

    #[test]
    fn json_and_dot_output() {
        let g = fig2();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 3);
        assert_eq!(v["edges"].as_array().unwrap().len(), 2);
        assert_eq!(v["levels"]["top"], 0);
        assert_eq!(v["levels"]["TSC"], 1);
        assert_eq!(v["order"][2], "top");
        let dot = g.to_dot();
        assert!(dot.contains("label=\"top (L=0)\""));
        assert!(dot.contains("\"TSC\" -> \"top\""));
    }
}
