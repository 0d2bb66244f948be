use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rtlflow::frontend::HierarchyEdge;
use rtlflow::graph::DesignGraph;

fn names(n: usize) -> Vec<String> {
    // mixed case on purpose, so ordering by bytes is exercised
    (0..n)
        .map(|i| if i % 3 == 0 { format!("M{i:02}") } else { format!("m{i:02}") })
        .collect()
}

/// Random DAG as hierarchy tuples: module j may instantiate module i only when i > j.
fn dag(max_nodes: usize) -> impl Strategy<Value = (Vec<String>, Vec<HierarchyEdge>)> {
    (1..=max_nodes).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| ((j + 1)..n).map(move |i| (j, i))).collect();
        let len = pairs.len();
        (Just(n), Just(pairs), proptest::collection::vec(0u8..100, len), 0u8..100).prop_map(
            |(n, pairs, rolls, density)| {
                let ns = names(n);
                let edges = pairs
                    .iter()
                    .zip(rolls)
                    .filter(|(_, r)| *r < density)
                    .map(|(&(p, c), _)| HierarchyEdge {
                        parent: ns[p].clone(),
                        child: ns[c].clone(),
                        instance: format!("u_{c}"),
                    })
                    .collect();
                (ns, edges)
            },
        )
    })
}

fn build(nodes: &[String], edges: &[HierarchyEdge]) -> DesignGraph {
    DesignGraph::build(nodes.iter().map(String::as_str), edges).unwrap()
}

fn longest_to_sink(g: &DesignGraph, n: &str) -> usize {
    g.successors(n).iter().map(|s| 1 + longest_to_sink(g, s)).max().unwrap_or(0)
}

fn reachable(g: &DesignGraph, from: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from.to_string()];
    while let Some(n) = stack.pop() {
        for s in g.successors(&n) {
            if seen.insert(s.clone()) {
                stack.push(s.clone());
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn order_is_a_permutation_respecting_edges((nodes, edges) in dag(50)) {
        let g = build(&nodes, &edges);
        let s = g.topo_sort();
        let pos: BTreeMap<&str, usize> = s.order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        prop_assert_eq!(pos.len(), nodes.len());
        for n in &nodes {
            prop_assert!(pos.contains_key(n.as_str()));
        }
        for (u, v) in g.edges() {
            prop_assert!(pos[u.as_str()] < pos[v.as_str()], "{} must precede {}", u, v);
        }
    }

    #[test]
    fn identical_input_gives_identical_order((nodes, edges) in dag(30)) {
        let a = build(&nodes, &edges).topo_sort();
        let mut shuffled = edges.clone();
        shuffled.reverse();
        let b = build(&nodes, &shuffled).topo_sort();
        prop_assert_eq!(a.order.join(","), b.order.join(","));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn levels_are_longest_paths((nodes, edges) in dag(10)) {
        let g = build(&nodes, &edges);
        let s = g.topo_sort();
        for n in &nodes {
            prop_assert_eq!(s.levels[n] as usize, longest_to_sink(&g, n));
        }
    }

    #[test]
    fn ancestors_and_dependents_are_dual((nodes, edges) in dag(20)) {
        let g = build(&nodes, &edges);
        for m in &nodes {
            let deps = g.dependents(m).unwrap();
            prop_assert_eq!(deps.iter().cloned().collect::<BTreeSet<_>>(), reachable(&g, m));
            for n in &nodes {
                let m_anc_of_n = g.ancestors(n).unwrap().contains(m);
                prop_assert_eq!(m_anc_of_n, deps.contains(n));
            }
        }
    }
}
