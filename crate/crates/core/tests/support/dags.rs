//! Random module hierarchies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rtlflow::frontend::HierarchyEdge;

pub fn names(n: usize) -> Vec<String> {
    // mixed case on purpose, so ordering by bytes is exercised
    (0..n)
        .map(|i| if i % 3 == 0 { format!("M{i:02}") } else { format!("m{i:02}") })
        .collect()
}

/// Module j may instantiate module i only when i > j, so the result is acyclic.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> (Vec<String>, Vec<HierarchyEdge>) {
    let n = rng.random_range(1..=max_nodes);
    let density = rng.random_range(0.0..1.0);
    let ns = names(n);
    let mut edges = Vec::new();
    for p in 0..n {
        for c in (p + 1)..n {
            if rng.random_bool(density) {
                edges.push(HierarchyEdge {
                    parent: ns[p].clone(),
                    child: ns[c].clone(),
                    instance: format!("u_{c}"),
                });
            }
        }
    }
    (ns, edges)
}
