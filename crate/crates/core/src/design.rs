//! A parsed design ready for analysis: unit restricted to its top, graph,
//! schedule and resolved asset seeds.

use thiserror::Error;

use crate::frontend::{DepOptions, FrontendError, SourceUnit};
use crate::graph::{DesignGraph, GraphError, Schedule};
use crate::taint::{AssetSeed, TaintError};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("top module `{0}` is not defined")]
    UnknownTop(String),
    #[error("cannot infer the top module, candidates: {}; pass --top", .0.join(", "))]
    AmbiguousTop(Vec<String>),
    #[error(transparent)]
    Seed(#[from] TaintError),
}

#[derive(Debug, Clone)]
pub struct Design {
    pub unit: SourceUnit,
    pub graph: DesignGraph,
    pub schedule: Schedule,
    pub top: Option<String>,
    pub seeds: Vec<AssetSeed>,
    pub deps: DepOptions,
}

impl Design {
    /// Restricts `unit` to `top` (or the only uninstantiated module) and
    /// resolves each seed to a declared signal, falling back to a
    /// case-insensitive match.
    pub fn new(
        unit: SourceUnit,
        top: Option<&str>,
        seeds: &[AssetSeed],
        deps: DepOptions,
    ) -> Result<Design, DesignError> {
        DesignGraph::from_unit(&unit)?;
        let top = match top {
            Some(t) => Some(t.to_string()),
            None => {
                let roots = unit.uninstantiated();
                match roots.as_slice() {
                    [] => None,
                    [one] => Some(one.to_string()),
                    many => return Err(DesignError::AmbiguousTop(many.iter().map(|s| s.to_string()).collect())),
                }
            }
        };
        let unit = match &top {
            Some(t) => unit.restrict_to(t).ok_or_else(|| DesignError::UnknownTop(t.clone()))?,
            None => unit,
        };
        let graph = DesignGraph::from_unit(&unit)?;
        let schedule = graph.topo_sort();
        let seeds = seeds
            .iter()
            .map(|s| resolve_seed(&unit, s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Design {
            unit,
            graph,
            schedule,
            top,
            seeds,
            deps,
        })
    }

    pub fn top_name(&self) -> &str {
        self.top.as_deref().unwrap_or("")
    }
}

fn resolve_seed(unit: &SourceUnit, seed: &AssetSeed) -> Result<AssetSeed, TaintError> {
    let unknown = |reason: String| TaintError::UnknownSeed {
        module: seed.module.clone(),
        signal: seed.signal.clone(),
        reason,
    };
    let m = unit
        .module(&seed.module)
        .ok_or_else(|| unknown(format!("no module `{}` in the analysed design", seed.module)))?;
    let signal = m
        .resolve_signal(&seed.signal)
        .ok_or_else(|| unknown(format!("module `{}` declares no signal `{}`", m.name, seed.signal)))?;
    Ok(AssetSeed::new(&m.name, signal, &seed.label))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "module leaf(input a, output b); assign b = a; endmodule\n\
                       module top(input KEY, output y); leaf u(.a(KEY), .b(y)); endmodule\n\
                       module spare(input x); endmodule";

    #[test]
    fn explicit_top_restricts_unit() {
        let unit = SourceUnit::from_text("t.v", SRC).unwrap();
        let d = Design::new(unit, Some("top"), &[AssetSeed::new("top", "key", "key")], DepOptions::default()).unwrap();
        assert_eq!(d.schedule.order, vec!["leaf", "top"]);
        assert_eq!(d.seeds[0].signal, "KEY");
    }

    #[test]
    fn ambiguous_top() {
        let unit = SourceUnit::from_text("t.v", SRC).unwrap();
        let err = Design::new(unit, None, &[], DepOptions::default()).unwrap_err();
        assert!(matches!(err, DesignError::AmbiguousTop(ref c) if c == &["top", "spare"]), "{err}");
    }

    #[test]
    fn seed_outside_top_is_rejected() {
        let unit = SourceUnit::from_text("t.v", SRC).unwrap();
        let err = Design::new(unit, Some("top"), &[AssetSeed::new("spare", "x", "x")], DepOptions::default());
        assert!(matches!(err, Err(DesignError::Seed(_))));
    }
}
