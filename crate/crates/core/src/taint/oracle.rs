//! Exact influence by exhaustive simulation, for small combinational modules.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::eval::Evaluator;
use crate::frontend::{Direction, ModuleDecl};

pub const ORACLE_MAX_INPUT_BITS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("module `{module}` is out of oracle scope: {reason}")]
    ScopeExceeded { module: String, reason: String },
}

/// Signals whose value differs between some two input assignments that
/// differ only in the bits of `seed`.
pub fn influence_oracle(m: &ModuleDecl, seed: &str) -> Result<BTreeSet<String>, OracleError> {
    Ok(influenced_bits(m, seed)?.into_keys().collect())
}

/// Like [`influence_oracle`], with the mask of influenced bits per signal.
pub fn influenced_bits(m: &ModuleDecl, seed: &str) -> Result<BTreeMap<String, u128>, OracleError> {
    let scope = |reason: String| OracleError::ScopeExceeded {
        module: m.name.clone(),
        reason,
    };
    if m.always_blocks.iter().any(|b| b.is_sequential()) {
        return Err(scope("contains clocked always blocks".into()));
    }
    if !m.instances.is_empty() {
        return Err(scope("contains instances".into()));
    }
    if m.ports.iter().any(|p| p.direction == Direction::Inout) {
        return Err(scope("has inout ports".into()));
    }
    let seed_port = m
        .port(seed)
        .filter(|p| p.direction == Direction::Input)
        .ok_or_else(|| scope(format!("`{seed}` is not an input port")))?;
    let total: u32 = m.inputs().map(|p| p.width()).sum();
    if total > ORACLE_MAX_INPUT_BITS {
        return Err(scope(format!(
            "{total} input bits exceed the limit of {ORACLE_MAX_INPUT_BITS}"
        )));
    }
    let seed_w = seed_port.width();
    let others: Vec<(&str, u32)> = m
        .inputs()
        .filter(|p| p.name != seed)
        .map(|p| (p.name.as_str(), p.width()))
        .collect();
    let other_bits: u32 = others.iter().map(|(_, w)| w).sum();
    let observed: Vec<&str> = m.signal_names().filter(|s| *s != seed).collect();

    let mut diff = vec![0u128; observed.len()];
    let mut ev = Evaluator::new(m);
    for rest in 0u64..(1u64 << other_bits) {
        let mut baseline: Option<Vec<u128>> = None;
        for sv in 0u64..(1u64 << seed_w) {
            for v in ev.values.values_mut() {
                *v = 0;
            }
            let mut shift = 0;
            for (name, w) in &others {
                ev.values.insert(*name, ((rest >> shift) & ((1u64 << w) - 1)) as u128);
                shift += w;
            }
            ev.values.insert(seed_port.name.as_str(), sv as u128);
            if !ev.settle() {
                return Err(scope("combinational loop does not settle".into()));
            }
            let snapshot: Vec<u128> = observed.iter().map(|s| ev.values[s]).collect();
            match &baseline {
                None => baseline = Some(snapshot),
                Some(base) => {
                    for (i, d) in diff.iter_mut().enumerate() {
                        *d |= base[i] ^ snapshot[i];
                    }
                }
            }
        }
    }
    Ok(observed
        .iter()
        .zip(diff)
        .filter(|(_, d)| *d != 0)
        .map(|(s, d)| (s.to_string(), d))
        .collect())
}
