//! Per-module findings and tolerant parsing of backend replies.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::frontend::ModuleDecl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowScope {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flow {
    pub source: String,
    pub sink: String,
    pub scope: FlowScope,
}

/// Sources, influenced assets, transformations and flows found in one module.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModuleFinding {
    pub module: String,
    pub sensitive_sources: Vec<String>,
    pub influenced_assets: Vec<String>,
    pub transformations: Vec<String>,
    pub flows: Vec<Flow>,
}

impl ModuleFinding {
    pub fn empty(module: &str) -> Self {
        ModuleFinding {
            module: module.to_string(),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sensitive_sources.is_empty()
            && self.influenced_assets.is_empty()
            && self.transformations.is_empty()
            && self.flows.is_empty()
    }

    /// The reply body a backend is expected to produce for this finding.
    pub fn to_reply_json(&self) -> String {
        let mut map = Map::new();
        map.insert("sensitive_sources".into(), serde_json::json!(self.sensitive_sources));
        map.insert("influenced_assets".into(), serde_json::json!(self.influenced_assets));
        map.insert("transformations".into(), serde_json::json!(self.transformations));
        map.insert("flows".into(), serde_json::to_value(&self.flows).expect("flows serialize"));
        serde_json::to_string_pretty(&Value::Object(map)).expect("finding serializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("reply does not match the {schema} schema: {reason}")]
pub struct SchemaError {
    pub schema: &'static str,
    pub raw: String,
    pub reason: String,
}

impl SchemaError {
    pub(crate) fn new(schema: &'static str, raw: &str, reason: impl Into<String>) -> Self {
        SchemaError {
            schema,
            raw: raw.to_string(),
            reason: reason.into(),
        }
    }
}

/// The first balanced `{...}` in `raw` that parses as a JSON object. Braces
/// inside string literals are ignored while balancing.
pub fn extract_json_object(raw: &str) -> Option<Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(off) = raw[start..].find('{') {
        let open = start + off;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        if let Some(end) = end {
            if let Ok(Value::Object(map)) = serde_json::from_str(&raw[open..=end]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
}

pub(crate) fn string_list(
    obj: &Map<String, Value>,
    key: &str,
    schema: &'static str,
    raw: &str,
) -> Result<Vec<String>, SchemaError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::String(s) => Ok(s.trim().to_string()),
                _ => Err(SchemaError::new(schema, raw, format!("`{key}[{i}]` is not a string"))),
            })
            .collect(),
        Some(_) => Err(SchemaError::new(schema, raw, format!("`{key}` is not a list"))),
    }
}

fn flow_list(obj: &Map<String, Value>, raw: &str) -> Result<Vec<Flow>, SchemaError> {
    let err = |reason: String| SchemaError::new("finding", raw, reason);
    let items = match obj.get("flows") {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(items)) => items,
        Some(_) => return Err(err("`flows` is not a list".into())),
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let Value::Object(f) = item else {
            return Err(err(format!("`flows[{i}]` is not an object")));
        };
        let field = |name: &str| -> Result<String, SchemaError> {
            match f.get(name) {
                Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
                Some(Value::String(_)) => Err(err(format!("`flows[{i}].{name}` is empty"))),
                _ => Err(err(format!("`flows[{i}].{name}` is missing or not a string"))),
            }
        };
        let source = field("source")?;
        let sink = field("sink")?;
        let scope = match f.get("scope") {
            None | Some(Value::Null) => FlowScope::Internal,
            Some(Value::String(s)) if s.eq_ignore_ascii_case("internal") => FlowScope::Internal,
            Some(Value::String(s)) if s.eq_ignore_ascii_case("external") => FlowScope::External,
            Some(other) => return Err(err(format!("`flows[{i}].scope` must be internal or external, got {other}"))),
        };
        out.push(Flow { source, sink, scope });
    }
    Ok(out)
}

/// Parses a backend reply into a finding for `module`.
///
/// Prose and code fences around the object are ignored and missing lists
/// default to empty. With `decl` given, names that match a declared signal
/// case-insensitively are rewritten to the declared spelling.
pub fn parse_finding(raw: &str, module: &str, decl: Option<&ModuleDecl>) -> Result<ModuleFinding, SchemaError> {
    let obj = extract_json_object(raw).ok_or_else(|| SchemaError::new("finding", raw, "no JSON object found"))?;
    const KEYS: [&str; 4] = ["sensitive_sources", "influenced_assets", "transformations", "flows"];
    if !KEYS.iter().any(|k| obj.contains_key(*k)) {
        return Err(SchemaError::new(
            "finding",
            raw,
            "object has none of sensitive_sources, influenced_assets, transformations, flows",
        ));
    }
    if let Some(Value::String(named)) = obj.get("module") {
        if !named.eq_ignore_ascii_case(module) {
            return Err(SchemaError::new(
                "finding",
                raw,
                format!("reply describes module `{named}`, expected `{module}`"),
            ));
        }
    }
    let normalize = |s: String| -> String {
        match decl.and_then(|d| d.resolve_signal(&s)) {
            Some(declared) => declared.to_string(),
            None => s,
        }
    };
    let mut finding = ModuleFinding {
        module: module.to_string(),
        sensitive_sources: string_list(&obj, "sensitive_sources", "finding", raw)?,
        influenced_assets: string_list(&obj, "influenced_assets", "finding", raw)?,
        transformations: string_list(&obj, "transformations", "finding", raw)?,
        flows: flow_list(&obj, raw)?,
    };
    finding.sensitive_sources = finding.sensitive_sources.into_iter().map(normalize).collect();
    finding.influenced_assets = finding.influenced_assets.into_iter().map(normalize).collect();
    for f in &mut finding.flows {
        f.source = normalize(std::mem::take(&mut f.source));
        f.sink = normalize(std::mem::take(&mut f.sink));
    }
    Ok(finding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    const TSC_REPLY: &str = r#"{"sensitive_sources":["key"],"influenced_assets":["load"],"transformations":["load = key ^ lfsr_stream"],"flows":[{"source":"key","sink":"load","scope":"internal"}]}"#;

    #[test]
    fn plain_object() {
        let f = parse_finding(TSC_REPLY, "TSC", None).unwrap();
        assert_eq!(f.sensitive_sources, vec!["key"]);
        assert_eq!(f.influenced_assets, vec!["load"]);
        assert_eq!(
            f.flows,
            vec![Flow {
                source: "key".into(),
                sink: "load".into(),
                scope: FlowScope::Internal
            }]
        );
    }

    #[test]
    fn fenced_with_prose() {
        let wrapped = format!("Here is my analysis.\n```json\n{TSC_REPLY}\n```\nLet me know if you need more.");
        assert_eq!(
            parse_finding(&wrapped, "TSC", None).unwrap(),
            parse_finding(TSC_REPLY, "TSC", None).unwrap()
        );
    }

    #[test]
    fn refusal_is_schema_error() {
        let err = parse_finding("I cannot analyze this.", "TSC", None).unwrap_err();
        assert_eq!(err.raw, "I cannot analyze this.");
    }

    #[test]
    fn braces_inside_strings_and_leading_junk() {
        let raw = r#"Sets like {a, b} are tainted: {"transformations":["x = {a, b}"], "sensitive_sources": ["a"]}"#;
        let f = parse_finding(raw, "m", None).unwrap();
        assert_eq!(f.transformations, vec!["x = {a, b}"]);
        assert!(f.flows.is_empty());
    }

    #[test]
    fn wrong_types_are_rejected() {
        assert!(parse_finding(r#"{"sensitive_sources": "key"}"#, "m", None).is_err());
        assert!(parse_finding(r#"{"flows": [{"source": "a"}]}"#, "m", None).is_err());
        assert!(parse_finding(r#"{"flows": [{"source": "a", "sink": "b", "scope": "sideways"}]}"#, "m", None).is_err());
        assert!(parse_finding(r#"{"answer": 42}"#, "m", None).is_err());
    }

    #[test]
    fn names_take_declared_case() {
        let m = parse_source("module top(input [7:0] KEY, output OUT); endmodule", "t.v")
            .unwrap()
            .modules
            .remove(0);
        let f = parse_finding(
            r#"{"sensitive_sources":["key"],"flows":[{"source":"key","sink":"out","scope":"external"}]}"#,
            "top",
            Some(&m),
        )
        .unwrap();
        assert_eq!(f.sensitive_sources, vec!["KEY"]);
        assert_eq!(f.flows[0].sink, "OUT");
    }

    #[test]
    fn reply_json_round_trips() {
        let f = parse_finding(TSC_REPLY, "TSC", None).unwrap();
        assert_eq!(parse_finding(&f.to_reply_json(), "TSC", None).unwrap(), f);
    }
}
