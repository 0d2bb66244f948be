//! Backend replies of varying quality, with the expected parse outcome.

/// `Some(n)` means a finding with `n` sensitive sources is expected; `None` a schema error.
pub const CORPUS: &[(&str, Option<usize>)] = &[
    (r#"{"sensitive_sources":["key"],"influenced_assets":["load"],"transformations":[],"flows":[]}"#, Some(1)),
    ("```json\n{\"sensitive_sources\": [\"key\"], \"influenced_assets\": [\"load\"]}\n```", Some(1)),
    ("Here is my analysis:\n\n{\"sensitive_sources\": [\"KEY\"]}\nLet me know if you need more.", Some(1)),
    ("```\n{\"flows\": [{\"source\": \"key\", \"sink\": \"load\"}]}\n```", Some(0)),
    (r#"{"sensitive_sources": [], "influenced_assets": [], "transformations": [], "flows": []}"#, Some(0)),
    (r#"Note {not json} then {"sensitive_sources":["key","lfsr_stream"]}"#, Some(2)),
    (r#"{"transformations":["load = key ^ lfsr_stream {xor}"],"sensitive_sources":["key"]}"#, Some(1)),
    (r#"{"module":"tsc","sensitive_sources":["key"]}"#, Some(1)),
    (r#"{"sensitive_sources":["key"],"flows":[{"source":"key","sink":"load","scope":"EXTERNAL"}]}"#, Some(1)),
    (r#"{"sensitive_sources":null,"influenced_assets":["load"]}"#, Some(0)),
    ("", None),
    ("I could not find any leakage in this module.", None),
    ("```json\n{\"sensitive_sources\": [\"key\"],\n```", None),
    (r#"{"sensitive_sources": "key"}"#, None),
    (r#"{"sensitive_sources": [1, 2]}"#, None),
    (r#"{"verdict": "safe"}"#, None),
    (r#"["key", "load"]"#, None),
    (r#"{"sensitive_sources":["key"],"flows":[{"source":"key"}]}"#, None),
    (r#"{"sensitive_sources":["key"],"flows":[{"source":"key","sink":"load","scope":"sideways"}]}"#, None),
    (r#"{"sensitive_sources":["key"],"flows":"key->load"}"#, None),
    (r#"{"sensitive_sources":["key"],"flows":[{"source":"","sink":"load"}]}"#, None),
    (r#"{"module":"top","sensitive_sources":["KEY"]}"#, None),
    (r#"{"sensitive_sources":["key"],"influenced_assets":{"load":true}}"#, None),
    ("{'sensitive_sources': ['key']}", None),
    (r#"{"sensitive_sources":["key"],"flows":["key -> load"]}"#, None),
];
