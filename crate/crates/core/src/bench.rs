//! Labeled benchmark sweeps and the success / false-positive metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::design::Design;
use crate::engine::{AnalysisContext, BackendConfig, PromptTemplates};
use crate::frontend::{DepOptions, SourceUnit};
use crate::report::{analyze, Mode};
use crate::taint::AssetSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Leakage,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkEntry {
    pub name: String,
    pub sources: Vec<PathBuf>,
    pub top: Option<String>,
    pub assets: Vec<AssetSeed>,
    pub label: Label,
    pub expected_path: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BenchmarkManifest {
    pub entries: Vec<BenchmarkEntry>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest: {0}")]
    Shape(String),
    #[error("manifest entry {index}, field `{field}`: {message}")]
    Entry {
        index: usize,
        field: &'static str,
        message: String,
    },
}

fn entry_err(index: usize, field: &'static str, message: impl Into<String>) -> ManifestError {
    ManifestError::Entry {
        index,
        field,
        message: message.into(),
    }
}

fn str_field<'v>(obj: &'v serde_json::Map<String, Value>, index: usize, field: &'static str) -> Result<&'v str, ManifestError> {
    match obj.get(field) {
        None => Err(entry_err(index, field, "missing")),
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
        Some(_) => Err(entry_err(index, field, "expected a non-empty string")),
    }
}

fn str_list(v: &Value, index: usize, field: &'static str) -> Result<Vec<String>, ManifestError> {
    let items = v.as_array().ok_or_else(|| entry_err(index, field, "expected a list of strings"))?;
    items
        .iter()
        .map(|i| match i {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            _ => Err(entry_err(index, field, "expected a list of strings")),
        })
        .collect()
}

fn parse_entry(index: usize, v: &Value, base: &Path) -> Result<BenchmarkEntry, ManifestError> {
    let obj = v.as_object().ok_or_else(|| entry_err(index, "benchmarks", "entry is not an object"))?;
    let name = str_field(obj, index, "name")?.to_string();

    let sources = str_list(obj.get("sources").ok_or_else(|| entry_err(index, "sources", "missing"))?, index, "sources")?;
    if sources.is_empty() {
        return Err(entry_err(index, "sources", "at least one source file is required"));
    }
    let mut paths = Vec::new();
    for s in sources {
        let p = base.join(&s);
        if !p.is_file() {
            return Err(entry_err(index, "sources", format!("{} does not exist", p.display())));
        }
        paths.push(p);
    }

    let top = match obj.get("top") {
        None | Some(Value::Null) => None,
        Some(_) => Some(str_field(obj, index, "top")?.to_string()),
    };

    let mut assets = Vec::new();
    if let Some(a) = obj.get("assets") {
        let list = a.as_array().ok_or_else(|| entry_err(index, "assets", "expected a list"))?;
        for item in list {
            let o = item
                .as_object()
                .ok_or_else(|| entry_err(index, "assets", "each asset must be an object"))?;
            let get = |k: &str| o.get(k).and_then(Value::as_str).filter(|s| !s.is_empty());
            let (Some(module), Some(signal)) = (get("module"), get("signal")) else {
                return Err(entry_err(index, "assets", "each asset needs `module` and `signal`"));
            };
            assets.push(AssetSeed::new(module, signal, get("label").unwrap_or(signal)));
        }
    }

    let label = match obj.get("label") {
        None => return Err(entry_err(index, "label", "missing")),
        Some(v) => serde_json::from_value::<Label>(v.clone())
            .map_err(|_| entry_err(index, "label", format!("expected \"leakage\" or \"clean\", got {v}")))?,
    };

    let expected_path = match obj.get("expected_path") {
        None | Some(Value::Null) => None,
        Some(v) => Some(str_list(v, index, "expected_path")?),
    };

    Ok(BenchmarkEntry {
        name,
        sources: paths,
        top,
        assets,
        label,
        expected_path,
    })
}

/// Reads and validates a manifest; source paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<BenchmarkManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let root: Value = serde_json::from_str(&text).map_err(|source| ManifestError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let list = root
        .get("benchmarks")
        .and_then(Value::as_array)
        .ok_or_else(|| ManifestError::Shape("expected an object with a `benchmarks` list".into()))?;
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for (i, v) in list.iter().enumerate() {
        let e = parse_entry(i, v, base)?;
        if !seen.insert(e.name.clone()) {
            return Err(entry_err(i, "name", format!("duplicate name `{}`", e.name)));
        }
        entries.push(e);
    }
    Ok(BenchmarkManifest { entries })
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("the manifest has no benchmarks")]
    EmptyBenchmark,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Everything a sweep needs besides the manifest.
#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub backend: BackendConfig,
    pub templates: PromptTemplates,
    pub context: AnalysisContext,
    pub deps: DepOptions,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryResult {
    pub name: String,
    pub label: Label,
    /// Reported verdict; `None` when the run failed.
    pub predicted: Option<bool>,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_path: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_agrees: Option<bool>,
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub mode: Mode,
    pub approach: String,
    pub total: usize,
    pub correct: usize,
    pub success_rate: f64,
    pub negatives: usize,
    pub false_positives: usize,
    pub false_positive_rate: f64,
    pub paths_checked: usize,
    pub paths_agreeing: usize,
    pub entries: Vec<EntryResult>,
}

impl Metrics {
    /// Aggregates per-entry results; results stay in the given order.
    pub fn from_entries(mode: Mode, entries: Vec<EntryResult>) -> Metrics {
        let total = entries.len();
        let correct = entries.iter().filter(|e| e.correct).count();
        let negatives = entries.iter().filter(|e| e.label == Label::Clean).count();
        let false_positives = entries
            .iter()
            .filter(|e| e.label == Label::Clean && e.predicted == Some(true))
            .count();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Metrics {
            mode,
            approach: mode.label().to_string(),
            total,
            correct,
            success_rate: ratio(correct, total),
            negatives,
            false_positives,
            false_positive_rate: ratio(false_positives, negatives),
            paths_checked: entries.iter().filter(|e| e.path_agrees.is_some()).count(),
            paths_agreeing: entries.iter().filter(|e| e.path_agrees == Some(true)).count(),
            entries,
        }
    }

    pub fn elapsed(&self) -> Duration {
        self.entries.iter().map(|e| e.elapsed).sum()
    }
}

/// True when `expected` occurs in `actual` in order, possibly with gaps.
pub fn is_ordered_subsequence(expected: &[String], actual: &[String]) -> bool {
    let mut it = actual.iter();
    expected.iter().all(|e| it.any(|a| a == e))
}

fn run_entry(entry: &BenchmarkEntry, mode: Mode, settings: &BenchSettings) -> EntryResult {
    let start = Instant::now();
    let mut result = EntryResult {
        name: entry.name.clone(),
        label: entry.label,
        predicted: None,
        correct: false,
        leakage_path: None,
        path_agrees: None,
        violations: 0,
        error: None,
        elapsed: Duration::ZERO,
    };
    let outcome = (|| -> Result<_, String> {
        let unit = SourceUnit::load(&entry.sources).map_err(|e| e.to_string())?;
        let design = Design::new(unit, entry.top.as_deref(), &entry.assets, settings.deps).map_err(|e| e.to_string())?;
        let backend = settings.backend.instantiate(&design).map_err(|e| e.to_string())?;
        analyze(&design, &*backend, &settings.templates, settings.context.clone(), mode).map_err(|e| e.to_string())
    })();
    match outcome {
        Ok(a) => {
            let v = a.report.vulnerability_found;
            result.predicted = Some(v);
            result.correct = v == (entry.label == Label::Leakage);
            result.violations = a.violations.len();
            if let Some(expected) = &entry.expected_path {
                result.path_agrees = Some(v && is_ordered_subsequence(expected, &a.report.leakage_path));
            }
            result.leakage_path = Some(a.report.leakage_path);
        }
        Err(e) => {
            log::warn!("{}: {e}", entry.name);
            if entry.expected_path.is_some() {
                result.path_agrees = Some(false);
            }
            result.error = Some(e);
        }
    }
    result.elapsed = start.elapsed();
    result
}

/// Analyses every entry, at most `settings.workers` at a time. A failing
/// entry is scored as incorrect and does not stop the sweep.
pub fn run_benchmarks(manifest: &BenchmarkManifest, mode: Mode, settings: &BenchSettings) -> Result<Metrics, BenchError> {
    if manifest.entries.is_empty() {
        return Err(BenchError::EmptyBenchmark);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let entries = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| run_entry(e, mode, settings))
            .collect::<Vec<_>>()
    });
    Ok(Metrics::from_entries(mode, entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Json,
    Table,
}

fn percent(r: f64) -> String {
    format!("{:.2}%", r * 100.0)
}

/// One metrics block per mode: a JSON list, or a table with one row per mode.
pub fn emit_metrics(runs: &[Metrics], format: MetricsFormat) -> String {
    match format {
        MetricsFormat::Json => {
            let mut s = serde_json::to_string_pretty(runs).expect("metrics serialize");
            s.push('\n');
            s
        }
        MetricsFormat::Table => {
            let head = ["Approach", "Success Rate", "False Positive Rate"];
            let rows: Vec<[String; 3]> = runs
                .iter()
                .map(|m| [m.approach.clone(), percent(m.success_rate), percent(m.false_positive_rate)])
                .collect();
            let width = |i: usize| rows.iter().map(|r| r[i].len()).chain([head[i].len()]).max().unwrap_or(0);
            let w = [width(0), width(1), width(2)];
            let mut out = String::new();
            let _ = writeln!(out, "{:<a$} | {:<b$} | {}", head[0], head[1], head[2], a = w[0], b = w[1]);
            let _ = writeln!(out, "{}-+-{}-+-{}", "-".repeat(w[0]), "-".repeat(w[1]), "-".repeat(w[2]));
            for r in &rows {
                let _ = writeln!(out, "{:<a$} | {:<b$} | {}", r[0], r[1], r[2], a = w[0], b = w[1]);
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(name: &str, label: Label, predicted: Option<bool>) -> EntryResult {
        EntryResult {
            name: name.into(),
            label,
            predicted,
            correct: predicted == Some(label == Label::Leakage),
            leakage_path: None,
            path_agrees: None,
            violations: 0,
            error: None,
            elapsed: Duration::ZERO,
        }
    }

    #[test]
    fn subsequence_match() {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(is_ordered_subsequence(&v(&["a", "c"]), &v(&["a", "b", "c"])));
        assert!(!is_ordered_subsequence(&v(&["c", "a"]), &v(&["a", "b", "c"])));
        assert!(is_ordered_subsequence(&v(&[]), &v(&[])));
        assert!(!is_ordered_subsequence(&v(&["a"]), &v(&[])));
    }

    #[test]
    fn nine_of_fourteen() {
        let entries = (0..14)
            .map(|i| result(&format!("d{i}"), Label::Leakage, Some(i < 9)))
            .collect();
        let m = Metrics::from_entries(Mode::DivideAndConquer, entries);
        assert_eq!(m.correct, 9);
        assert!((m.success_rate - 9.0 / 14.0).abs() < 1e-12);
        assert!(emit_metrics(&[m], MetricsFormat::Table).contains("64.29%"));
    }

    #[test]
    fn no_clean_flagged() {
        let entries = (0..8).map(|i| result(&format!("c{i}"), Label::Clean, Some(false))).collect();
        let m = Metrics::from_entries(Mode::DivideAndConquer, entries);
        assert_eq!((m.negatives, m.false_positives), (8, 0));
        assert_eq!(m.false_positive_rate, 0.0);
        assert_eq!(m.success_rate, 1.0);
    }

    #[test]
    fn failed_entry_is_incorrect_not_positive() {
        let m = Metrics::from_entries(Mode::Monolithic, vec![result("x", Label::Clean, None)]);
        assert_eq!((m.correct, m.false_positives, m.negatives), (0, 0, 1));
    }

    #[test]
    fn table_layout() {
        let m = Metrics::from_entries(
            Mode::DivideAndConquer,
            vec![result("a", Label::Leakage, Some(true)), result("b", Label::Clean, Some(false))],
        );
        let text = emit_metrics(&[m], MetricsFormat::Table);
        let squashed: Vec<String> = text.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ")).collect();
        assert_eq!(squashed[0], "Approach | Success Rate | False Positive Rate");
        assert_eq!(squashed[2], "with divide and conquer | 100.00% | 0.00%");
    }
}
