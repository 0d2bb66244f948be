//! One line per acceptance criterion. Runs without the test harness so the
//! lines are always printed.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtlflow::bench::{load_manifest, run_benchmarks, BenchSettings, Label};
use rtlflow::engine::{
    parse_finding, AnalysisContext, Backend, BackendConfig, BackendError, MockTaintBackend, PromptTemplates,
    RecordingBackend, Request, Task,
};
use rtlflow::frontend::{DepOptions, SourceUnit};
use rtlflow::graph::DesignGraph;
use rtlflow::report::{analyze, validate_report, Analysis, Mode, Violation};
use rtlflow::taint::{influence_oracle, AssetSeed, TaintEngine};
use rtlflow::Design;

#[path = "../../core/tests/support/mod.rs"]
mod support;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn suite(file: &str) -> PathBuf {
    core_dir().join("fixtures/suite").join(file)
}

fn design(file: &str, top: &str, seed: AssetSeed) -> Design {
    let unit = SourceUnit::load(&[suite(file)]).unwrap();
    Design::new(unit, Some(top), &[seed], DepOptions::default()).unwrap()
}

fn aes() -> Design {
    design("aes_trojan.v", "top", AssetSeed::new("top", "KEY", "key"))
}

fn soc() -> Design {
    design(
        "soc_config_leak.v",
        "soc_integration_top",
        AssetSeed::new("config_mem_unit", "config_mem_data", "config"),
    )
}

fn run_mock(d: &Design) -> Analysis {
    let t = PromptTemplates::default();
    let b = MockTaintBackend::new(d);
    analyze(d, &b, &t, AnalysisContext::with_defaults(&t), Mode::DivideAndConquer).unwrap()
}

fn rtlflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rtlflow")).args(args).output().unwrap()
}

fn suite_rates() -> Check {
    let start = Instant::now();
    let manifest = load_manifest(&suite("manifest.json")).map_err(|e| e.to_string())?;
    let t = PromptTemplates::default();
    let settings = BenchSettings {
        backend: BackendConfig::mock(),
        context: AnalysisContext::with_defaults(&t),
        templates: t,
        deps: DepOptions::default(),
        workers: 1,
    };
    let m = run_benchmarks(&manifest, Mode::DivideAndConquer, &settings).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let clean = manifest.entries.iter().filter(|e| e.label == Label::Clean).count();
    ensure(m.total == 16 && clean == 8, || format!("suite has {} entries, {clean} clean", m.total))?;
    ensure(m.success_rate == 1.0 && m.false_positive_rate == 0.0, || {
        format!("success {:.4}, false positives {:.4}", m.success_rate, m.false_positive_rate)
    })?;
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!(
        "success rate {:.2}%, false positive rate {:.2}%, {secs:.2}s",
        m.success_rate * 100.0,
        m.false_positive_rate * 100.0
    ))
}

fn path_fidelity() -> Check {
    let a = run_mock(&aes());
    let r = &a.report;
    ensure(a.violations.is_empty(), || format!("violations {:?}", a.violations))?;
    ensure(r.leakage_path.last().map(String::as_str) == Some("top"), || format!("path {:?}", r.leakage_path))?;
    let xor = a
        .context
        .finding("TSC")
        .is_some_and(|f| f.transformations.iter().any(|t| t.contains("key ^ lfsr_stream")));
    let xor_step = r
        .transformations
        .iter()
        .any(|t| t.from_module == "TSC" && t.source == "key" && t.sink == "load");
    ensure(xor && xor_step, || format!("no key^lfsr step in {:?}", r.transformations))?;
    let exposure = r
        .transformations
        .iter()
        .any(|t| t.source == "load" && t.sink == "capacitance" && t.to_module == "top");
    ensure(exposure, || format!("no load->capacitance step in {:?}", r.transformations))?;

    let s = run_mock(&soc());
    let want = ["config_mem_unit", "status_transmitter_unit", "soc_integration_top"];
    ensure(s.violations.is_empty() && s.report.leakage_path == want, || {
        format!("soc path {:?}, violations {:?}", s.report.leakage_path, s.violations)
    })?;
    Ok(format!("trojan path {}, soc path {}", r.leakage_path.join(" -> "), want.join(" -> ")))
}

fn taint_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut ratios = Vec::new();
    let modules = 150;
    for _ in 0..modules {
        let src = support::circuits::random_module(&mut rng);
        let unit = SourceUnit::from_text("rnd.v", &src).map_err(|e| format!("{e}\n{src}"))?;
        let g = DesignGraph::from_unit(&unit).map_err(|e| e.to_string())?;
        let m = &unit.modules[0];
        let bits: u32 = m.inputs().map(|p| p.width()).sum();
        ensure(bits <= 10, || format!("{bits} input bits\n{src}"))?;
        let engine = TaintEngine::new(&unit, &g, DepOptions::default());
        for input in m.inputs() {
            let oracle = influence_oracle(m, &input.name).map_err(|e| format!("{e}\n{src}"))?;
            let state = engine
                .propagate(&unit, &[AssetSeed::new("rnd", &input.name, "s")])
                .map_err(|e| e.to_string())?;
            let tainted: BTreeSet<String> = state
                .tainted_in_module("rnd")
                .into_iter()
                .filter(|s| *s != input.name)
                .map(str::to_string)
                .collect();
            ensure(oracle.is_subset(&tainted), || {
                format!("false negative from {}: {oracle:?} vs {tainted:?}\n{src}", input.name)
            })?;
            if !tainted.is_empty() {
                ratios.push((tainted.len() - oracle.len()) as f64 / tainted.len() as f64);
            }
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    Ok(format!("{modules} modules, 0 false negatives, mean overtaint ratio {mean:.3}"))
}

fn longest_to_sink(g: &DesignGraph, n: &str) -> u32 {
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

fn graph_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xda6);
    let (mut small, mut total) = (0, 0);
    for _ in 0..1000 {
        let (nodes, edges) = support::dags::random_dag(&mut rng, 50);
        let g = DesignGraph::build(nodes.iter().map(String::as_str), &edges).map_err(|e| e.to_string())?;
        let s = g.topo_sort();
        let pos: BTreeMap<&str, usize> = s.order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        ensure(pos.len() == nodes.len(), || "order is not a permutation".into())?;
        for (u, v) in g.edges() {
            ensure(pos[u.as_str()] < pos[v.as_str()], || format!("{u} after {v}"))?;
        }
        total += 1;
        let ancestors: BTreeMap<&str, Vec<String>> = nodes
            .iter()
            .map(|n| g.ancestors(n).map(|a| (n.as_str(), a)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for m in &nodes {
            let deps: BTreeSet<String> = g.dependents(m).map_err(|e| e.to_string())?.into_iter().collect();
            ensure(deps == reachable(&g, m), || format!("dependents of {m}"))?;
            for n in &nodes {
                ensure(ancestors[n.as_str()].contains(m) == deps.contains(n), || format!("duality {m}/{n}"))?;
            }
        }
        if nodes.len() <= 10 {
            small += 1;
            for m in &nodes {
                ensure(s.levels[m] == longest_to_sink(&g, m), || format!("level of {m}"))?;
            }
        }
    }
    Ok(format!("{total} DAGs ordered with dual ancestors/dependents, levels exhaustive on {small} graphs of <= 10 nodes"))
}

fn determinism(tmp: &Path) -> Check {
    let out = |n: &str| tmp.join(n).display().to_string();
    let aes_v = suite("aes_trojan.v").display().to_string();
    for n in ["a1.json", "a2.json"] {
        let o = rtlflow(&["analyze", &aes_v, "--assets", "top:KEY:key", "--out", &out(n)]);
        ensure(o.status.code() == Some(1), || format!("analyze exit {:?}", o.status.code()))?;
    }
    let manifest = suite("manifest.json").display().to_string();
    for n in ["b1.json", "b2.json"] {
        let o = rtlflow(&["bench", "--manifest", &manifest, "--workers", "4", "--out", &out(n)]);
        ensure(o.status.code() == Some(0), || format!("bench exit {:?}", o.status.code()))?;
    }
    // replay sweep over the shipped fixtures
    std::fs::copy(suite("aes_trojan.v"), tmp.join("aes.v")).map_err(|e| e.to_string())?;
    std::fs::write(
        tmp.join("replay.json"),
        r#"{"benchmarks": [{"name": "aes", "sources": ["aes.v"], "top": "top",
            "assets": [{"module": "top", "signal": "KEY", "label": "key"}], "label": "leakage"}]}"#,
    )
    .map_err(|e| e.to_string())?;
    let fixtures = core_dir().join("fixtures/replay/aes_trojan").display().to_string();
    for n in ["r1.json", "r2.json"] {
        let o = rtlflow(&[
            "bench",
            "--manifest",
            &out("replay.json"),
            "--backend",
            "replay",
            "--fixtures-dir",
            &fixtures,
            "--mode",
            "divide-and-conquer",
            "--out",
            &out(n),
        ]);
        ensure(o.status.code() == Some(0), || format!("replay bench exit {:?}", o.status.code()))?;
    }
    let replay: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out("r1.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(replay[0]["correct"] == 1, || format!("replay sweep {replay}"))?;
    for (a, b) in [("a1.json", "a2.json"), ("b1.json", "b2.json"), ("r1.json", "r2.json")] {
        let same = std::fs::read(out(a)).ok() == std::fs::read(out(b)).ok();
        ensure(same, || format!("{a} and {b} differ"))?;
    }
    Ok("analyze, mock bench and replay bench outputs are byte-identical across runs".into())
}

fn robust_parsing() -> Check {
    let corpus = support::replies::CORPUS;
    ensure(corpus.len() >= 20, || format!("corpus has {}", corpus.len()))?;
    let unit = SourceUnit::load(&[suite("aes_trojan.v")]).map_err(|e| e.to_string())?;
    let decl = unit.module("TSC").unwrap();
    let (mut ok, mut rejected) = (0, 0);
    for (raw, want) in corpus {
        match (parse_finding(raw, "TSC", Some(decl)), want) {
            (Ok(f), Some(n)) if f.sensitive_sources.len() == *n => {
                let again = parse_finding(&f.to_reply_json(), "TSC", Some(decl)).map_err(|e| e.to_string())?;
                ensure(again == f, || format!("finding from {raw:?} does not round-trip"))?;
                ok += 1;
            }
            (Err(_), None) => rejected += 1,
            (got, _) => return Err(format!("{raw:?} gave {got:?}")),
        }
    }
    let d = aes();
    let t = PromptTemplates::default();
    let replay = BackendConfig::replay(core_dir().join("fixtures/replay/aes_trojan"))
        .instantiate(&d)
        .map_err(|e| e.to_string())?;
    let a = analyze(&d, &*replay, &t, AnalysisContext::with_defaults(&t), Mode::DivideAndConquer)
        .map_err(|e| e.to_string())?;
    let repaired = a.stats.iter().filter(|s| s.attempts == 2).count();
    ensure(repaired >= 1, || "the replay fixture never needed a repair prompt".into())?;
    Ok(format!(
        "{} replies: {ok} valid, {rejected} schema errors; replay fixture used {repaired} repair prompt(s)",
        corpus.len()
    ))
}

/// Answers from taint, except the final report which is self-contradictory.
struct BadReport<'d>(MockTaintBackend<'d>);

impl Backend for BadReport<'_> {
    fn complete(&self, req: &Request<'_>) -> Result<String, BackendError> {
        if *req.task == Task::Report {
            return Ok(r#"{"vulnerability_found": false, "vulnerable_modules": [], "leakage_path": ["top"],
                "leakage_type": "none", "explanation": "fine", "transformations": []}"#
                .into());
        }
        self.0.complete(req)
    }
}

fn report_validation(tmp: &Path) -> Check {
    let d = soc();
    let good = run_mock(&d).report;
    let mut unknown = good.clone();
    unknown.leakage_path.insert(1, "ghost_unit".into());
    let mut disconnected = good.clone();
    disconnected.leakage_path = vec!["config_mem_unit".into(), "config_mem_unit_twin".into()];
    let g = &d.graph;
    let mut twin_graph_nodes: Vec<&str> = g.nodes().iter().map(String::as_str).collect();
    twin_graph_nodes.push("config_mem_unit_twin");
    let edges: Vec<_> = d.unit.resolve_hierarchy();
    let g2 = DesignGraph::build(twin_graph_nodes, &edges).map_err(|e| e.to_string())?;
    let mut negative = good.clone();
    negative.vulnerability_found = false;

    let v1 = validate_report(&unknown, g);
    ensure(v1.iter().any(|v| matches!(v, Violation::UnknownModule { module, .. } if module == "ghost_unit")), || {
        format!("unknown module: {v1:?}")
    })?;
    let v2 = validate_report(&disconnected, &g2);
    ensure(v2.iter().any(|v| matches!(v, Violation::DisconnectedPair { .. })), || format!("disconnected: {v2:?}"))?;
    let v3 = validate_report(&negative, g);
    ensure(v3.iter().any(|v| matches!(v, Violation::InconsistentVerdict { .. })), || format!("negative: {v3:?}"))?;

    let aes_d = aes();
    let fx = tmp.join("bad_fixtures");
    let t = PromptTemplates::default();
    let rec = RecordingBackend::new(BadReport(MockTaintBackend::new(&aes_d)), fx.clone());
    analyze(&aes_d, &rec, &t, AnalysisContext::with_defaults(&t), Mode::DivideAndConquer).map_err(|e| e.to_string())?;
    let o = rtlflow(&[
        "analyze",
        &suite("aes_trojan.v").display().to_string(),
        "--assets",
        "top:KEY:key",
        "--backend",
        "replay",
        "--fixtures-dir",
        &fx.display().to_string(),
        "--out",
        &tmp.join("bad.json").display().to_string(),
    ]);
    ensure(o.status.code() == Some(4), || format!("exit {:?}", o.status.code()))?;
    Ok("UnknownModule, DisconnectedPair and InconsistentVerdict raised; emission exits 4".into())
}

fn main() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let checks: Vec<Criterion> = vec![
        ("bundled suite rates with the taint backend", Box::new(suite_rates)),
        ("leakage path fidelity on the reference designs", Box::new(path_fidelity)),
        ("taint soundness against the exhaustive oracle", Box::new(taint_soundness)),
        ("graph order, levels and duality", Box::new(graph_properties)),
        ("determinism of analyze and bench", Box::new(|| determinism(tmp.path()))),
        ("robust parsing of backend replies", Box::new(robust_parsing)),
        ("report validation and exit code 4", Box::new(|| report_validation(tmp.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let fast = secs < 120.0;
    println!("{}  acceptance run time: {secs:.1}s (limit 120s)", if fast { "PASS" } else { "FAIL" });
    if failed > 0 || !fast {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
