use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rtlflow::bench::{emit_metrics, load_manifest, run_benchmarks, BenchError, BenchSettings, Metrics, MetricsFormat};
use rtlflow::config::ToolConfig;
use rtlflow::engine::{BackendKind, HttpBackend, PipelineError, RecordingBackend};
use rtlflow::frontend::SourceUnit;
use rtlflow::graph::DesignGraph;
use rtlflow::report::{analyze, Analysis, Mode};
use rtlflow::taint::{AssetSeed, TaintEngine};
use rtlflow::{Design, DesignError};

/// Exit codes.
const CLEAN: u8 = 0;
const LEAK: u8 = 1;
const USAGE: u8 = 2;
const BACKEND: u8 = 3;
const INVALID_REPORT: u8 = 4;

#[derive(Parser)]
#[command(name = "rtlflow", version, about = "Information flow tracking for Verilog designs")]
struct Cli {
    /// Log progress and print the effective configuration.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a design and write the leakage report.
    Analyze(AnalyzeArgs),
    /// Print the module hierarchy graph with levels.
    Graph(GraphArgs),
    /// Run the deterministic taint propagation and print tainted signals.
    Taint(TaintArgs),
    /// Run a labeled benchmark manifest and write metrics.
    Bench(BenchArgs),
    /// Analyse a design against a live backend and store its replies as replay fixtures.
    Record(RecordArgs),
}

#[derive(Args)]
struct DesignArgs {
    /// Verilog source files.
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    /// Top module; defaults to the only module that is never instantiated.
    #[arg(long)]
    top: Option<String>,
    /// Asset seeds as module:signal[:label] or signal@module.
    #[arg(long = "assets", value_delimiter = ',')]
    assets: Vec<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Base URL of an OpenAI-compatible chat completions API.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    fixtures_dir: Option<PathBuf>,
    #[arg(long)]
    prompt_dir: Option<PathBuf>,
    #[arg(long)]
    context_budget: Option<usize>,
    /// Treat clocks and async resets as implicit flow sources.
    #[arg(long)]
    include_clocks: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "divide-and-conquer")]
    mode: ModeArg,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    top: Option<String>,
    #[arg(long, conflicts_with = "json")]
    dot: bool,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TaintArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    include_clocks: bool,
    /// Include the hop list that first tainted each signal.
    #[arg(long)]
    provenance: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "both")]
    mode: BenchMode,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecordArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Overwrite fixtures in a non-empty fixtures directory.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "divide-and-conquer")]
    mode: ModeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Replay,
    MockTaint,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    DivideAndConquer,
    Monolithic,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::DivideAndConquer => Mode::DivideAndConquer,
            ModeArg::Monolithic => Mode::Monolithic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    DivideAndConquer,
    Monolithic,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

type Outcome = Result<u8, Failure>;

fn parse_seed(text: &str) -> Option<AssetSeed> {
    if text.contains('@') {
        return AssetSeed::parse(text);
    }
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [m, s] if !m.is_empty() && !s.is_empty() => Some(AssetSeed::new(m, s, s)),
        [m, s, l] if !m.is_empty() && !s.is_empty() && !l.is_empty() => Some(AssetSeed::new(m, s, l)),
        _ => None,
    }
}

fn load_config(args: &ConfigArgs, verbose: bool) -> Result<ToolConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => ToolConfig::load(p).map_err(|e| fail(USAGE, e))?,
        None => ToolConfig::default(),
    };
    if let Some(b) = args.backend {
        cfg.backend.kind = match b {
            BackendArg::Http => BackendKind::Http,
            BackendArg::Replay => BackendKind::Replay,
            BackendArg::MockTaint => BackendKind::MockTaint,
        };
    }
    if let Some(e) = &args.endpoint {
        cfg.backend.endpoint = Some(e.clone());
    }
    if let Some(m) = &args.model {
        cfg.backend.model = Some(m.clone());
    }
    if let Some(d) = &args.fixtures_dir {
        cfg.backend.fixtures_dir = Some(d.clone());
    }
    if let Some(d) = &args.prompt_dir {
        cfg.prompt_dir = Some(d.clone());
    }
    if let Some(b) = args.context_budget {
        cfg.context_budget_chars = b;
    }
    if args.include_clocks {
        cfg.include_clocks = true;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate().map_err(|e| fail(USAGE, e))?;
    if verbose {
        eprint!("effective configuration:\n{}", cfg.to_json());
    }
    Ok(cfg)
}

fn load_unit(sources: &[PathBuf]) -> Result<SourceUnit, Failure> {
    let unit = SourceUnit::load(sources).map_err(|e| fail(USAGE, e))?;
    for d in &unit.diagnostics {
        eprintln!("{d}");
    }
    Ok(unit)
}

fn load_design(args: &DesignArgs, cfg: &ToolConfig) -> Result<Design, Failure> {
    let unit = load_unit(&args.sources)?;
    let mut seeds = Vec::new();
    for a in &args.assets {
        seeds.push(parse_seed(a).ok_or_else(|| {
            fail(USAGE, format!("invalid asset `{a}`; expected module:signal[:label] or signal@module"))
        })?);
    }
    if seeds.is_empty() {
        seeds = cfg.assets.clone();
    }
    let design = Design::new(unit, args.top.as_deref(), &seeds, cfg.deps()).map_err(|e: DesignError| fail(USAGE, e))?;
    if design.seeds.is_empty() && design.unit.modules.len() > 1 {
        return Err(fail(
            USAGE,
            "no security assets given; pass --assets module:signal[:label] or list `assets` in the config",
        ));
    }
    Ok(design)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| fail(USAGE, format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Prompt { .. } => fail(USAGE, e),
        PipelineError::Backend { .. } | PipelineError::Schema { .. } => fail(BACKEND, e),
    }
}

/// Writes the report, prints the verdict line and maps the outcome to an exit code.
fn finish_analysis(a: &Analysis, out: Option<&Path>) -> Outcome {
    write_output(out, &a.report.to_canonical_json())?;
    eprintln!("{}", a.report.summary());
    if !a.violations.is_empty() {
        for v in &a.violations {
            eprintln!("report validation: {v}");
        }
        return Ok(INVALID_REPORT);
    }
    Ok(if a.report.vulnerability_found { LEAK } else { CLEAN })
}

fn cmd_analyze(args: &AnalyzeArgs, verbose: bool) -> Outcome {
    let cfg = load_config(&args.config, verbose)?;
    let templates = cfg.templates().map_err(|e| fail(USAGE, e))?;
    let ctx = cfg.context(&templates).map_err(|e| fail(USAGE, e))?;
    let design = load_design(&args.design, &cfg)?;
    let backend = cfg.backend.instantiate(&design).map_err(|e| fail(USAGE, e))?;
    let a = analyze(&design, &*backend, &templates, ctx, args.mode.into()).map_err(pipeline_failure)?;
    finish_analysis(&a, args.out.as_deref())
}

fn cmd_graph(args: &GraphArgs) -> Outcome {
    let mut unit = load_unit(&args.sources)?;
    if let Some(t) = &args.top {
        unit = unit
            .restrict_to(t)
            .ok_or_else(|| fail(USAGE, format!("top module `{t}` is not defined")))?;
    }
    let g = DesignGraph::from_unit(&unit).map_err(|e| fail(USAGE, e))?;
    let text = if args.dot { g.to_dot() } else { g.to_json() };
    write_output(args.out.as_deref(), &text)?;
    Ok(CLEAN)
}

fn cmd_taint(args: &TaintArgs, verbose: bool) -> Outcome {
    let mut cfg = match &args.config {
        Some(p) => ToolConfig::load(p).map_err(|e| fail(USAGE, e))?,
        None => ToolConfig::default(),
    };
    cfg.include_clocks |= args.include_clocks;
    if verbose {
        eprint!("effective configuration:\n{}", cfg.to_json());
    }
    let design = load_design(&args.design, &cfg)?;
    let engine = TaintEngine::new(&design.unit, &design.graph, design.deps);
    let state = engine
        .propagate(&design.unit, &design.seeds)
        .map_err(|e| fail(USAGE, e))?;
    write_output(args.out.as_deref(), &state.to_json(args.provenance))?;
    Ok(CLEAN)
}

fn cmd_bench(args: &BenchArgs, verbose: bool) -> Outcome {
    let cfg = load_config(&args.config, verbose)?;
    let manifest = load_manifest(&args.manifest).map_err(|e| fail(USAGE, e))?;
    let templates = cfg.templates().map_err(|e| fail(USAGE, e))?;
    let settings = BenchSettings {
        backend: cfg.backend.clone(),
        context: cfg.context(&templates).map_err(|e| fail(USAGE, e))?,
        templates,
        deps: cfg.deps(),
        workers: cfg.workers,
    };
    let modes: &[Mode] = match args.mode {
        BenchMode::DivideAndConquer => &[Mode::DivideAndConquer],
        BenchMode::Monolithic => &[Mode::Monolithic],
        BenchMode::Both => &[Mode::Monolithic, Mode::DivideAndConquer],
    };
    let mut runs: Vec<Metrics> = Vec::new();
    for &mode in modes {
        let m = run_benchmarks(&manifest, mode, &settings).map_err(|e| match e {
            BenchError::EmptyBenchmark => fail(USAGE, e),
            BenchError::Pool(_) => fail(BACKEND, e),
        })?;
        for e in m.entries.iter().filter(|e| e.error.is_some()) {
            eprintln!("{}: {}", e.name, e.error.as_deref().unwrap_or_default());
        }
        log::info!("{}: {} entries in {:?}", mode.label(), m.total, m.elapsed());
        runs.push(m);
    }
    let format = match args.format {
        FormatArg::Json => MetricsFormat::Json,
        FormatArg::Table => MetricsFormat::Table,
    };
    write_output(args.out.as_deref(), &emit_metrics(&runs, format))?;
    if args.out.is_some() || matches!(format, MetricsFormat::Json) {
        eprint!("{}", emit_metrics(&runs, MetricsFormat::Table));
    }
    Ok(CLEAN)
}

fn cmd_record(args: &RecordArgs, verbose: bool) -> Outcome {
    let cfg = load_config(&args.config, verbose)?;
    if cfg.backend.kind != BackendKind::Http {
        return Err(fail(USAGE, "record needs the http backend; there is nothing to record otherwise"));
    }
    let dir = cfg
        .backend
        .fixtures_dir
        .clone()
        .ok_or_else(|| fail(USAGE, "record needs --fixtures-dir"))?;
    let occupied = std::fs::read_dir(&dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && !args.force {
        return Err(fail(
            USAGE,
            format!("{} already holds fixtures; pass --force to overwrite them", dir.display()),
        ));
    }
    let templates = cfg.templates().map_err(|e| fail(USAGE, e))?;
    let ctx = cfg.context(&templates).map_err(|e| fail(USAGE, e))?;
    let design = load_design(&args.design, &cfg)?;
    let http = HttpBackend::new(cfg.backend.clone()).map_err(|e| fail(USAGE, e))?;
    let rec = RecordingBackend::new(http, dir.clone());
    let a = analyze(&design, &rec, &templates, ctx, args.mode.into()).map_err(pipeline_failure)?;
    eprintln!("recorded {} calls into {}", a.stats.iter().map(|s| s.attempts).sum::<u32>(), dir.display());
    finish_analysis(&a, args.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .format_timestamp(None)
        .init();
    let outcome = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, cli.verbose),
        Command::Graph(a) => cmd_graph(a),
        Command::Taint(a) => cmd_taint(a, cli.verbose),
        Command::Bench(a) => cmd_bench(a, cli.verbose),
        Command::Record(a) => cmd_record(a, cli.verbose),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
