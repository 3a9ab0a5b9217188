mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use penheal_core::gateway::{verify_transcript, Gateway, OpenAiBackend};
use penheal_core::knowledge::{
    bundled_index, doc_counts, load_index, save_index, HashedTfEmbedder, KnowledgeBase, DEFAULT_CHUNK_SIZE,
    DEFAULT_OVERLAP,
};
use penheal_core::model::{
    deserialize_run, serialize_run, AggregationMode, RunArtifact, RunConfig, RunStatus, Vulnerability,
};
use penheal_core::net;
use penheal_core::pentest::{run_pentest, ExecutorBackend, ShellBackend, SimBackend};
use penheal_core::pipeline::{run_pipeline, selected};
use penheal_core::remediation::nvd::{CveSource, FixtureSource, NvdClient};
use penheal_core::remediation::{remediate, render_recommendations};
use penheal_core::scoring::{mean_report, render_table, score_run};
use penheal_core::sim::{metasploitable2, Simulator};

use crate::config::{load_config, Endpoints, LoadedConfig, DEFAULT_LLM_BASE_URL, DEFAULT_NVD_BASE_URL};

/// Automated penetration testing followed by budgeted remediation planning.
///
/// Only point live mode at machines you are authorized to test.
#[derive(Parser, Debug)]
#[command(name = "penheal", version)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Opts {
    /// JSON run config; `${VAR}` in string values reads the environment
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Target address (overrides target_address)
    #[arg(long, global = true)]
    target: Option<String>,
    /// Remediation budget per finding (overrides budget_per_vuln)
    #[arg(long, global = true)]
    budget_per_vuln: Option<f64>,
    #[arg(long, value_enum, global = true, default_value_t = Mode::Live)]
    mode: Mode,
    /// Fixture directory for hermetic mode: transcript.jsonl, plus optional
    /// config.json, nvd/ and truth.json (also looked up one level up)
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Knowledge-base index directory (default: the bundled notes)
    #[arg(long, global = true)]
    kb: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, global = true)]
    aggregation: Option<Aggregation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Live,
    Hermetic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Aggregation {
    Div3,
    Sum,
}

impl From<Aggregation> for AggregationMode {
    fn from(a: Aggregation) -> Self {
        match a {
            Aggregation::Div3 => AggregationMode::DividedByThree,
            Aggregation::Sum => AggregationMode::Sum,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Pentest, remediate and score in one go
    Run {
        /// Ground-truth table to score against (hermetic mode uses the simulator's)
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Pentest stage only
    Pentest,
    /// Remediation stage for the findings in an existing artifact
    Remediate {
        artifact: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Score artifacts against a ground-truth table
    Score {
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Print the mean over all artifacts instead of one table each
        #[arg(long)]
        repeat_mean: bool,
    },
    /// Add documents (files or directories of .md/.txt) to a knowledge-base index
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: usize,
    },
    /// Transcript tools
    Replay {
        #[command(subcommand)]
        cmd: ReplayCmd,
    },
}

#[derive(Subcommand, Debug)]
enum ReplayCmd {
    /// Check that every exchange parses and matches its hash
    Verify { transcript: PathBuf },
}

/// Exit status: success, finished with warnings, or fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Ok,
    Partial,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    // clap exits with 2 on usage errors, which here means "partial"
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.cmd {
        Cmd::Run { truth } => cmd_run(&cli.opts, truth.as_deref()),
        Cmd::Pentest => cmd_pentest(&cli.opts),
        Cmd::Remediate { artifact, truth } => cmd_remediate(&cli.opts, artifact, truth.as_deref()),
        Cmd::Score {
            artifacts,
            truth,
            repeat_mean,
        } => cmd_score(&cli.opts, artifacts, truth.as_deref(), *repeat_mean),
        Cmd::Ingest {
            paths,
            chunk_size,
            overlap,
        } => cmd_ingest(&cli.opts, paths, *chunk_size, *overlap),
        Cmd::Replay {
            cmd: ReplayCmd::Verify { transcript },
        } => {
            let n = verify_transcript(transcript)?;
            println!("{}: {n} exchanges verified", transcript.display());
            Ok(Outcome::Ok)
        }
    }
}

/// `dir/name`, else `dir/../name`.
fn fixture_file(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(name), dir.join("..").join(name)].into_iter().find(|p| p.exists())
}

fn fixtures_dir(opts: &Opts) -> Result<&Path> {
    opts.fixtures
        .as_deref()
        .context("hermetic mode needs --fixtures DIR")
}

/// Config file (explicit, else the fixture's in hermetic mode, else
/// defaults) with command-line overrides applied and validated.
fn resolve_config(opts: &Opts, fallback_target: Option<&str>) -> Result<LoadedConfig> {
    let path = match (&opts.config, opts.mode) {
        (Some(p), _) => Some(p.clone()),
        (None, Mode::Hermetic) => fixture_file(fixtures_dir(opts)?, "config.json"),
        (None, Mode::Live) => None,
    };
    let mut cfg = match path {
        Some(p) => load_config(&p)?,
        None => LoadedConfig {
            run: RunConfig::new(""),
            endpoints: Endpoints::default(),
        },
    };
    if let Some(t) = &opts.target {
        cfg.run.target_address = t.clone();
    } else if cfg.run.target_address.is_empty() {
        if let Some(t) = fallback_target {
            cfg.run.target_address = t.to_string();
        }
    }
    if let Some(b) = opts.budget_per_vuln {
        cfg.run.budget_per_vuln = b;
    }
    if let Some(a) = opts.aggregation {
        cfg.run.aggregation_mode = a.into();
    }
    let problems = cfg.run.validate();
    if !problems.is_empty() {
        bail!("invalid config: {}", problems.join("; "));
    }
    Ok(cfg)
}

/// Replays the fixture transcript in hermetic mode; records to
/// `out/<transcript_name>` in live mode.
fn gateway(opts: &Opts, cfg: &LoadedConfig, transcript_name: &str) -> Result<(Gateway, PathBuf)> {
    let (gw, path) = match opts.mode {
        Mode::Hermetic => {
            let path = fixtures_dir(opts)?.join("transcript.jsonl");
            (Gateway::replay_mode(&path)?, path)
        }
        Mode::Live => {
            let url = cfg.endpoints.llm_base_url.as_deref().unwrap_or(DEFAULT_LLM_BASE_URL);
            let backend = match &cfg.endpoints.llm_api_key {
                Some(k) => OpenAiBackend::new(url, Some(k.clone())),
                None => OpenAiBackend::from_env(url),
            };
            let path = opts.out.join(transcript_name);
            (Gateway::record_mode(Arc::new(backend), &path)?, path)
        }
    };
    Ok((
        gw.with_models(cfg.run.tier_models.clone())
            .with_role_tiers(cfg.run.role_models.clone()),
        path,
    ))
}

fn knowledge(opts: &Opts, cfg: &RunConfig) -> Result<Option<KnowledgeBase>> {
    if !cfg.components.instructor {
        return Ok(None);
    }
    Ok(Some(match &opts.kb {
        Some(dir) => load_index(dir, Box::new(HashedTfEmbedder::default()))?,
        None => bundled_index(),
    }))
}

fn executor(opts: &Opts) -> Box<dyn ExecutorBackend> {
    match opts.mode {
        Mode::Hermetic => Box::new(SimBackend::new(Simulator::new(metasploitable2()))),
        Mode::Live => Box::new(ShellBackend::default()),
    }
}

fn cve_source(opts: &Opts, cfg: &LoadedConfig) -> Result<Box<dyn CveSource>> {
    Ok(match opts.mode {
        Mode::Hermetic => {
            let dir = fixture_file(fixtures_dir(opts)?, "nvd").context("no nvd/ directory in the fixtures")?;
            Box::new(FixtureSource::new(dir))
        }
        Mode::Live => {
            let e = &cfg.endpoints;
            let url = e.nvd_base_url.as_deref().unwrap_or(DEFAULT_NVD_BASE_URL);
            let cache = Some(e.nvd_cache_dir.clone().unwrap_or_else(|| opts.out.join("nvd-cache")));
            Box::new(match &e.nvd_api_key {
                Some(k) => NvdClient::new(url, Some(k.clone()), cache),
                None => NvdClient::from_env(url, cache),
            })
        }
    })
}

fn load_truth(path: &Path) -> Result<Vec<Vulnerability>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing ground truth {}", path.display()))
}

/// Explicit `--truth`, else in hermetic mode the simulated host's table.
fn truth_for(opts: &Opts, truth: Option<&Path>) -> Result<Option<Vec<Vulnerability>>> {
    match (truth, opts.mode) {
        (Some(p), _) => load_truth(p).map(Some),
        (None, Mode::Hermetic) => Ok(Some(Simulator::new(metasploitable2()).ground_truth())),
        (None, Mode::Live) => Ok(None),
    }
}

fn read_artifact(path: &Path) -> Result<RunArtifact> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    deserialize_run(&bytes).with_context(|| format!("in artifact {}", path.display()))
}

fn run_id() -> String {
    chrono::Utc::now().format("run-%Y%m%dT%H%M%SZ").to_string()
}

fn report(a: &RunArtifact) -> String {
    let mut s = format!("Run {} against {}: {:?}\n\n", a.run_id, a.target_address, a.status);
    s.push_str(&format!("Findings ({}):\n", a.findings.len()));
    for f in &a.findings {
        let score = f.base_score().map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!("  {} [CVSS {score}] {}\n", f.key(), f.description));
    }
    if !a.recommendations.is_empty() || a.budget.is_some() {
        s.push_str("\nRecommendations:\n");
        s.push_str(&render_recommendations(&a.recommendations, a.budget.as_ref()));
    }
    if let Some(r) = &a.score_report {
        s.push('\n');
        s.push_str(&render_table(r));
    }
    if !a.warnings.is_empty() {
        s.push_str("\nWarnings:\n");
        for w in &a.warnings {
            s.push_str(&format!("  {w}\n"));
        }
    }
    s
}

/// Writes the artifact and report, prints the report, and maps the run
/// status to an outcome.
fn finish(opts: &Opts, artifact: &RunArtifact) -> Result<Outcome> {
    let artifact_path = opts.out.join("artifact.json");
    fs::write(&artifact_path, serialize_run(artifact)).with_context(|| format!("writing {}", artifact_path.display()))?;
    let text = report(artifact);
    let report_path = opts.out.join("report.txt");
    fs::write(&report_path, &text).with_context(|| format!("writing {}", report_path.display()))?;
    print!("{text}");
    if opts.mode == Mode::Hermetic {
        println!("network calls: {}", net::attempts());
        if net::attempts() > 0 {
            bail!("hermetic run attempted {} network calls", net::attempts());
        }
    }
    println!("artifact written to {}", artifact_path.display());
    if artifact.status == RunStatus::Aborted {
        let why = artifact
            .warnings
            .iter()
            .rev()
            .find(|w| w.contains("aborted"))
            .cloned()
            .unwrap_or_else(|| "run aborted".into());
        bail!("{why}");
    }
    if artifact.status == RunStatus::BudgetExhausted || !artifact.warnings.is_empty() {
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Ok)
}

/// Turns on the network guard in hermetic mode and creates `--out`.
fn prepare(opts: &Opts) -> Result<()> {
    if opts.mode == Mode::Hermetic {
        net::deny_all(true);
    }
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))
}

fn cmd_run(opts: &Opts, truth: Option<&Path>) -> Result<Outcome> {
    prepare(opts)?;
    let cfg = resolve_config(opts, None)?;
    let (gw, transcript) = gateway(opts, &cfg, "transcript.jsonl")?;
    let kb = knowledge(opts, &cfg.run)?;
    let mut backend = executor(opts);
    let source = cve_source(opts, &cfg)?;
    let truth = truth_for(opts, truth)?;
    let id = run_id();
    let out = run_pipeline(&id, &cfg.run, &gw, kb.as_ref(), backend.as_mut(), source.as_ref(), truth.as_deref());
    let mut artifact = out.artifact;
    artifact.created_at = chrono::Utc::now().to_rfc3339();
    artifact.transcript_ref = Some(transcript.display().to_string());
    let history = opts.out.join("history.jsonl");
    out.pentest
        .history
        .write_jsonl(&history)
        .with_context(|| format!("writing {}", history.display()))?;
    artifact.history_ref = Some(history.display().to_string());
    finish(opts, &artifact)
}

fn cmd_pentest(opts: &Opts) -> Result<Outcome> {
    prepare(opts)?;
    let cfg = resolve_config(opts, None)?;
    let (gw, transcript) = gateway(opts, &cfg, "transcript.jsonl")?;
    let kb = knowledge(opts, &cfg.run)?;
    let mut backend = executor(opts);
    let p = run_pentest(&cfg.run, &gw, kb.as_ref(), backend.as_mut());
    let mut artifact = RunArtifact::new(run_id(), p.plan.clone(), p.findings.clone());
    artifact.created_at = chrono::Utc::now().to_rfc3339();
    artifact.target_address = cfg.run.target_address.clone();
    artifact.status = p.status;
    artifact.warnings = p.warnings.clone();
    if let Some(reason) = &p.abort_reason {
        artifact.warnings.push(format!("pentest aborted: {reason}"));
    }
    artifact.transcript_ref = Some(transcript.display().to_string());
    let history = opts.out.join("history.jsonl");
    p.history
        .write_jsonl(&history)
        .with_context(|| format!("writing {}", history.display()))?;
    artifact.history_ref = Some(history.display().to_string());
    finish(opts, &artifact)
}

fn cmd_remediate(opts: &Opts, path: &Path, truth: Option<&Path>) -> Result<Outcome> {
    prepare(opts)?;
    let mut artifact = read_artifact(path)?;
    let cfg = resolve_config(opts, Some(&artifact.target_address))?;
    let (gw, transcript) = gateway(opts, &cfg, "transcript-remediate.jsonl")?;
    let source = cve_source(opts, &cfg)?;
    let out = remediate(&artifact.findings, &cfg.run, source.as_ref(), &gw)?;
    artifact.findings = out.findings.clone();
    artifact.recommendations = out.groups.clone();
    artifact.budget = Some(out.budget.clone());
    artifact.warnings.extend(out.warnings.iter().cloned());
    if opts.mode == Mode::Live {
        artifact.transcript_ref = Some(transcript.display().to_string());
    }
    if let Some(truth) = truth_for(opts, truth)? {
        artifact.score_report =
            Some(score_run(&artifact.run_id, &artifact.findings, &truth, &selected(&artifact), cfg.run.aggregation_mode)?);
    }
    finish(opts, &artifact)
}

fn cmd_score(opts: &Opts, paths: &[PathBuf], truth: Option<&Path>, repeat_mean: bool) -> Result<Outcome> {
    let truth_path = match truth {
        Some(p) => p.to_path_buf(),
        None => opts
            .fixtures
            .as_deref()
            .and_then(|d| fixture_file(d, "truth.json"))
            .context("no ground truth: pass --truth FILE or --fixtures DIR")?,
    };
    let truth = load_truth(&truth_path)?;
    let mode = opts.aggregation.map(AggregationMode::from);
    let mut reports = Vec::new();
    for p in paths {
        let a = read_artifact(p)?;
        let mode = mode
            .or_else(|| a.score_report.as_ref().map(|r| r.aggregation_mode))
            .unwrap_or_default();
        reports.push(score_run(&a.run_id, &a.findings, &truth, &selected(&a), mode).with_context(|| format!("scoring {}", p.display()))?);
    }
    if repeat_mean {
        let m = mean_report(&reports).expect("at least one artifact");
        print!("{}", render_table(&m));
    } else {
        for (i, r) in reports.iter().enumerate() {
            if i > 0 {
                println!();
            }
            print!("{}", render_table(r));
        }
    }
    Ok(Outcome::Ok)
}

fn documents(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(path).with_context(|| format!("reading {}", path.display()))? {
        let p = entry.with_context(|| format!("reading {}", path.display()))?.path();
        if p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn cmd_ingest(opts: &Opts, paths: &[PathBuf], chunk_size: usize, overlap: usize) -> Result<Outcome> {
    let dir = opts.kb.as_deref().context("ingest needs --kb DIR")?;
    let mut kb = if dir.join("meta.json").exists() {
        load_index(dir, Box::new(HashedTfEmbedder::default()))?
    } else {
        KnowledgeBase::default()
    };
    let mut docs = Vec::new();
    for p in paths {
        docs.extend(documents(p)?);
    }
    if docs.is_empty() {
        bail!("no .md or .txt documents found");
    }
    let mut added = 0;
    for d in &docs {
        let text = fs::read_to_string(d).with_context(|| format!("reading {}", d.display()))?;
        let id = d.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string();
        let n = kb.ingest(&text, &id, chunk_size, overlap)?;
        println!("{id}: {n} chunks");
        added += n;
    }
    save_index(&kb, dir)?;
    println!("ingested {added} chunks from {} documents; index holds {} chunks in {} documents", docs.len(), kb.len(), doc_counts(&kb).len());
    Ok(Outcome::Ok)
}
