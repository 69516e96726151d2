use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fpsim_core::config::{BackendKind, ConfigError};
use fpsim_core::embedding::Embedder;
use fpsim_core::events::{self, EventLogError};
use fpsim_core::graph::snapshot_file_name;
use fpsim_core::metrics::{pearson_matrix, write_correlations_csv, MetricsError};
use fpsim_core::personas::{self, PersonaFileError};
use fpsim_core::reasoning::{ReasoningBackend, ReasoningError, RemoteBackend, ScriptedBackend};
use fpsim_core::simulation::{self, make_backend, make_chat_client, make_embedder};
use fpsim_core::{
    AgentId, Aggregator, EmbeddingProvider, HashingEmbedder, LogAnalysis, PersonaRecord,
    Restriction, Simulation, SimulationConfig, SimulationError, SimulationEvent, SocialGraph,
    SuperiorityReport,
};

use crate::manifest::{embedding_id, sha256_hex, RunManifest};
use crate::{BackendArg, CliError};

const PERSONAS_COPY: &str = "personas.jsonl";

fn io_err(what: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{what}: {e}"))
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        let msg = e.to_string();
        match e {
            SimulationError::Config(_)
            | SimulationError::Personas { .. }
            | SimulationError::TooFewAgents(_)
            | SimulationError::Content(_)
            | SimulationError::Graph(_) => CliError::Invalid(msg),
            SimulationError::MissingEnv(_)
            | SimulationError::Reasoning(_)
            | SimulationError::Embedding(_) => CliError::Backend(msg),
            SimulationError::Io(_) => CliError::Io(msg),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn config_extension(path: &Path) -> &'static str {
    if path.extension().is_some_and(|e| e == "json") {
        "json"
    } else {
        "toml"
    }
}

fn parse_config(bytes: &[u8], ext: &str) -> Result<SimulationConfig, CliError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::Invalid(format!("config is not UTF-8: {e}")))?;
    let c = if ext == "json" {
        SimulationConfig::from_json_str(text)?
    } else {
        SimulationConfig::from_toml_str(text)?
    };
    c.validate()?;
    Ok(c)
}

/// Copies `src` to `dst` unless both name the same file.
fn copy_into(src: &Path, dst: &Path) -> Result<(), CliError> {
    let same = match (src.canonicalize(), dst.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if !same {
        fs::copy(src, dst).map_err(|e| io_err(dst.display(), e))?;
    }
    Ok(())
}

type Providers = (Arc<dyn Embedder>, Arc<dyn ReasoningBackend>);

fn providers(config: &SimulationConfig) -> Result<Providers, CliError> {
    let embedder = make_embedder(config)?;
    if config.embedding.provider == EmbeddingProvider::Remote {
        embedder
            .embed("ping")
            .map_err(|e| CliError::Backend(format!("embedding endpoint unreachable: {e}")))?;
    }
    let backend: Arc<dyn ReasoningBackend> = match config.backend {
        BackendKind::Remote => {
            let client = make_chat_client(config)?;
            client
                .probe()
                .map_err(|e| CliError::Backend(format!("LLM endpoint unreachable: {e}")))?;
            Arc::new(RemoteBackend::new(client))
        }
        BackendKind::Scripted => make_backend(config, embedder.clone())?,
    };
    Ok((embedder, backend))
}

pub fn cmd_simulate(config_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let bytes = fs::read(config_path)
        .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", config_path.display())))?;
    let ext = config_extension(config_path);
    let mut config = parse_config(&bytes, ext)?;
    if config.personas.is_relative() {
        if let Some(dir) = config_path.parent() {
            config.personas = dir.join(&config.personas);
        }
    }
    let records = simulation::load_personas(&config.personas)?;
    let (embedder, backend) = providers(&config)?;
    let output = Simulation::initialize(config.clone(), &records, backend, embedder)?.run()?;

    fs::create_dir_all(out).map_err(|e| io_err(out.display(), e))?;
    let mut artifacts = output.write_artifacts(out)?;
    let config_file = format!("config.{ext}");
    copy_into(config_path, &out.join(&config_file))?;
    copy_into(&config.personas, &out.join(PERSONAS_COPY))?;
    artifacts.push(config_file.clone());
    artifacts.push(PERSONAS_COPY.to_string());

    let manifest = RunManifest {
        config_file,
        config_sha256: sha256_hex(&bytes),
        seed: config.seed,
        backend: config.backend,
        model: (config.backend == BackendKind::Remote).then(|| config.remote.model.clone()),
        embedding: embedding_id(&config),
        agent_count: records.len(),
        iterations: output.state.iteration,
        halt_reason: output.halt,
        artifacts,
    };
    manifest.write(out).map_err(|e| io_err(out.display(), e))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    pub run: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub agents: Option<usize>,
    pub restrictions: Vec<Restriction>,
    pub aggregators: Vec<Aggregator>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct AnalyzeOutput {
    pub analysis: LogAnalysis,
    pub report: SuperiorityReport,
    pub correlations: Vec<Vec<Option<f64>>>,
    pub files: Vec<PathBuf>,
}

fn read_events(path: &Path) -> Result<Vec<SimulationEvent>, CliError> {
    let f = File::open(path).map_err(|e| io_err(path.display(), e))?;
    events::read_jsonl(BufReader::new(f)).map_err(|e| match e {
        EventLogError::Schema { .. } => CliError::Invalid(format!("{}: {e}", path.display())),
        EventLogError::Io(e) => io_err(path.display(), e),
    })
}

/// Highest agent id mentioned anywhere in the log, plus one.
fn agents_in_log(events: &[SimulationEvent]) -> usize {
    events
        .iter()
        .flat_map(|e| {
            let target = (e.kind == fpsim_core::EventKind::Follow).then_some(e.target).flatten();
            e.agent.map(|a| a.0 as u64).into_iter().chain(target)
        })
        .max()
        .map_or(0, |m| m as usize + 1)
}

/// Latest `graph_iter_<k>.csv` in `dir`, if any.
fn final_snapshot(dir: &Path, agent_count: usize) -> Result<Option<SocialGraph>, CliError> {
    let mut k = 0;
    while dir.join(snapshot_file_name(k + 1)).exists() {
        k += 1;
    }
    let path = dir.join(snapshot_file_name(k));
    if !path.exists() {
        return Ok(None);
    }
    let f = File::open(&path).map_err(|e| io_err(path.display(), e))?;
    SocialGraph::read_csv(agent_count, BufReader::new(f))
        .map(Some)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalyzeOutput, CliError> {
    let events_path = match (&args.run, &args.events) {
        (_, Some(p)) => p.clone(),
        (Some(run), None) => run.join("events.jsonl"),
        (None, None) => return Err(CliError::Invalid("either --run or --events is required".into())),
    };
    if args.restrictions.is_empty() || args.aggregators.is_empty() {
        return Err(CliError::Invalid("--k and --agg need at least one value".into()));
    }
    let events = read_events(&events_path)?;
    let manifest = args.run.as_deref().and_then(|r| RunManifest::read(r).ok());
    let agent_count = args
        .agents
        .or(manifest.as_ref().map(|m| m.agent_count))
        .unwrap_or_else(|| agents_in_log(&events));

    let analysis = LogAnalysis::from_events(&events, agent_count).map_err(|e| match e {
        MetricsError::Io(e) => io_err(events_path.display(), e),
        e => CliError::Invalid(format!("{}: {e}", events_path.display())),
    })?;
    if let Some(run) = &args.run {
        if let Some(g) = final_snapshot(run, agent_count)? {
            if g != analysis.graph {
                return Err(CliError::Invalid(
                    "final graph snapshot disagrees with the follow events in the log".into(),
                ));
            }
        }
    }

    let report = SuperiorityReport::build(
        &analysis.attributes,
        &analysis.graph,
        &analysis.interactions,
        &args.aggregators,
        &args.restrictions,
    );
    let correlations = pearson_matrix(&analysis.attributes).map_err(|e| CliError::Invalid(e.to_string()))?;

    let out = args
        .out
        .clone()
        .or_else(|| args.run.clone())
        .unwrap_or_else(|| events_path.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&out).map_err(|e| io_err(out.display(), e))?;
    let metrics_io = |path: &Path, e: MetricsError| io_err(path.display(), e);

    let csv_path = out.join("report.csv");
    let f = File::create(&csv_path).map_err(|e| io_err(csv_path.display(), e))?;
    report.write_csv(BufWriter::new(f)).map_err(|e| metrics_io(&csv_path, e))?;

    let json_path = out.join("report.json");
    let json = report.to_json().map_err(|e| metrics_io(&json_path, e))?;
    fs::write(&json_path, json + "\n").map_err(|e| io_err(json_path.display(), e))?;

    let corr_path = out.join("correlations.csv");
    let f = File::create(&corr_path).map_err(|e| io_err(corr_path.display(), e))?;
    write_correlations_csv(BufWriter::new(f), &correlations).map_err(|e| metrics_io(&corr_path, e))?;

    Ok(AnalyzeOutput {
        analysis,
        report,
        correlations,
        files: vec![csv_path, json_path, corr_path],
    })
}

/// Tab-separated superiority table with a header row.
pub fn summary_tsv(report: &SuperiorityReport) -> String {
    let mut s = String::from("attribute\tside\taggregator\tk\tpercentage\teligible\n");
    for r in &report.rows {
        let pct = r.percentage.map_or("NA".to_string(), |p| format!("{p:.2}"));
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{pct}\t{}",
            r.attribute,
            r.side.name(),
            r.aggregator.name(),
            r.k,
            r.eligible
        );
    }
    s
}

/// Infers traits for every corpus record and writes a personas file.
/// Returns the number of personas written.
pub fn cmd_infer_personas(corpus: &Path, out: &Path, backend: BackendArg) -> Result<usize, CliError> {
    let f = File::open(corpus).map_err(|e| io_err(corpus.display(), e))?;
    let records = personas::read_records(BufReader::new(f)).map_err(|e| match e {
        PersonaFileError::Io(e) => io_err(corpus.display(), e),
        e => CliError::Invalid(format!("{}: {e}", corpus.display())),
    })?;
    if records.is_empty() {
        return Err(CliError::Invalid(format!("{}: corpus is empty", corpus.display())));
    }
    let config = SimulationConfig::default();
    let backend: Arc<dyn ReasoningBackend> = match backend {
        BackendArg::Scripted => Arc::new(ScriptedBackend::new(
            config.scripted.clone(),
            Arc::new(HashingEmbedder::new(config.embedding.dimension)),
        )),
        BackendArg::Remote => {
            let client = make_chat_client(&config)?;
            client
                .probe()
                .map_err(|e| CliError::Backend(format!("LLM endpoint unreachable: {e}")))?;
            Arc::new(RemoteBackend::new(client))
        }
    };

    let mut inferred = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        let corpus_texts = r.corpus.clone().unwrap_or_default();
        let p = backend
            .infer_persona(AgentId::from(i), &r.user_id, &r.ideology_label, &corpus_texts)
            .map_err(|e| match e {
                ReasoningError::EmptyCorpus => {
                    CliError::Invalid(format!("user {} has an empty corpus", r.user_id))
                }
                e => CliError::Backend(format!("user {}: {e}", r.user_id)),
            })?;
        inferred.push(PersonaRecord {
            traits: Some(p.traits),
            ..r
        });
    }
    let f = File::create(out).map_err(|e| io_err(out.display(), e))?;
    let mut w = BufWriter::new(f);
    personas::write_records(&mut w, &inferred)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(out.display(), e))?;
    Ok(inferred.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayVerdict {
    Match,
    /// 1-based line of the first difference; `None` marks a missing line.
    Diverged {
        line: usize,
        expected: Option<String>,
        found: Option<String>,
    },
}

fn first_difference(expected: &[u8], found: &[u8]) -> ReplayVerdict {
    let mut a = expected.split(|&b| b == b'\n');
    let mut b = found.split(|&b| b == b'\n');
    let mut line = 1;
    loop {
        match (a.next(), b.next()) {
            (None, None) => return ReplayVerdict::Match,
            (x, y) if x == y => line += 1,
            (x, y) => {
                return ReplayVerdict::Diverged {
                    line,
                    expected: x.map(|s| String::from_utf8_lossy(s).into_owned()),
                    found: y.map(|s| String::from_utf8_lossy(s).into_owned()),
                }
            }
        }
    }
}

pub fn cmd_replay(run: &Path) -> Result<ReplayVerdict, CliError> {
    let manifest = RunManifest::read(run)
        .map_err(|e| CliError::Invalid(format!("{}: unreadable manifest: {e}", run.display())))?;
    if manifest.backend != BackendKind::Scripted {
        return Err(CliError::Refused(format!(
            "run used the {:?} backend; only scripted runs are replayable",
            manifest.backend
        )));
    }
    let config_path = run.join(&manifest.config_file);
    let bytes = fs::read(&config_path).map_err(|e| io_err(config_path.display(), e))?;
    if sha256_hex(&bytes) != manifest.config_sha256 {
        return Err(CliError::Invalid(format!(
            "{} does not match the manifest hash",
            config_path.display()
        )));
    }
    let mut config = parse_config(&bytes, config_extension(&config_path))?;
    if config.embedding.provider != EmbeddingProvider::Hashing {
        return Err(CliError::Refused("run used a remote embedding provider; not replayable".into()));
    }
    config.personas = run.join(PERSONAS_COPY);
    let output = simulation::run(&config)?;
    let replayed = events::to_jsonl_bytes(&output.events);
    let events_path = run.join("events.jsonl");
    let recorded = fs::read(&events_path).map_err(|e| io_err(events_path.display(), e))?;
    Ok(first_difference(&replayed, &recorded))
}
