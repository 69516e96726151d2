//! Three-phase simulation loop.
//!
//! Each iteration runs an operational phase, where every agent decides
//! against the iteration-start snapshot, followed by a sequential
//! interaction phase that applies decisions in ascending agent order,
//! runs who-to-follow, indexes new posts, delivers engagement feedback and
//! maintains memories. The run halts once the number of original posts
//! that near-duplicate earlier originals reaches the agent count, or at
//! the iteration cap.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, ConfigError, EmbeddingProvider, SimulationConfig};
use crate::content::{ContentError, MemoryItem, MemoryUnit, PostId, PostKind, PostStore};
use crate::embedding::{AgentCentroids, Embedder, Embedding, EmbeddingError, HashingEmbedder, RemoteEmbedder, VectorStore};
use crate::events::{self, EventKind, EventLog, SimulationEvent};
use crate::graph::{snapshot_file_name, AgentId, Edge, GraphError, SocialGraph};
use crate::metrics::InteractionMatrix;
use crate::personas::{self, PersonaFileError, PersonaRecord};
use crate::reasoning::{
    build_prompt, Candidate, ChatClient, Choice, Decision, FeedItem, Persona, ReasoningBackend,
    ReasoningError, RemoteBackend, ScriptedBackend,
};
use crate::rng::{self, Purpose};

pub const ENV_LLM_ENDPOINT: &str = "LLM_ENDPOINT";
pub const ENV_LLM_API_KEY: &str = "LLM_API_KEY";
pub const ENV_EMBED_ENDPOINT: &str = "EMBED_ENDPOINT";

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("personas file {path}: {source}")]
    Personas {
        path: String,
        source: PersonaFileError,
    },
    #[error("need at least 2 personas, found {0}")]
    TooFewAgents(usize),
    #[error("environment variable {0} is required for the remote provider")]
    MissingEnv(&'static str),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Content(#[from] ContentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltReason {
    Saturation,
    IterationCap,
}

impl HaltReason {
    pub fn as_str(self) -> &'static str {
        match self {
            HaltReason::Saturation => "saturation",
            HaltReason::IterationCap => "iteration-cap",
        }
    }
}

/// Mutable world state. Every field is a pure function of the config and
/// seed under the scripted backend.
#[derive(Debug, Clone)]
pub struct SimulationState {
    pub personas: Vec<Persona>,
    pub graph: SocialGraph,
    pub posts: PostStore,
    pub memories: Vec<MemoryUnit>,
    /// Every post, used for feed retrieval.
    pub store: VectorStore,
    /// Original posts only, used for near-duplicate detection.
    pub originals: VectorStore,
    pub centroids: AgentCentroids,
    pub authored: Vec<Vec<PostId>>,
    pub exposure_count: Vec<u64>,
    pub adoption_count: Vec<u64>,
    pub interactions: InteractionMatrix,
    pub duplicate_counter: u64,
    /// Completed iterations.
    pub iteration: u64,
}

impl SimulationState {
    pub fn agent_count(&self) -> usize {
        self.personas.len()
    }
}

/// One agent's operational-phase output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentTurn {
    pub agent: AgentId,
    pub feed: Vec<PostId>,
    pub decision: Decision,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<SimulationEvent>,
    pub state: SimulationState,
    /// Edge list after `k` completed iterations, for `k = 0..=iterations`.
    pub snapshots: Vec<Vec<Edge>>,
    pub halt: HaltReason,
}

impl RunOutput {
    /// Writes `events.jsonl`, `posts.jsonl` and `graph_iter_<k>.csv`;
    /// returns the file names written.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Vec<String>, SimulationError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut w = BufWriter::new(File::create(dir.join("events.jsonl"))?);
        events::write_jsonl(&mut w, &self.events)?;
        w.flush()?;
        written.push("events.jsonl".to_string());

        let mut w = BufWriter::new(File::create(dir.join("posts.jsonl"))?);
        self.state.posts.write_jsonl(&mut w)?;
        w.flush()?;
        written.push("posts.jsonl".to_string());

        let n = self.state.agent_count();
        for (k, edges) in self.snapshots.iter().enumerate() {
            let name = snapshot_file_name(k);
            let g = SocialGraph::import_edge_list(n, edges)?;
            let mut w = BufWriter::new(File::create(dir.join(&name))?);
            g.write_csv(&mut w)?;
            w.flush()?;
            written.push(name);
        }
        Ok(written)
    }
}

#[derive(Clone)]
pub struct Simulation {
    config: SimulationConfig,
    backend: Arc<dyn ReasoningBackend>,
    embedder: Arc<dyn Embedder>,
    state: SimulationState,
    log: EventLog,
    snapshots: Vec<Vec<Edge>>,
}

/// Builds the embedder selected in the config.
pub fn make_embedder(config: &SimulationConfig) -> Result<Arc<dyn Embedder>, SimulationError> {
    Ok(match config.embedding.provider {
        EmbeddingProvider::Hashing => Arc::new(HashingEmbedder::new(config.embedding.dimension)),
        EmbeddingProvider::Remote => {
            let endpoint = std::env::var(ENV_EMBED_ENDPOINT)
                .map_err(|_| SimulationError::MissingEnv(ENV_EMBED_ENDPOINT))?;
            Arc::new(RemoteEmbedder::new(
                endpoint,
                config.embedding.dimension,
                Duration::from_secs(config.embedding.timeout_secs),
            ))
        }
    })
}

/// Chat client for the remote backend, configured from the environment.
pub fn make_chat_client(config: &SimulationConfig) -> Result<ChatClient, SimulationError> {
    let endpoint =
        std::env::var(ENV_LLM_ENDPOINT).map_err(|_| SimulationError::MissingEnv(ENV_LLM_ENDPOINT))?;
    let key = std::env::var(ENV_LLM_API_KEY).ok();
    Ok(ChatClient::new(endpoint, key, config.remote.clone()))
}

pub fn make_backend(
    config: &SimulationConfig,
    embedder: Arc<dyn Embedder>,
) -> Result<Arc<dyn ReasoningBackend>, SimulationError> {
    Ok(match config.backend {
        BackendKind::Scripted => Arc::new(ScriptedBackend::new(config.scripted.clone(), embedder)),
        BackendKind::Remote => Arc::new(RemoteBackend::new(make_chat_client(config)?)),
    })
}

pub fn load_personas(path: &Path) -> Result<Vec<PersonaRecord>, SimulationError> {
    let wrap = |source| SimulationError::Personas {
        path: path.display().to_string(),
        source,
    };
    let f = File::open(path).map_err(|e| wrap(PersonaFileError::Io(e)))?;
    personas::read_personas(BufReader::new(f)).map_err(wrap)
}

/// Loads personas and providers from the config and runs to completion.
pub fn run(config: &SimulationConfig) -> Result<RunOutput, SimulationError> {
    config.validate()?;
    let records = load_personas(&config.personas)?;
    let embedder = make_embedder(config)?;
    let backend = make_backend(config, embedder.clone())?;
    Simulation::initialize(config.clone(), &records, backend, embedder)?.run()
}

impl Simulation {
    pub fn initialize(
        config: SimulationConfig,
        records: &[PersonaRecord],
        backend: Arc<dyn ReasoningBackend>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, SimulationError> {
        config.validate()?;
        if records.len() < 2 {
            return Err(SimulationError::TooFewAgents(records.len()));
        }
        let mut personas = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let agent = AgentId::from(i);
            let persona = match r.traits.as_deref().filter(|t| !t.trim().is_empty()) {
                Some(traits) => Persona {
                    agent,
                    user_id: r.user_id.clone(),
                    traits: traits.to_string(),
                    ideology_label: r.ideology_label.clone(),
                    source_corpus: r.corpus.clone(),
                },
                None => backend.infer_persona(
                    agent,
                    &r.user_id,
                    &r.ideology_label,
                    r.corpus.as_deref().unwrap_or_default(),
                )?,
            };
            personas.push(persona);
        }
        let texts: Vec<&str> = personas.iter().map(|p| p.traits.as_str()).collect();
        let persona_vectors = embedder.embed_batch(&texts)?;
        let n = personas.len();
        let state = SimulationState {
            graph: SocialGraph::with_agents(n),
            posts: PostStore::new(),
            memories: vec![MemoryUnit::new(); n],
            store: VectorStore::new(),
            originals: VectorStore::new(),
            centroids: AgentCentroids::new(persona_vectors),
            authored: vec![Vec::new(); n],
            exposure_count: vec![0; n],
            adoption_count: vec![0; n],
            interactions: InteractionMatrix::new(n),
            duplicate_counter: 0,
            iteration: 0,
            personas,
        };
        Ok(Self {
            config,
            backend,
            embedder,
            snapshots: vec![state.graph.export_edge_list()],
            state,
            log: EventLog::new(),
        })
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn events(&self) -> &[SimulationEvent] {
        self.log.events()
    }

    /// Mean of the agent's latest post embeddings, or its persona.
    fn feed_query(&self, agent: AgentId) -> Embedding {
        let s = &self.state;
        let recent = &s.authored[agent.index()];
        let window = &recent[recent.len().saturating_sub(self.config.query_window)..];
        if !window.is_empty() {
            let mut sum = vec![0.0; self.embedder.dimension()];
            for p in window {
                if let Some(v) = s.store.get(*p) {
                    for (acc, x) in sum.iter_mut().zip(v.vector.as_slice()) {
                        *acc += x;
                    }
                }
            }
            if let Ok(q) = Embedding::from_raw(sum) {
                return q;
            }
        }
        s.centroids.persona(agent).clone()
    }

    fn turn(&self, agent: AgentId) -> AgentTurn {
        let s = &self.state;
        let query = self.feed_query(agent);
        let feed = s.store.top_k_similar(&query, self.config.feed_size, Some(agent));
        let items = feed
            .iter()
            .filter_map(|&p| {
                let post = s.posts.get(p)?;
                Some(FeedItem {
                    post: p,
                    author: post.author,
                    author_label: s.personas[post.author.index()].ideology_label.clone(),
                    body: post.body.clone(),
                })
            })
            .collect();
        let ctx = build_prompt(&s.memories[agent.index()], &s.posts, items, self.config.feedback_limit);
        let persona = &s.personas[agent.index()];
        let mut rng = rng::stream(self.config.seed, agent.0 as u64, s.iteration, Purpose::Decide);
        let mut decision = self.backend.decide(&ctx, persona, &mut rng);
        if let Err(e) = decision.validate(&ctx) {
            log::warn!("agent {agent}: discarding invalid decision: {e}");
            decision = Decision::refrain("invalid-decision");
        }
        AgentTurn {
            agent,
            feed,
            decision,
        }
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        if self.config.backend == BackendKind::Remote {
            match rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.remote.max_in_flight)
                .build()
            {
                Ok(pool) => return pool.install(f),
                Err(e) => log::warn!("falling back to the global pool: {e}"),
            }
        }
        f()
    }

    /// Every agent decides against the current snapshot. Results are in
    /// ascending agent order regardless of execution strategy.
    pub fn operational_phase(&self) -> Vec<AgentTurn> {
        let agents: Vec<AgentId> = self.state.graph.agents().collect();
        if self.config.parallel {
            self.in_pool(|| agents.par_iter().map(|&a| self.turn(a)).collect())
        } else {
            agents.iter().map(|&a| self.turn(a)).collect()
        }
    }

    /// Top `candidate_count` unfollowed agents by affinity, ties by id.
    fn follow_candidates(&self, agent: AgentId, centroids: &[Vec<f64>]) -> Vec<Candidate> {
        let s = &self.state;
        let me = &centroids[agent.index()];
        let mut scored: Vec<(f64, AgentId)> = s
            .graph
            .agents()
            .filter(|&b| b != agent && !s.graph.is_following(agent, b))
            .map(|b| {
                let aff = me.iter().zip(&centroids[b.index()]).map(|(x, y)| x * y).sum();
                (aff, b)
            })
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        scored.truncate(self.config.candidate_count);
        scored
            .into_iter()
            .map(|(affinity, b)| {
                let p = &s.personas[b.index()];
                Candidate {
                    agent: b,
                    affinity,
                    summary: format!("{} ({})", p.traits, p.ideology_label),
                }
            })
            .collect()
    }

    /// Applies decisions, grows the graph, indexes new posts and updates
    /// memories. Runs strictly sequentially.
    pub fn interaction_phase(&mut self, turns: Vec<AgentTurn>) -> Result<(), SimulationError> {
        let iter = self.state.iteration;
        let seed = self.config.seed;
        let mut new_posts: Vec<PostId> = Vec::new();
        let mut touched: Vec<PostId> = Vec::new();

        // (1) actions
        for t in turns {
            let a = t.agent;
            let s = &mut self.state;
            s.exposure_count[a.index()] += t.feed.len() as u64;
            let d = t.decision;
            let kind = match d.choice {
                Choice::Publish => EventKind::Publish,
                Choice::Reshare(_) => EventKind::Reshare,
                Choice::Like(_) => EventKind::Like,
                Choice::Dislike(_) => EventKind::Dislike,
                Choice::Comment(_) => EventKind::Comment,
                Choice::Refrain => EventKind::Refrain,
            };
            let mut ev = SimulationEvent::new(iter, Some(a), kind);
            ev.reason = Some(d.reason);
            ev.feed = Some(t.feed);
            if let Some(target) = d.choice.target() {
                let author = s.posts.get(target).map(|p| p.author).ok_or_else(|| {
                    ContentError::InvalidPost {
                        id: target,
                        reason: "reaction to unknown post".into(),
                    }
                })?;
                let stats = s.posts.engagement_mut(target).expect("post exists");
                match d.choice {
                    Choice::Reshare(_) => stats.reshares += 1,
                    Choice::Like(_) => stats.likes += 1,
                    Choice::Dislike(_) => stats.dislikes += 1,
                    Choice::Comment(_) => stats.comments += 1,
                    _ => unreachable!(),
                }
                s.interactions.record(a, author);
                if matches!(d.choice, Choice::Reshare(_)) {
                    s.adoption_count[a.index()] += 1;
                }
                if !touched.contains(&target) {
                    touched.push(target);
                }
                ev.target = Some(target.0);
            }
            let created = match d.choice {
                Choice::Publish => Some((PostKind::Original, d.content.clone())),
                Choice::Reshare(t) => {
                    let body = s.posts.get(t).map(|p| p.body.clone()).unwrap_or_default();
                    Some((PostKind::Reshare(t), body))
                }
                Choice::Comment(t) => Some((PostKind::Comment(t), d.content.clone())),
                _ => None,
            };
            if let Some((pk, body)) = created {
                let id = s.posts.create(a, iter, pk, body)?;
                new_posts.push(id);
                ev.post = Some(id);
                ev.content = Some(s.posts.get(id).expect("just created").body.clone());
            }
            self.log.push(ev);
        }

        // (2) who-to-follow against the iteration-start store
        let centroids: Vec<Vec<f64>> = self
            .state
            .graph
            .agents()
            .map(|a| self.state.centroids.centroid(a))
            .collect();
        let agents: Vec<AgentId> = self.state.graph.agents().collect();
        let choose = |a: AgentId| {
            let cands = self.follow_candidates(a, &centroids);
            let persona = &self.state.personas[a.index()];
            let mut rng = rng::stream(seed, a.0 as u64, iter, Purpose::Follow);
            let picked = self.backend.decide_follows(persona, &cands, &mut rng);
            picked
                .to_follow
                .into_iter()
                .filter(|b| cands.iter().any(|c| c.agent == *b))
                .collect::<Vec<_>>()
        };
        let follows: Vec<Vec<AgentId>> = if self.config.parallel {
            self.in_pool(|| agents.par_iter().map(|&a| choose(a)).collect())
        } else {
            agents.iter().map(|&a| choose(a)).collect()
        };
        for (a, picked) in agents.iter().zip(follows) {
            for b in picked {
                if self.state.graph.follow(*a, b)? {
                    let mut ev = SimulationEvent::new(iter, Some(*a), EventKind::Follow);
                    ev.target = Some(b.0 as u64);
                    self.log.push(ev);
                }
            }
        }

        // (3) index new posts; duplicates judged against the iteration-start corpus
        let s = &mut self.state;
        let bodies: Vec<&str> = new_posts
            .iter()
            .map(|p| s.posts.get(*p).expect("exists").body.as_str())
            .collect();
        let vectors = self.embedder.embed_batch(&bodies)?;
        let mut fresh_originals = Vec::new();
        for (&pid, v) in new_posts.iter().zip(vectors) {
            let post = s.posts.get(pid).expect("exists");
            let author = post.author;
            if post.kind == PostKind::Original {
                if s.originals.is_near_duplicate(&v, self.config.duplicate_threshold) {
                    s.duplicate_counter += 1;
                }
                fresh_originals.push((pid, author, v.clone()));
            }
            s.centroids.add(author, &v);
            s.authored[author.index()].push(pid);
            s.store.insert(pid, author, iter, v);
        }
        for (pid, author, v) in fresh_originals {
            s.originals.insert(pid, author, iter, v);
        }

        // (4) engagement feedback
        for &pid in &new_posts {
            let post = s.posts.get(pid).expect("exists");
            s.memories[post.author.index()].record(MemoryItem {
                post: pid,
                engagement: *s.posts.engagement(pid).expect("exists"),
                created_iteration: iter,
            });
        }
        for &pid in &touched {
            let author = s.posts.get(pid).expect("exists").author;
            let stats = *s.posts.engagement(pid).expect("exists");
            s.memories[author.index()].refresh(pid, stats);
        }

        // (5) promote then decay
        for a in 0..s.agent_count() {
            let agent = AgentId::from(a);
            let mem = &mut s.memories[a];
            let before: Vec<PostId> = mem.ltm().iter().map(|m| m.post).collect();
            for pid in mem.promote_to_ltm(self.config.ltm_threshold) {
                if !before.contains(&pid) {
                    let mut ev = SimulationEvent::new(iter, Some(agent), EventKind::Promotion);
                    ev.target = Some(pid.0);
                    ev.engagement = s.posts.engagement(pid).copied();
                    self.log.push(ev);
                }
            }
            let mut rng = rng::stream(seed, a as u64, iter, Purpose::Decay);
            for pid in mem.decay_step(iter, self.config.half_life, &mut rng) {
                let mut ev = SimulationEvent::new(iter, Some(agent), EventKind::Decay);
                ev.target = Some(pid.0);
                self.log.push(ev);
            }
        }

        s.iteration += 1;
        self.snapshots.push(s.graph.export_edge_list());
        Ok(())
    }

    pub fn check_stop(&self) -> Option<HaltReason> {
        let s = &self.state;
        if s.duplicate_counter >= s.agent_count() as u64 {
            Some(HaltReason::Saturation)
        } else if s.iteration >= self.config.max_iterations {
            Some(HaltReason::IterationCap)
        } else {
            None
        }
    }

    /// Runs one full iteration.
    pub fn step(&mut self) -> Result<(), SimulationError> {
        let turns = self.operational_phase();
        self.interaction_phase(turns)
    }

    pub fn run(mut self) -> Result<RunOutput, SimulationError> {
        let halt = loop {
            if let Some(reason) = self.check_stop() {
                break reason;
            }
            self.step()?;
            log::debug!(
                "iteration {} done: {} posts, {} edges, {} duplicates",
                self.state.iteration,
                self.state.posts.len(),
                self.state.graph.edge_count(),
                self.state.duplicate_counter
            );
        };
        let mut ev = SimulationEvent::new(self.state.iteration, None, EventKind::Halt);
        ev.reason = Some(halt.as_str().to_string());
        self.log.push(ev);
        Ok(RunOutput {
            events: self.log.into_events(),
            state: self.state,
            snapshots: self.snapshots,
            halt,
        })
    }
}
