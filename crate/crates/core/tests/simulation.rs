use std::sync::{Arc, Mutex};

use fpsim_core::config::SimulationConfig;
use fpsim_core::embedding::HashingEmbedder;
use fpsim_core::events::{self, EventKind};
use fpsim_core::metrics::{LogAnalysis, NodalAttributes};
use fpsim_core::personas::{synthetic_roster, PersonaRecord};
use fpsim_core::reasoning::{
    Candidate, Choice, Decision, FollowDecision, Persona, PromptContext, ReasoningBackend,
    ReasoningError, ScriptedBackend,
};
use fpsim_core::rng::StreamRng;
use fpsim_core::simulation::{HaltReason, Simulation, SimulationError};
use fpsim_core::{AgentId, PostId};

type DecideFn = dyn Fn(u64, &Persona, &PromptContext) -> Decision + Send + Sync;

/// Backend whose decisions are a plain function of (iteration, persona, ctx).
struct Puppet {
    iteration: Mutex<u64>,
    decide: Box<DecideFn>,
    follow_all: bool,
}

impl Puppet {
    fn new(follow_all: bool, f: impl Fn(u64, &Persona, &PromptContext) -> Decision + Send + Sync + 'static) -> Self {
        Self {
            iteration: Mutex::new(0),
            decide: Box::new(f),
            follow_all,
        }
    }
}

impl ReasoningBackend for Puppet {
    fn name(&self) -> &str {
        "puppet"
    }

    fn infer_persona(&self, _: AgentId, _: &str, _: &str, _: &[String]) -> Result<Persona, ReasoningError> {
        Err(ReasoningError::Backend("not supported".into()))
    }

    fn decide(&self, ctx: &PromptContext, persona: &Persona, _: &mut StreamRng) -> Decision {
        let it = *self.iteration.lock().unwrap();
        (self.decide)(it, persona, ctx)
    }

    fn decide_follows(&self, _: &Persona, candidates: &[Candidate], _: &mut StreamRng) -> FollowDecision {
        FollowDecision {
            to_follow: if self.follow_all {
                candidates.iter().map(|c| c.agent).collect()
            } else {
                Vec::new()
            },
        }
    }
}

fn publish(text: &str) -> Decision {
    Decision {
        choice: Choice::Publish,
        reason: "test".into(),
        content: text.into(),
    }
}

fn config(seed: u64, max_iterations: u64) -> SimulationConfig {
    SimulationConfig {
        seed,
        max_iterations,
        ..Default::default()
    }
}

fn scripted(cfg: &SimulationConfig, roster: &[PersonaRecord]) -> Simulation {
    let embedder = Arc::new(HashingEmbedder::new(cfg.embedding.dimension));
    let backend = Arc::new(ScriptedBackend::new(cfg.scripted.clone(), embedder.clone()));
    Simulation::initialize(cfg.clone(), roster, backend, embedder).unwrap()
}

fn puppet_sim(n: usize, puppet: Puppet, cfg: SimulationConfig) -> (Simulation, Arc<Puppet>) {
    let puppet = Arc::new(puppet);
    let embedder = Arc::new(HashingEmbedder::default());
    let sim = Simulation::initialize(cfg, &synthetic_roster(n, 1), puppet.clone(), embedder).unwrap();
    (sim, puppet)
}

fn step(sim: &mut Simulation, puppet: &Puppet) {
    *puppet.iteration.lock().unwrap() = sim.state().iteration;
    sim.step().unwrap();
}

#[test]
fn initialize_builds_an_empty_world() {
    let cfg = config(3, 5);
    let sim = scripted(&cfg, &synthetic_roster(100, 3));
    let s = sim.state();
    assert_eq!(s.agent_count(), 100);
    assert_eq!(s.graph.edge_count(), 0);
    assert!(s.posts.is_empty());
    assert!(s.memories.iter().all(|m| m.stm().is_empty() && m.ltm().is_empty()));

    let embedder = Arc::new(HashingEmbedder::default());
    let backend = Arc::new(ScriptedBackend::new(cfg.scripted.clone(), embedder.clone()));
    let err = Simulation::initialize(cfg.clone(), &synthetic_roster(1, 3), backend, embedder);
    assert!(matches!(err, Err(SimulationError::TooFewAgents(1))));
}

#[test]
fn personas_without_traits_are_inferred() {
    let cfg = config(1, 1);
    let mut roster = synthetic_roster(3, 1);
    roster[2].traits = None;
    roster[2].corpus = Some(vec!["#maga rally tonight".into(), "#maga forever".into()]);
    let sim = scripted(&cfg, &roster);
    assert!(sim.state().personas[2].traits.contains("#maga"));
}

#[test]
fn first_iteration_sees_empty_feeds() {
    let cfg = config(5, 1);
    let mut sim = scripted(&cfg, &synthetic_roster(10, 5));
    let turns = sim.operational_phase();
    assert!(turns.iter().all(|t| t.feed.is_empty()));
    sim.interaction_phase(turns).unwrap();
    assert!(sim.state().exposure_count.iter().all(|&e| e == 0));
}

#[test]
fn zero_feed_size_means_no_exposure() {
    let cfg = SimulationConfig {
        feed_size: 0,
        ..config(9, 6)
    };
    let out = scripted(&cfg, &synthetic_roster(12, 9)).run().unwrap();
    assert!(out.state.exposure_count.iter().all(|&e| e == 0));
    assert!(out
        .events
        .iter()
        .filter(|e| e.kind.is_action())
        .all(|e| matches!(e.kind, EventKind::Publish | EventKind::Refrain)));
}

#[test]
fn refraining_world_only_advances_the_clock() {
    let (mut sim, p) = puppet_sim(6, Puppet::new(false, |_, _, _| Decision::refrain("quiet")), config(0, 10));
    step(&mut sim, &p);
    step(&mut sim, &p);
    let s = sim.state();
    assert_eq!(s.iteration, 2);
    assert_eq!(s.graph.edge_count(), 0);
    assert!(s.posts.is_empty());
    assert_eq!(s.duplicate_counter, 0);
}

#[test]
fn reshare_bookkeeping() {
    let decide = |it: u64, persona: &Persona, ctx: &PromptContext| match (it, persona.agent.0) {
        (0, 0) => publish("original thought here"),
        (1, 1) => Decision {
            choice: Choice::Reshare(ctx.feed_section[0].post),
            reason: "agree".into(),
            content: String::new(),
        },
        _ => Decision::refrain("quiet"),
    };
    let (mut sim, p) = puppet_sim(3, Puppet::new(false, decide), config(0, 10));
    step(&mut sim, &p);
    step(&mut sim, &p);
    let s = sim.state();
    let stats = s.posts.engagement(PostId(0)).unwrap();
    assert_eq!(stats.reshares, 1);
    assert_eq!(s.adoption_count[1], 1);
    assert_eq!(s.interactions.get(AgentId(1), AgentId(0)), 1);
    assert_eq!(s.posts.len(), 2);
    assert_eq!(s.posts.get(PostId(1)).unwrap().body, "original thought here");
    // the author's memory carries the refreshed snapshot
    let item = s.memories[0].stm().iter().chain(s.memories[0].ltm()).find(|m| m.post == PostId(0)).unwrap();
    assert_eq!(item.engagement.reshares, 1);
    assert!(s.adoption_count.iter().zip(&s.exposure_count).all(|(a, e)| a <= e));
}

#[test]
fn same_iteration_twins_are_not_duplicates() {
    let decide = |_: u64, persona: &Persona, _: &PromptContext| {
        if persona.agent.0 < 2 {
            publish("identical words")
        } else {
            Decision::refrain("quiet")
        }
    };
    let (mut sim, p) = puppet_sim(4, Puppet::new(false, decide), config(0, 10));
    step(&mut sim, &p);
    assert_eq!(sim.state().duplicate_counter, 0);
    step(&mut sim, &p);
    assert_eq!(sim.state().duplicate_counter, 2);
}

#[test]
fn fixed_text_run_halts_on_saturation() {
    let mut cfg = config(11, 100);
    cfg.scripted.post_prob = 1.0;
    cfg.scripted.fixed_content = Some("the one and only post".into());
    let out = scripted(&cfg, &synthetic_roster(20, 11)).run().unwrap();
    // iteration 0: 20 fresh originals; iteration 1: 20 repeats of them
    assert_eq!(out.halt, HaltReason::Saturation);
    assert_eq!(out.state.iteration, 2);
    assert_eq!(out.state.duplicate_counter, 20);
    let halt = out.events.last().unwrap();
    assert_eq!(halt.kind, EventKind::Halt);
    assert_eq!(halt.reason.as_deref(), Some("saturation"));
}

#[test]
fn zero_iterations_logs_only_the_halt() {
    let out = scripted(&config(1, 0), &synthetic_roster(5, 1)).run().unwrap();
    assert_eq!(out.events.len(), 1);
    assert_eq!(out.events[0].kind, EventKind::Halt);
    assert_eq!(out.events[0].reason.as_deref(), Some("iteration-cap"));
    assert_eq!(out.halt, HaltReason::IterationCap);
}

#[test]
fn runs_are_replayable_and_parallelism_is_invisible() {
    let roster = synthetic_roster(30, 4);
    let cfg = config(4, 8);
    let a = events::to_jsonl_bytes(&scripted(&cfg, &roster).run().unwrap().events);
    let b = events::to_jsonl_bytes(&scripted(&cfg, &roster).run().unwrap().events);
    assert_eq!(a, b);
    let seq = SimulationConfig {
        parallel: false,
        ..cfg.clone()
    };
    let c = events::to_jsonl_bytes(&scripted(&seq, &roster).run().unwrap().events);
    assert_eq!(a, c);
    let other = SimulationConfig { seed: 5, ..cfg };
    let d = events::to_jsonl_bytes(&scripted(&other, &roster).run().unwrap().events);
    assert_ne!(a, d);
}

#[test]
fn log_reconciles_with_state() {
    let roster = synthetic_roster(40, 8);
    let out = scripted(&config(8, 12), &roster).run().unwrap();
    let s = &out.state;

    // snapshot semantics: reactions only target posts from earlier iterations
    for e in out.events.iter().filter(|e| e.kind.is_action()) {
        if let Some(t) = e.target {
            assert!(s.posts.get(PostId(t)).unwrap().iteration < e.iteration);
            assert!(e.feed.as_ref().unwrap().contains(&PostId(t)));
        }
    }
    // edges only grow
    for w in out.snapshots.windows(2) {
        assert!(w[0].iter().all(|e| w[1].contains(e)));
    }
    assert_eq!(out.snapshots.len() as u64, s.iteration + 1);

    let bytes = events::to_jsonl_bytes(&out.events);
    let parsed = events::read_jsonl(bytes.as_slice()).unwrap();
    let replay = LogAnalysis::from_events(&parsed, roster.len()).unwrap();
    assert_eq!(replay.graph, s.graph);
    assert_eq!(replay.exposure_count, s.exposure_count);
    assert_eq!(replay.adoption_count, s.adoption_count);
    assert_eq!(replay.interactions, s.interactions);
    assert_eq!(replay.attributes, NodalAttributes::from_state(s));
    assert!(s.exposure_count.iter().sum::<u64>() > 0);
    assert!(s.adoption_count.iter().sum::<u64>() > 0);
}

#[test]
fn follow_everyone_respects_candidate_cap() {
    let cfg = SimulationConfig {
        candidate_count: 3,
        ..config(0, 10)
    };
    let (mut sim, p) = puppet_sim(8, Puppet::new(true, |_, _, _| Decision::refrain("quiet")), cfg);
    step(&mut sim, &p);
    let g = &sim.state().graph;
    assert_eq!(g.edge_count(), 8 * 3);
    step(&mut sim, &p);
    assert_eq!(sim.state().graph.edge_count(), 8 * 6);
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = scripted(&config(2, 3), &synthetic_roster(10, 2)).run().unwrap();
    let files = out.write_artifacts(dir.path()).unwrap();
    assert!(files.contains(&"graph_iter_0.csv".to_string()));
    assert!(files.contains(&"graph_iter_3.csv".to_string()));
    for f in &files {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let text = std::fs::read_to_string(dir.path().join("graph_iter_0.csv")).unwrap();
    assert_eq!(text, "follower,followee\n");
}
