//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use fpsim_core::metrics::AgentAttributes;
use fpsim_core::personas::synthetic_roster;
use fpsim_core::reasoning::ScriptedBackend;
use fpsim_core::{AgentId, HashingEmbedder, InteractionMatrix, NodalAttributes, Simulation, SimulationConfig, SocialGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random directed graph with edge probability `p`, random attributes and
/// interaction counts.
pub fn random_world(n: usize, p: f64, seed: u64) -> (SocialGraph, NodalAttributes, InteractionMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = SocialGraph::with_agents(n);
    let mut m = InteractionMatrix::new(n);
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(p) {
                g.follow(AgentId::from(a), AgentId::from(b)).unwrap();
                m.set(AgentId::from(a), AgentId::from(b), rng.gen_range(0..10));
            }
        }
    }
    let agents = (0..n)
        .map(|i| {
            let a = AgentId::from(i);
            let not = rng.gen_range(0..20);
            let ttr = rng.gen_range(0..50);
            AgentAttributes {
                in_deg: g.in_degree(a).unwrap() as u64,
                out_deg: g.out_degree(a).unwrap() as u64,
                nt: not + rng.gen_range(0..10),
                not,
                ttr,
                rpt: if not > 0 { ttr as f64 / not as f64 } else { 0.0 },
                iar: rng.gen(),
            }
        })
        .collect();
    (g, NodalAttributes { agents }, m)
}

/// Scripted simulation of `n` agents after `warmup` iterations.
pub fn warmed_simulation(n: usize, warmup: u64) -> Simulation {
    let config = SimulationConfig {
        seed: 1,
        max_iterations: u64::MAX,
        ..Default::default()
    };
    let embedder = Arc::new(HashingEmbedder::new(config.embedding.dimension));
    let backend = Arc::new(ScriptedBackend::new(config.scripted.clone(), embedder.clone()));
    let mut sim = Simulation::initialize(config, &synthetic_roster(n, 1), backend, embedder).unwrap();
    for _ in 0..warmup {
        sim.step().unwrap();
    }
    sim
}
