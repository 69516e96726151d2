//! Generative agent-based social network simulation with friendship-paradox
//! analysis.
//!
//! Agents with static personas publish, react to a retrieval-based feed and
//! follow one another; the resulting follower-followee network is analyzed
//! for neighbor superiority over degree, activity, virality and
//! susceptibility attributes.

pub mod config;
pub mod content;
pub mod embedding;
pub mod events;
pub mod graph;
pub mod metrics;
pub mod personas;
pub mod reasoning;
pub mod rng;
pub mod simulation;

pub use config::{BackendKind, EmbeddingProvider, SimulationConfig};
pub use content::{EngagementStats, MemoryItem, MemoryUnit, Post, PostId, PostKind, PostStore};
pub use embedding::{Embedder, Embedding, HashingEmbedder, VectorStore};
pub use events::{EventKind, SimulationEvent};
pub use graph::{AgentId, Edge, SocialGraph};
pub use metrics::{
    Aggregator, Attribute, InteractionMatrix, LogAnalysis, NodalAttributes, Restriction, Side,
    SuperiorityReport,
};
pub use personas::PersonaRecord;
pub use reasoning::{Choice, Decision, Persona, ReasoningBackend};
pub use simulation::{HaltReason, RunOutput, Simulation, SimulationError, SimulationState};
