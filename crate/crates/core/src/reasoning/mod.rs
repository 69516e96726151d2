//! Agent reasoning: personas, prompt context, and the Choice-Reason-Content
//! decisions produced by a backend.
//!
//! Two backends implement [`ReasoningBackend`]: [`ScriptedBackend`], a seeded
//! persona policy used for tests and replayable runs, and [`RemoteBackend`],
//! which talks to any chat-completions compatible endpoint.

mod remote;
mod scripted;

pub use remote::{
    extract_first_json_object, parse_decision, parse_follow_reply, ChatClient, ChatMessage,
    ChatRequest, RemoteBackend, RemoteSettings, TransportError,
};
pub use scripted::{topic_vocabulary, ScriptedBackend, ScriptedPolicy};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{EngagementStats, MemoryItem, MemoryUnit, PostId, PostStore};
use crate::graph::AgentId;
use crate::rng::StreamRng;

/// The six actions offered to every agent, in prompt order.
pub const ACTIONS: [&str; 6] = ["publish", "reshare", "like", "dislike", "comment", "refrain"];

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("persona corpus is empty")]
    EmptyCorpus,
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub agent: AgentId,
    pub user_id: String,
    pub traits: String,
    pub ideology_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_corpus: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackEntry {
    pub post: PostId,
    pub body: String,
    pub engagement: EngagementStats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedItem {
    pub post: PostId,
    pub author: AgentId,
    pub author_label: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext {
    pub feedback_section: Vec<FeedbackEntry>,
    pub feed_section: Vec<FeedItem>,
    pub actions_section: [&'static str; 6],
}

impl PromptContext {
    pub fn in_feed(&self, post: PostId) -> bool {
        self.feed_section.iter().any(|f| f.post == post)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Publish,
    Reshare(PostId),
    Like(PostId),
    Dislike(PostId),
    Comment(PostId),
    Refrain,
}

impl Choice {
    pub fn target(self) -> Option<PostId> {
        match self {
            Choice::Reshare(p) | Choice::Like(p) | Choice::Dislike(p) | Choice::Comment(p) => Some(p),
            Choice::Publish | Choice::Refrain => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Choice::Publish => "Publish",
            Choice::Reshare(_) => "Reshare",
            Choice::Like(_) => "Like",
            Choice::Dislike(_) => "Dislike",
            Choice::Comment(_) => "Comment",
            Choice::Refrain => "Refrain",
        }
    }

    fn carries_content(self) -> bool {
        matches!(self, Choice::Publish | Choice::Comment(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub choice: Choice,
    pub reason: String,
    pub content: String,
}

impl Decision {
    pub fn refrain(reason: impl Into<String>) -> Self {
        Decision {
            choice: Choice::Refrain,
            reason: reason.into(),
            content: String::new(),
        }
    }

    pub fn validate(&self, ctx: &PromptContext) -> Result<(), ReasoningError> {
        if let Some(t) = self.choice.target() {
            if !ctx.in_feed(t) {
                return Err(ReasoningError::InvalidDecision(format!(
                    "post {t} was not in the feed"
                )));
            }
        }
        let has_content = !self.content.trim().is_empty();
        match (self.choice.carries_content(), has_content) {
            (true, false) => Err(ReasoningError::InvalidDecision(format!(
                "{} requires content",
                self.choice.name()
            ))),
            (false, true) => Err(ReasoningError::InvalidDecision(format!(
                "{} carries no content",
                self.choice.name()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub agent: AgentId,
    pub affinity: f64,
    pub summary: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FollowDecision {
    pub to_follow: Vec<AgentId>,
}

pub trait ReasoningBackend: Send + Sync {
    /// Short identifier recorded in run manifests.
    fn name(&self) -> &str;

    fn infer_persona(
        &self,
        agent: AgentId,
        user_id: &str,
        ideology_label: &str,
        corpus: &[String],
    ) -> Result<Persona, ReasoningError>;

    /// Always returns a decision that passes [`Decision::validate`].
    fn decide(&self, ctx: &PromptContext, persona: &Persona, rng: &mut StreamRng) -> Decision;

    /// Returns a subset of `candidates`.
    fn decide_follows(
        &self,
        persona: &Persona,
        candidates: &[Candidate],
        rng: &mut StreamRng,
    ) -> FollowDecision;
}

/// Assembles the prompt context: feedback from STM and LTM (latest snapshot,
/// newest first, at most `feedback_limit` entries), the feed as given, and
/// the fixed action list.
pub fn build_prompt(
    memory: &MemoryUnit,
    posts: &PostStore,
    feed: Vec<FeedItem>,
    feedback_limit: usize,
) -> PromptContext {
    let mut items: Vec<&MemoryItem> = memory.stm().iter().collect();
    for it in memory.ltm() {
        if !items.iter().any(|m| m.post == it.post) {
            items.push(it);
        }
    }
    items.sort_by(|a, b| {
        b.created_iteration
            .cmp(&a.created_iteration)
            .then(b.post.cmp(&a.post))
    });
    let feedback_section = items
        .into_iter()
        .take(feedback_limit)
        .filter_map(|m| {
            posts.get(m.post).map(|p| FeedbackEntry {
                post: m.post,
                body: p.body.clone(),
                engagement: m.engagement,
            })
        })
        .collect();
    PromptContext {
        feedback_section,
        feed_section: feed,
        actions_section: ACTIONS,
    }
}
