//! Posts, engagement counters and the per-agent STM/LTM memory unit.
//!
//! An STM item is removed during decay with probability `1 - (p + r) / 2`,
//! where `p` is the item's engagement normalized by the largest engagement
//! currently in STM and `r = 2^(-age / half_life)`. Items whose `p`
//! strictly exceeds the LTM threshold are copied into LTM before decay runs.

use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PostId(pub u64);

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostKind {
    Original,
    Reshare(PostId),
    Comment(PostId),
}

impl PostKind {
    pub fn target(self) -> Option<PostId> {
        match self {
            PostKind::Original => None,
            PostKind::Reshare(t) | PostKind::Comment(t) => Some(t),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PostKind::Original => "original",
            PostKind::Reshare(_) => "reshare",
            PostKind::Comment(_) => "comment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub id: PostId,
    pub author: AgentId,
    pub iteration: u64,
    pub body: String,
    pub kind: PostKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementStats {
    pub reshares: u64,
    pub likes: u64,
    pub dislikes: u64,
    pub comments: u64,
}

impl EngagementStats {
    pub fn total(&self) -> u64 {
        self.reshares + self.likes + self.dislikes + self.comments
    }
}

#[derive(Debug, Error)]
pub enum ContentError {
    #[error("post {0} is not in short-term memory")]
    NotInStm(PostId),
    #[error("item created at iteration {created} is newer than iteration {now}")]
    NegativeAge { created: u64, now: u64 },
    #[error("post {id}: {reason}")]
    InvalidPost { id: PostId, reason: String },
    #[error("posts.jsonl line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only post table indexed by `PostId`.
#[derive(Debug, Clone, Default)]
pub struct PostStore {
    posts: Vec<Post>,
    engagement: Vec<EngagementStats>,
}

impl PostStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn next_id(&self) -> PostId {
        PostId(self.posts.len() as u64)
    }

    pub fn get(&self, id: PostId) -> Option<&Post> {
        self.posts.get(id.0 as usize)
    }

    pub fn engagement(&self, id: PostId) -> Option<&EngagementStats> {
        self.engagement.get(id.0 as usize)
    }

    pub fn engagement_mut(&mut self, id: PostId) -> Option<&mut EngagementStats> {
        self.engagement.get_mut(id.0 as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Post> {
        self.posts.iter()
    }

    /// Allocates the next id and stores the post after validating its
    /// target and body.
    pub fn create(
        &mut self,
        author: AgentId,
        iteration: u64,
        kind: PostKind,
        body: String,
    ) -> Result<PostId, ContentError> {
        let id = self.next_id();
        if let Some(target) = kind.target() {
            match self.get(target) {
                Some(t) if t.iteration <= iteration => {}
                _ => {
                    return Err(ContentError::InvalidPost {
                        id,
                        reason: format!("target {target} does not exist"),
                    })
                }
            }
        }
        if !matches!(kind, PostKind::Reshare(_)) && body.trim().is_empty() {
            return Err(ContentError::InvalidPost {
                id,
                reason: "empty body".into(),
            });
        }
        self.posts.push(Post {
            id,
            author,
            iteration,
            body,
            kind,
        });
        self.engagement.push(EngagementStats::default());
        Ok(id)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), ContentError> {
        for p in &self.posts {
            let rec = PostRecord::from(p);
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, ContentError> {
        let mut store = Self::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PostRecord = serde_json::from_str(&line)
                .map_err(|source| ContentError::Parse { line: i + 1, source })?;
            let kind = rec.kind()?;
            let id = store.create(AgentId(rec.author), rec.iteration, kind, rec.body)?;
            if id.0 != rec.id {
                return Err(ContentError::InvalidPost {
                    id: PostId(rec.id),
                    reason: format!("expected id {id}"),
                });
            }
        }
        Ok(store)
    }
}

/// Line schema of `posts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: u64,
    pub author: u32,
    pub iteration: u64,
    pub kind: String,
    pub target: Option<u64>,
    pub body: String,
}

impl From<&Post> for PostRecord {
    fn from(p: &Post) -> Self {
        PostRecord {
            id: p.id.0,
            author: p.author.0,
            iteration: p.iteration,
            kind: p.kind.name().to_string(),
            target: p.kind.target().map(|t| t.0),
            body: p.body.clone(),
        }
    }
}

impl PostRecord {
    fn kind(&self) -> Result<PostKind, ContentError> {
        let bad = |reason: &str| ContentError::InvalidPost {
            id: PostId(self.id),
            reason: reason.to_string(),
        };
        match (self.kind.as_str(), self.target) {
            ("original", None) => Ok(PostKind::Original),
            ("reshare", Some(t)) => Ok(PostKind::Reshare(PostId(t))),
            ("comment", Some(t)) => Ok(PostKind::Comment(PostId(t))),
            ("original", Some(_)) => Err(bad("original post with a target")),
            ("reshare" | "comment", None) => Err(bad("missing target")),
            _ => Err(bad("unknown kind")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub post: PostId,
    pub engagement: EngagementStats,
    pub created_iteration: u64,
}

/// `2^(-age / half_life)`.
pub fn recency(item: &MemoryItem, now: u64, half_life: f64) -> Result<f64, ContentError> {
    if now < item.created_iteration {
        return Err(ContentError::NegativeAge {
            created: item.created_iteration,
            now,
        });
    }
    let age = (now - item.created_iteration) as f64;
    Ok((-age / half_life).exp2())
}

/// `1 - (p + r) / 2`.
#[inline]
pub fn removal_probability_from(popularity: f64, recency: f64) -> f64 {
    1.0 - (popularity + recency) / 2.0
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryUnit {
    stm: Vec<MemoryItem>,
    ltm: Vec<MemoryItem>,
}

impl MemoryUnit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stm(&self) -> &[MemoryItem] {
        &self.stm
    }

    pub fn ltm(&self) -> &[MemoryItem] {
        &self.ltm
    }

    /// Adds a freshly published post to STM. Duplicate ids are ignored.
    pub fn record(&mut self, item: MemoryItem) {
        if !self.stm.iter().any(|m| m.post == item.post) {
            self.stm.push(item);
        }
    }

    /// Updates the engagement snapshot wherever the post is held.
    pub fn refresh(&mut self, post: PostId, engagement: EngagementStats) {
        for m in self.stm.iter_mut().chain(self.ltm.iter_mut()) {
            if m.post == post {
                m.engagement = engagement;
            }
        }
    }

    fn max_engagement(&self) -> u64 {
        self.stm
            .iter()
            .map(|m| m.engagement.total())
            .max()
            .unwrap_or(0)
    }

    fn stm_item(&self, post: PostId) -> Result<&MemoryItem, ContentError> {
        self.stm
            .iter()
            .find(|m| m.post == post)
            .ok_or(ContentError::NotInStm(post))
    }

    fn popularity_of(item: &MemoryItem, max: u64) -> f64 {
        if max == 0 {
            0.0
        } else {
            item.engagement.total() as f64 / max as f64
        }
    }

    /// Engagement of `post` divided by the largest engagement in STM.
    pub fn popularity(&self, post: PostId) -> Result<f64, ContentError> {
        let item = self.stm_item(post)?;
        Ok(Self::popularity_of(item, self.max_engagement()))
    }

    pub fn removal_probability(
        &self,
        post: PostId,
        now: u64,
        half_life: f64,
    ) -> Result<f64, ContentError> {
        let item = self.stm_item(post)?;
        let p = Self::popularity_of(item, self.max_engagement());
        let r = recency(item, now, half_life)?;
        Ok(removal_probability_from(p, r))
    }

    /// Copies every STM item with popularity strictly above `threshold`
    /// into LTM. Items already in LTM get their snapshot refreshed.
    pub fn promote_to_ltm(&mut self, threshold: f64) -> Vec<PostId> {
        let max = self.max_engagement();
        let mut promoted = Vec::new();
        for item in &self.stm {
            if Self::popularity_of(item, max) > threshold {
                match self.ltm.iter_mut().find(|m| m.post == item.post) {
                    Some(existing) => existing.engagement = item.engagement,
                    None => self.ltm.push(*item),
                }
                promoted.push(item.post);
            }
        }
        promoted
    }

    /// Removes each STM item independently with its removal probability.
    /// Popularity is normalized against STM as it stood before the step.
    pub fn decay_step<R: Rng + ?Sized>(
        &mut self,
        now: u64,
        half_life: f64,
        rng: &mut R,
    ) -> Vec<PostId> {
        let max = self.max_engagement();
        let mut removed = Vec::new();
        self.stm.retain(|item| {
            let p = Self::popularity_of(item, max);
            // created_iteration <= now is maintained by the simulation.
            let r = recency(item, now, half_life).unwrap_or(1.0);
            let drop = rng.gen::<f64>() < removal_probability_from(p, r);
            if drop {
                removed.push(item.post);
            }
            !drop
        });
        removed
    }
}
