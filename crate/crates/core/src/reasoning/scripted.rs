use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Candidate, Choice, Decision, FollowDecision, Persona, PromptContext, ReasoningBackend,
    ReasoningError,
};
use crate::embedding::Embedder;
use crate::graph::AgentId;
use crate::rng::StreamRng;

/// Parameters of the seeded persona policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedPolicy {
    pub post_prob: f64,
    pub reshare: f64,
    pub like: f64,
    pub dislike: f64,
    pub comment: f64,
    pub base_follow_prob: f64,
    /// Multiplier applied to feed affinity when the author shares the
    /// agent's ideology label.
    pub same_label_weight: f64,
    pub cross_label_weight: f64,
    /// When set, every publish uses exactly this text.
    pub fixed_content: Option<String>,
    pub words_per_post: usize,
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        Self {
            post_prob: 0.4,
            reshare: 0.3,
            like: 0.4,
            dislike: 0.1,
            comment: 0.2,
            base_follow_prob: 0.5,
            same_label_weight: 1.0,
            cross_label_weight: -0.5,
            fixed_content: None,
            words_per_post: 5,
        }
    }
}

pub struct ScriptedBackend {
    policy: ScriptedPolicy,
    embedder: Arc<dyn Embedder>,
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "that", "this", "with", "are", "was", "you", "have", "not", "but", "they",
    "from", "our", "all", "will", "just", "about", "their", "what", "who", "has", "its", "his",
    "her", "them", "than", "then", "your", "were", "been", "more", "can", "out",
];

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '#' || c == '@'))
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= 3 && !STOPWORDS.contains(&t.as_str()))
}

const TOPICS_MARKER: &str = "Recurring topics:";

/// Words a scripted agent draws its posts from: the recurring-topics list
/// when the traits carry one, otherwise every content word of the traits.
pub fn topic_vocabulary(persona: &Persona) -> Vec<String> {
    let source = match persona.traits.find(TOPICS_MARKER) {
        Some(i) => &persona.traits[i + TOPICS_MARKER.len()..],
        None => persona.traits.as_str(),
    };
    let set: BTreeSet<String> = tokens(source).collect();
    if set.is_empty() {
        vec![persona.ideology_label.to_lowercase()]
    } else {
        set.into_iter().collect()
    }
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy, embedder: Arc<dyn Embedder>) -> Self {
        Self { policy, embedder }
    }

    pub fn policy(&self) -> &ScriptedPolicy {
        &self.policy
    }

    fn compose(&self, persona: &Persona, rng: &mut StreamRng, words: usize) -> String {
        let vocab = topic_vocabulary(persona);
        let mut out: Vec<String> = (0..words.max(1))
            .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
            .collect();
        out.push(format!("#{}", persona.ideology_label.to_lowercase().replace(' ', "")));
        out.join(" ")
    }

    /// Persona-to-post cosine, scaled by the label agreement multiplier.
    fn feed_scores(&self, ctx: &PromptContext, persona: &Persona) -> Vec<f64> {
        let Ok(me) = self.embedder.embed(&topic_vocabulary(persona).join(" ")) else {
            return vec![0.0; ctx.feed_section.len()];
        };
        ctx.feed_section
            .iter()
            .map(|item| {
                let sim = self.embedder.embed(&item.body).map_or(0.0, |v| me.dot(&v));
                let w = if item.author_label == persona.ideology_label {
                    self.policy.same_label_weight
                } else {
                    self.policy.cross_label_weight
                };
                sim * w
            })
            .collect()
    }
}

impl ReasoningBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn infer_persona(
        &self,
        agent: AgentId,
        user_id: &str,
        ideology_label: &str,
        corpus: &[String],
    ) -> Result<Persona, ReasoningError> {
        let texts: Vec<&String> = corpus.iter().filter(|t| !t.trim().is_empty()).collect();
        if texts.is_empty() {
            return Err(ReasoningError::EmptyCorpus);
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut words = 0usize;
        let mut emphatic = 0usize;
        for t in &texts {
            words += t.split_whitespace().count();
            if t.contains('!') {
                emphatic += 1;
            }
            for tok in tokens(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let topics: Vec<String> = ranked.into_iter().take(8).map(|(t, _)| t).collect();

        let avg = words as f64 / texts.len() as f64;
        let mut style = if avg >= 25.0 {
            "verbose and outspoken".to_string()
        } else if avg >= 12.0 {
            "conversational".to_string()
        } else {
            "terse and punchy".to_string()
        };
        if emphatic * 10 > texts.len() * 3 {
            style.push_str(", emphatic");
        }
        Ok(Persona {
            agent,
            user_id: user_id.to_string(),
            traits: format!(
                "Ideological alignment: {ideology_label}. Engagement style: {style}. {TOPICS_MARKER} {}",
                topics.join(" ")
            ),
            ideology_label: ideology_label.to_string(),
            source_corpus: Some(corpus.to_vec()),
        })
    }

    fn decide(&self, ctx: &PromptContext, persona: &Persona, rng: &mut StreamRng) -> Decision {
        let p = &self.policy;
        if rng.gen::<f64>() < p.post_prob {
            let content = match &p.fixed_content {
                Some(text) => text.clone(),
                None => self.compose(persona, rng, p.words_per_post),
            };
            return Decision {
                choice: Choice::Publish,
                reason: "sharing my perspective with followers".into(),
                content,
            };
        }
        if ctx.feed_section.is_empty() {
            return Decision::refrain("nothing in my feed");
        }
        let scores = self.feed_scores(ctx, persona);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        let item = &ctx.feed_section[best];
        let weights = [p.reshare, p.like, p.dislike, p.comment];
        let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        if total <= 0.0 {
            return Decision::refrain("no reaction is worth making");
        }
        let mut draw = rng.gen::<f64>() * total;
        let mut action = 3;
        for (i, w) in weights.iter().enumerate() {
            let w = w.max(0.0);
            if draw < w {
                action = i;
                break;
            }
            draw -= w;
        }
        let reason = format!(
            "post by agent {} scores {:.3} against my outlook",
            item.author, scores[best]
        );
        let (choice, content) = match action {
            0 => (Choice::Reshare(item.post), String::new()),
            1 => (Choice::Like(item.post), String::new()),
            2 => (Choice::Dislike(item.post), String::new()),
            _ => (
                Choice::Comment(item.post),
                format!("@{} {}", item.author, self.compose(persona, rng, 3)),
            ),
        };
        Decision {
            choice,
            reason,
            content,
        }
    }

    fn decide_follows(
        &self,
        _persona: &Persona,
        candidates: &[Candidate],
        rng: &mut StreamRng,
    ) -> FollowDecision {
        let base = self.policy.base_follow_prob;
        if candidates.is_empty() || base <= 0.0 {
            return FollowDecision::default();
        }
        let max = candidates
            .iter()
            .map(|c| c.affinity)
            .fold(f64::NEG_INFINITY, f64::max);
        let to_follow = candidates
            .iter()
            .filter(|c| {
                let weight = if max > 0.0 { c.affinity.max(0.0) / max } else { 1.0 };
                rng.gen::<f64>() < (base * weight).min(1.0)
            })
            .map(|c| c.agent)
            .collect();
        FollowDecision { to_follow }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{MemoryUnit, PostId, PostStore};
    use crate::embedding::HashingEmbedder;
    use crate::reasoning::{build_prompt, FeedItem};
    use crate::rng::{stream, Purpose};

    fn backend(policy: ScriptedPolicy) -> ScriptedBackend {
        ScriptedBackend::new(policy, Arc::new(HashingEmbedder::default()))
    }

    fn persona(label: &str) -> Persona {
        Persona {
            agent: AgentId(0),
            user_id: "u0".into(),
            traits: format!(
                "Ideological alignment: {label}. Engagement style: terse. Recurring topics: taxes, border, freedom."
            ),
            ideology_label: label.into(),
            source_corpus: None,
        }
    }

    fn feed() -> Vec<FeedItem> {
        vec![
            FeedItem {
                post: PostId(1),
                author: AgentId(1),
                author_label: "red".into(),
                body: "cooking pasta tonight".into(),
            },
            FeedItem {
                post: PostId(2),
                author: AgentId(2),
                author_label: "red".into(),
                body: "taxes border freedom now".into(),
            },
            FeedItem {
                post: PostId(3),
                author: AgentId(3),
                author_label: "blue".into(),
                body: "taxes border freedom now".into(),
            },
        ]
    }

    #[test]
    fn persona_inference_surfaces_marker_tokens() {
        let b = backend(ScriptedPolicy::default());
        let corpus = vec![
            "the #stopthesteal rally was huge".to_string(),
            "again #stopthesteal today".to_string(),
            "we need #stopthesteal answers".to_string(),
        ];
        let p = b.infer_persona(AgentId(4), "u4", "Republican", &corpus).unwrap();
        assert!(p.traits.contains("#stopthesteal"));
        assert!(p.traits.contains("Republican"));
        assert_eq!(p, b.infer_persona(AgentId(4), "u4", "Republican", &corpus).unwrap());
        assert!(matches!(
            b.infer_persona(AgentId(4), "u4", "Republican", &[]),
            Err(ReasoningError::EmptyCorpus)
        ));
        assert!(topic_vocabulary(&p).contains(&"#stopthesteal".to_string()));
    }

    #[test]
    fn forced_publish_and_forced_refrain() {
        let ctx = build_prompt(&MemoryUnit::new(), &PostStore::new(), vec![], 10);
        let b = backend(ScriptedPolicy {
            post_prob: 1.0,
            ..Default::default()
        });
        let d = b.decide(&ctx, &persona("red"), &mut stream(1, 0, 0, Purpose::Decide));
        assert_eq!(d.choice, Choice::Publish);
        assert!(!d.content.is_empty());
        d.validate(&ctx).unwrap();

        let b = backend(ScriptedPolicy {
            post_prob: 0.0,
            ..Default::default()
        });
        let d = b.decide(&ctx, &persona("red"), &mut stream(1, 0, 0, Purpose::Decide));
        assert_eq!(d.choice, Choice::Refrain);
    }

    #[test]
    fn decisions_are_replayable() {
        let ctx = build_prompt(&MemoryUnit::new(), &PostStore::new(), feed(), 10);
        let b = backend(ScriptedPolicy::default());
        let first = b.decide(&ctx, &persona("red"), &mut stream(9, 3, 4, Purpose::Decide));
        for _ in 0..100 {
            let again = b.decide(&ctx, &persona("red"), &mut stream(9, 3, 4, Purpose::Decide));
            assert_eq!(again, first);
        }
    }

    #[test]
    fn reactions_target_the_best_aligned_post() {
        let ctx = build_prompt(&MemoryUnit::new(), &PostStore::new(), feed(), 10);
        let b = backend(ScriptedPolicy {
            post_prob: 0.0,
            ..Default::default()
        });
        for s in 0..40 {
            let d = b.decide(&ctx, &persona("red"), &mut stream(s, 0, 0, Purpose::Decide));
            // same text from the other camp is penalized
            assert_eq!(d.choice.target(), Some(PostId(2)));
            d.validate(&ctx).unwrap();
        }
    }

    #[test]
    fn follow_policy_edges() {
        let mut rng = stream(1, 0, 0, Purpose::Follow);
        let b = backend(ScriptedPolicy::default());
        assert!(b.decide_follows(&persona("red"), &[], &mut rng).to_follow.is_empty());

        let cands: Vec<_> = (1..6)
            .map(|i| Candidate {
                agent: AgentId(i),
                affinity: 0.3,
                summary: String::new(),
            })
            .collect();
        let b = backend(ScriptedPolicy {
            base_follow_prob: 0.0,
            ..Default::default()
        });
        assert!(b.decide_follows(&persona("red"), &cands, &mut rng).to_follow.is_empty());
        let b = backend(ScriptedPolicy {
            base_follow_prob: 1.0,
            ..Default::default()
        });
        let all: Vec<_> = cands.iter().map(|c| c.agent).collect();
        assert_eq!(b.decide_follows(&persona("red"), &cands, &mut rng).to_follow, all);
    }
}
