//! Chat-completions client and the remote reasoning backend.
//!
//! Wire format: `POST <endpoint>` with
//! `{"model": .., "messages": [{"role": .., "content": ..}], "temperature": ..}`;
//! the reply text is read from `choices[0].message.content`.

use std::fmt::Write as _;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{
    Candidate, Choice, Decision, FollowDecision, Persona, PromptContext, ReasoningBackend,
    ReasoningError,
};
use crate::content::PostId;
use crate::graph::AgentId;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Http(String),
    #[error("malformed completion response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Transport-level retries per request.
    pub retries: u32,
    /// Re-prompts after an unparseable reply before giving up.
    pub parse_retries: u32,
    pub max_in_flight: usize,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            model: "llama3".into(),
            temperature: 0.7,
            timeout_secs: 60,
            retries: 2,
            parse_retries: 3,
            max_in_flight: 8,
        }
    }
}

pub struct ChatClient {
    endpoint: String,
    api_key: Option<String>,
    settings: RemoteSettings,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, settings: RemoteSettings) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .expect("http client");
        Self {
            endpoint: endpoint.into(),
            api_key,
            settings,
            http,
        }
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.settings.model.clone(),
            messages,
            temperature: self.settings.temperature,
        }
    }

    /// Extracts `choices[0].message.content`.
    pub fn parse_response(body: &str) -> Result<String, TransportError> {
        let v: Value =
            serde_json::from_str(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))
    }

    fn send_once(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let mut builder = self.http.post(&self.endpoint).json(req);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let body = builder
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| TransportError::Http(e.to_string()))?;
        Self::parse_response(&body)
    }

    /// Sends with up to `retries` additional attempts on failure.
    pub fn complete(&self, messages: Vec<ChatMessage>) -> Result<String, TransportError> {
        let req = self.request(messages);
        let mut attempt = 0;
        loop {
            match self.send_once(&req) {
                Ok(text) => return Ok(text),
                Err(e) if attempt >= self.settings.retries => return Err(e),
                Err(e) => {
                    log::warn!("chat completion attempt {} failed: {e}", attempt + 1);
                    thread::sleep(Duration::from_millis(100 << attempt.min(6)));
                    attempt += 1;
                }
            }
        }
    }

    /// One-shot reachability check used before a run starts.
    pub fn probe(&self) -> Result<(), TransportError> {
        self.send_once(&self.request(vec![ChatMessage::user("Reply with OK.")]))
            .map(|_| ())
    }
}

/// Returns the first balanced `{...}` in `text`, honoring JSON strings.
pub fn extract_first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn as_id(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s
            .trim()
            .trim_start_matches("agent_")
            .trim_start_matches("post_")
            .trim_start_matches('#')
            .parse()
            .ok(),
        _ => None,
    }
}

/// Parses a `{"choice", "target", "reason", "content"}` reply and checks it
/// against the context it answers.
pub fn parse_decision(reply: &str, ctx: &PromptContext) -> Result<Decision, ReasoningError> {
    let bad = |m: &str| ReasoningError::InvalidDecision(m.to_string());
    let obj = extract_first_json_object(reply).ok_or_else(|| bad("no JSON object in reply"))?;
    let v: Value = serde_json::from_str(obj).map_err(|e| bad(&e.to_string()))?;
    let choice = v
        .get("choice")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing choice"))?
        .trim()
        .to_lowercase();
    let target = v.get("target").and_then(as_id).map(PostId);
    let text = |k: &str| {
        v.get(k)
            .and_then(Value::as_str)
            .unwrap_or_default()
            .trim()
            .to_string()
    };
    let need = |t: Option<PostId>| t.ok_or_else(|| bad("missing target"));
    let choice = match choice.as_str() {
        "publish" => Choice::Publish,
        "reshare" | "re-share" | "retweet" => Choice::Reshare(need(target)?),
        "like" => Choice::Like(need(target)?),
        "dislike" => Choice::Dislike(need(target)?),
        "comment" => Choice::Comment(need(target)?),
        "refrain" | "none" => Choice::Refrain,
        other => return Err(bad(&format!("unknown choice {other:?}"))),
    };
    let content = if matches!(choice, Choice::Publish | Choice::Comment(_)) {
        text("content")
    } else {
        String::new()
    };
    let d = Decision {
        choice,
        reason: text("reason"),
        content,
    };
    d.validate(ctx)?;
    Ok(d)
}

/// Parses `{"follow": [..]}`; entries that are not presented candidates are
/// dropped.
pub fn parse_follow_reply(reply: &str, candidates: &[Candidate]) -> Option<FollowDecision> {
    let obj = extract_first_json_object(reply)?;
    let v: Value = serde_json::from_str(obj).ok()?;
    let list = v.get("follow")?.as_array()?;
    let mut to_follow: Vec<AgentId> = Vec::new();
    for item in list {
        if let Some(id) = as_id(item) {
            let id = AgentId(id as u32);
            if candidates.iter().any(|c| c.agent == id) && !to_follow.contains(&id) {
                to_follow.push(id);
            }
        }
    }
    Some(FollowDecision { to_follow })
}

fn persona_system_prompt(persona: &Persona) -> String {
    format!(
        "You are a user of a social media platform. Your ideological alignment is {}. \
         Your personality: {}\nStay in character.",
        persona.ideology_label, persona.traits
    )
}

fn decision_prompt(ctx: &PromptContext) -> String {
    let mut s = String::new();
    s.push_str("How your previous posts were received:\n");
    if ctx.feedback_section.is_empty() {
        s.push_str("(you have not posted yet)\n");
    }
    for f in &ctx.feedback_section {
        let e = &f.engagement;
        let _ = writeln!(
            s,
            "- \"{}\" ({} re-shares, {} likes, {} dislikes, {} comments)",
            f.body, e.reshares, e.likes, e.dislikes, e.comments
        );
    }
    s.push_str("\nYour feed:\n");
    if ctx.feed_section.is_empty() {
        s.push_str("(empty)\n");
    }
    for item in &ctx.feed_section {
        let _ = writeln!(s, "- post {} by agent_{}: \"{}\"", item.post, item.author, item.body);
    }
    s.push_str("\nAvailable actions: ");
    s.push_str(&ctx.actions_section.join(", "));
    s.push_str(
        "\n\nPick exactly one action. Answer with a single JSON object and nothing else:\n\
         {\"choice\": \"<action>\", \"target\": <post id or null>, \"reason\": \"<why>\", \
         \"content\": \"<text for publish or comment, otherwise empty>\"}",
    );
    s
}

fn follow_prompt(candidates: &[Candidate]) -> String {
    let mut s = String::from("These users might interest you:\n");
    for c in candidates {
        let _ = writeln!(s, "- agent_{}: {}", c.agent, c.summary);
    }
    s.push_str(
        "\nDecide whom to follow. Answer with a single JSON object and nothing else:\n\
         {\"follow\": [\"agent_<id>\", ...]}",
    );
    s
}

pub struct RemoteBackend {
    client: ChatClient,
}

impl RemoteBackend {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }

    pub fn client(&self) -> &ChatClient {
        &self.client
    }

    fn attempts(&self) -> u32 {
        self.client.settings.parse_retries + 1
    }
}

impl ReasoningBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn infer_persona(
        &self,
        agent: AgentId,
        user_id: &str,
        ideology_label: &str,
        corpus: &[String],
    ) -> Result<Persona, ReasoningError> {
        if corpus.iter().all(|t| t.trim().is_empty()) {
            return Err(ReasoningError::EmptyCorpus);
        }
        let mut posts = String::new();
        for t in corpus {
            let _ = writeln!(posts, "- {t}");
        }
        let messages = vec![
            ChatMessage::system(
                "You analyze social media users. Describe the personality traits of the author \
                 of the posts below: ideological alignment and engagement style (for example \
                 outspoken, critical, or supportive of specific figures). Answer in one paragraph.",
            ),
            ChatMessage::user(format!("Annotated alignment: {ideology_label}\nPosts:\n{posts}")),
        ];
        for _ in 0..self.attempts() {
            let reply = self
                .client
                .complete(messages.clone())
                .map_err(|e| ReasoningError::Backend(e.to_string()))?;
            let traits = reply.trim();
            if !traits.is_empty() {
                return Ok(Persona {
                    agent,
                    user_id: user_id.to_string(),
                    traits: traits.to_string(),
                    ideology_label: ideology_label.to_string(),
                    source_corpus: Some(corpus.to_vec()),
                });
            }
        }
        Err(ReasoningError::Backend("empty persona reply".into()))
    }

    fn decide(&self, ctx: &PromptContext, persona: &Persona, _rng: &mut StreamRng) -> Decision {
        let messages = vec![
            ChatMessage::system(persona_system_prompt(persona)),
            ChatMessage::user(decision_prompt(ctx)),
        ];
        for _ in 0..self.attempts() {
            let reply = match self.client.complete(messages.clone()) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("agent {}: {e}", persona.agent);
                    return Decision::refrain("backend-transport-failure");
                }
            };
            match parse_decision(&reply, ctx) {
                Ok(d) => return d,
                Err(e) => log::debug!("agent {}: unusable reply: {e}", persona.agent),
            }
        }
        Decision::refrain("backend-parse-failure")
    }

    fn decide_follows(
        &self,
        persona: &Persona,
        candidates: &[Candidate],
        _rng: &mut StreamRng,
    ) -> FollowDecision {
        if candidates.is_empty() {
            return FollowDecision::default();
        }
        let messages = vec![
            ChatMessage::system(persona_system_prompt(persona)),
            ChatMessage::user(follow_prompt(candidates)),
        ];
        for _ in 0..self.attempts() {
            let Ok(reply) = self.client.complete(messages.clone()) else {
                return FollowDecision::default();
            };
            if let Some(d) = parse_follow_reply(&reply, candidates) {
                return d;
            }
        }
        FollowDecision::default()
    }
}
