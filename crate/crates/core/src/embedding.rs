//! Text embeddings and the cosine-similarity vector store backing the feed.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::PostId;
use crate::graph::AgentId;

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding endpoint: {0}")]
    Transport(String),
    #[error("embedding endpoint returned a malformed response: {0}")]
    Malformed(String),
}

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `raw` to unit length.
    pub fn from_raw(mut raw: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::ZeroVector);
        }
        raw.iter_mut().for_each(|x| *x /= norm);
        Ok(Embedding(raw))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// Dot product; equals cosine similarity for unit vectors.
    #[inline]
    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two arbitrary vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Deterministic bag-of-words embedder: lowercase whitespace tokens are
/// hashed (64-bit FNV-1a) into `dimension` buckets, counted, and normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let lower = text.to_lowercase();
        let mut counts = vec![0.0; self.dimension];
        let mut any = false;
        for tok in lower.split_whitespace() {
            counts[self.bucket(tok)] += 1.0;
            any = true;
        }
        if !any {
            return Err(EmbeddingError::EmptyText);
        }
        Embedding::from_raw(counts)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

/// Embedding provider reached over HTTP.
///
/// Request body `{"input": [texts]}`, response `{"data": [{"embedding": [..]}]}`.
/// Returned vectors are re-normalized to unit length.
pub struct RemoteEmbedder {
    endpoint: String,
    dimension: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dimension: usize, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client");
        Self {
            endpoint: endpoint.into(),
            dimension,
            client,
        }
    }

    pub fn encode_request(texts: &[&str]) -> String {
        serde_json::to_string(&EmbedRequest { input: texts }).expect("serializable")
    }

    pub fn decode_response(
        body: &str,
        expected: usize,
        dimension: usize,
    ) -> Result<Vec<Embedding>, EmbeddingError> {
        let resp: EmbedResponse =
            serde_json::from_str(body).map_err(|e| EmbeddingError::Malformed(e.to_string()))?;
        if resp.data.len() != expected {
            return Err(EmbeddingError::Malformed(format!(
                "expected {expected} embeddings, got {}",
                resp.data.len()
            )));
        }
        resp.data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != dimension {
                    return Err(EmbeddingError::DimensionMismatch(d.embedding.len(), dimension));
                }
                Embedding::from_raw(d.embedding)
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self
            .client
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .body(Self::encode_request(texts))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        Self::decode_response(&resp, texts.len(), self.dimension)
    }
}

#[derive(Debug, Clone)]
pub struct StoredVector {
    pub post: PostId,
    pub author: AgentId,
    pub iteration: u64,
    pub vector: Embedding,
}

/// Insertion-ordered map from post to embedding. Retrieval is a linear scan.
#[derive(Debug, Clone, Default)]
pub struct VectorStore {
    entries: Vec<StoredVector>,
    index: HashMap<PostId, usize>,
    by_author: HashMap<AgentId, Vec<usize>>,
}

impl VectorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores a vector. Returns `false` if the post is already present.
    pub fn insert(&mut self, post: PostId, author: AgentId, iteration: u64, vector: Embedding) -> bool {
        if self.index.contains_key(&post) {
            return false;
        }
        let slot = self.entries.len();
        self.index.insert(post, slot);
        self.by_author.entry(author).or_default().push(slot);
        self.entries.push(StoredVector {
            post,
            author,
            iteration,
            vector,
        });
        true
    }

    pub fn get(&self, post: PostId) -> Option<&StoredVector> {
        self.index.get(&post).map(|&i| &self.entries[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredVector> {
        self.entries.iter()
    }

    /// Vectors authored by `author`, in insertion order.
    pub fn by_author(&self, author: AgentId) -> impl Iterator<Item = &StoredVector> {
        self.by_author
            .get(&author)
            .into_iter()
            .flatten()
            .map(|&i| &self.entries[i])
    }

    /// The `k` most similar posts, ordered by similarity descending, then
    /// newer iteration first, then lower post id.
    pub fn top_k_similar(
        &self,
        query: &Embedding,
        k: usize,
        exclude_author: Option<AgentId>,
    ) -> Vec<PostId> {
        if k == 0 {
            return Vec::new();
        }
        let mut scored: Vec<(f64, u64, PostId)> = self
            .entries
            .iter()
            .filter(|e| Some(e.author) != exclude_author)
            .map(|e| (query.dot(&e.vector), e.iteration, e.post))
            .collect();
        let order = |a: &(f64, u64, PostId), b: &(f64, u64, PostId)| {
            b.0.total_cmp(&a.0)
                .then(b.1.cmp(&a.1))
                .then(a.2.cmp(&b.2))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        scored.into_iter().map(|s| s.2).collect()
    }

    /// True iff some stored vector has cosine strictly above `threshold`.
    pub fn is_near_duplicate(&self, candidate: &Embedding, threshold: f64) -> bool {
        self.entries
            .iter()
            .any(|e| candidate.dot(&e.vector) > threshold)
    }
}

/// Mean pairwise cosine between the posts of `a` and `b`. A side without
/// posts is represented by its persona embedding alone.
pub fn agent_affinity(
    store: &VectorStore,
    a: AgentId,
    b: AgentId,
    persona_a: &Embedding,
    persona_b: &Embedding,
) -> f64 {
    let side = |agent, persona: &Embedding| -> Vec<Embedding> {
        let v: Vec<_> = store.by_author(agent).map(|s| s.vector.clone()).collect();
        if v.is_empty() {
            vec![persona.clone()]
        } else {
            v
        }
    };
    let xs = side(a, persona_a);
    let ys = side(b, persona_b);
    let mut total = 0.0;
    for x in &xs {
        for y in &ys {
            total += x.dot(y);
        }
    }
    total / (xs.len() * ys.len()) as f64
}

/// Running per-agent embedding sums. The mean of pairwise dot products
/// between two sets equals the dot product of their centroids, which makes
/// all-pairs affinity linear in the number of posts.
#[derive(Debug, Clone)]
pub struct AgentCentroids {
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    personas: Vec<Embedding>,
}

impl AgentCentroids {
    pub fn new(personas: Vec<Embedding>) -> Self {
        let dim = personas.first().map_or(0, Embedding::dimension);
        Self {
            sums: vec![vec![0.0; dim]; personas.len()],
            counts: vec![0; personas.len()],
            personas,
        }
    }

    pub fn add(&mut self, author: AgentId, v: &Embedding) {
        let s = &mut self.sums[author.index()];
        for (acc, x) in s.iter_mut().zip(v.as_slice()) {
            *acc += x;
        }
        self.counts[author.index()] += 1;
    }

    pub fn centroid(&self, a: AgentId) -> Vec<f64> {
        let n = self.counts[a.index()];
        if n == 0 {
            self.personas[a.index()].as_slice().to_vec()
        } else {
            self.sums[a.index()].iter().map(|x| x / n as f64).collect()
        }
    }

    pub fn affinity(&self, a: AgentId, b: AgentId) -> f64 {
        dot(&self.centroid(a), &self.centroid(b))
    }

    pub fn persona(&self, a: AgentId) -> &Embedding {
        &self.personas[a.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hashing_embedder_is_deterministic_and_unit() {
        let e = HashingEmbedder::default();
        let a = e.embed("The quick brown fox").unwrap();
        let b = e.embed("the QUICK  brown\tfox").unwrap();
        assert_eq!(a, b);
        assert!((a.dot(&a) - 1.0).abs() < 1e-12);
        assert!(matches!(e.embed("   "), Err(EmbeddingError::EmptyText)));
    }

    #[test]
    fn collision_free_disjoint_texts_are_orthogonal() {
        let e = HashingEmbedder::default();
        let left = ["alpha", "beta", "gamma"];
        let right = ["delta", "epsilon", "zeta"];
        let lb: Vec<_> = left.iter().map(|t| e.bucket(t)).collect();
        for t in right {
            assert!(!lb.contains(&e.bucket(t)), "bucket collision on {t}");
        }
        let u = e.embed(&left.join(" ")).unwrap();
        let v = e.embed(&right.join(" ")).unwrap();
        assert_eq!(u.dot(&v), 0.0);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let h = 2f64.sqrt() / 2.0;
        assert!((cosine(&[1.0, 0.0], &[h, h]).unwrap() - h).abs() < 1e-15);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn unit(v: &[f64]) -> Embedding {
        Embedding::from_raw(v.to_vec()).unwrap()
    }

    #[test]
    fn top_k_ordering_and_ties() {
        let store = VectorStore::new();
        assert!(store.top_k_similar(&unit(&[1.0, 0.0]), 3, None).is_empty());

        let mut store = VectorStore::new();
        store.insert(PostId(0), AgentId(1), 0, unit(&[1.0, 0.0]));
        store.insert(PostId(1), AgentId(2), 1, unit(&[0.0, 1.0]));
        store.insert(PostId(2), AgentId(3), 2, unit(&[1.0, 1.0]));
        let q = unit(&[1.0, 0.1]);
        assert_eq!(
            store.top_k_similar(&q, 5, None),
            vec![PostId(0), PostId(2), PostId(1)]
        );
        assert_eq!(store.top_k_similar(&q, 1, None), vec![PostId(0)]);
        assert_eq!(store.top_k_similar(&q, 5, Some(AgentId(1))), vec![PostId(2), PostId(1)]);

        let mut store = VectorStore::new();
        store.insert(PostId(0), AgentId(1), 0, unit(&[1.0, 0.0]));
        store.insert(PostId(1), AgentId(1), 3, unit(&[1.0, 0.0]));
        store.insert(PostId(2), AgentId(1), 3, unit(&[1.0, 0.0]));
        assert_eq!(
            store.top_k_similar(&unit(&[1.0, 0.0]), 3, None),
            vec![PostId(1), PostId(2), PostId(0)]
        );
    }

    #[test]
    fn near_duplicate_threshold_is_strict() {
        let mut store = VectorStore::new();
        let e = HashingEmbedder::default();
        assert!(!store.is_near_duplicate(&e.embed("x y").unwrap(), 0.99));
        store.insert(PostId(0), AgentId(0), 0, e.embed("vote early vote often").unwrap());
        assert!(store.is_near_duplicate(&e.embed("vote early vote often").unwrap(), 0.99));

        let mut store = VectorStore::new();
        store.insert(PostId(0), AgentId(0), 0, unit(&[1.0, 0.0]));
        let c = unit(&[0.99, (1.0f64 - 0.99 * 0.99).sqrt()]);
        assert!(c.dot(&unit(&[1.0, 0.0])) <= 0.99);
        assert!(!store.is_near_duplicate(&c, 0.99));
    }

    #[test]
    fn affinity_definition_and_fallback() {
        let e = HashingEmbedder::default();
        let pa = e.embed("persona a").unwrap();
        let pb = e.embed("persona b text").unwrap();
        let mut store = VectorStore::new();
        assert!((agent_affinity(&store, AgentId(0), AgentId(1), &pa, &pb) - pa.dot(&pb)).abs() < 1e-15);

        let u = e.embed("same words here").unwrap();
        store.insert(PostId(0), AgentId(0), 0, u.clone());
        store.insert(PostId(1), AgentId(1), 0, u.clone());
        assert!((agent_affinity(&store, AgentId(0), AgentId(1), &pa, &pb) - 1.0).abs() < 1e-12);

        let v = e.embed("other words").unwrap();
        let w = e.embed("words again here").unwrap();
        let mut store = VectorStore::new();
        store.insert(PostId(0), AgentId(0), 0, u.clone());
        store.insert(PostId(1), AgentId(1), 0, v.clone());
        store.insert(PostId(2), AgentId(1), 1, w.clone());
        let expect = (u.dot(&v) + u.dot(&w)) / 2.0;
        assert!((agent_affinity(&store, AgentId(0), AgentId(1), &pa, &pb) - expect).abs() < 1e-15);
    }

    #[test]
    fn remote_wire_format() {
        assert_eq!(
            RemoteEmbedder::encode_request(&["a b", "c"]),
            r#"{"input":["a b","c"]}"#
        );
        let v = RemoteEmbedder::decode_response(
            r#"{"data":[{"embedding":[3.0,4.0]},{"embedding":[0.0,2.0]}]}"#,
            2,
            2,
        )
        .unwrap();
        assert_eq!(v[0].as_slice(), &[0.6, 0.8]);
        assert_eq!(v[1].as_slice(), &[0.0, 1.0]);
        assert!(RemoteEmbedder::decode_response(r#"{"data":[]}"#, 1, 2).is_err());
        assert!(RemoteEmbedder::decode_response(r#"{"data":[{"embedding":[1.0]}]}"#, 1, 2).is_err());
    }

    fn arb_texts() -> impl Strategy<Value = Vec<Vec<String>>> {
        let word = prop::sample::select(vec![
            "vote", "rally", "news", "fraud", "court", "media", "truth", "freedom", "tax", "border",
        ]);
        let text = prop::collection::vec(word, 1..6).prop_map(|w| w.into_iter().map(String::from).collect::<Vec<_>>().join(" "));
        prop::collection::vec(prop::collection::vec(text, 0..4), 2..6)
    }

    proptest! {
        #[test]
        fn affinity_is_symmetric_and_matches_centroids(texts in arb_texts()) {
            let e = HashingEmbedder::default();
            let personas: Vec<_> = (0..texts.len()).map(|i| e.embed(&format!("persona {i}")).unwrap()).collect();
            let mut store = VectorStore::new();
            let mut cents = AgentCentroids::new(personas.clone());
            let mut next = 0;
            for (a, ts) in texts.iter().enumerate() {
                for t in ts {
                    let v = e.embed(t).unwrap();
                    prop_assert!((v.dot(&v) - 1.0).abs() < 1e-9);
                    cents.add(AgentId(a as u32), &v);
                    store.insert(PostId(next), AgentId(a as u32), 0, v);
                    next += 1;
                }
            }
            for a in 0..texts.len() {
                for b in 0..texts.len() {
                    let (ia, ib) = (AgentId(a as u32), AgentId(b as u32));
                    let ab = agent_affinity(&store, ia, ib, &personas[a], &personas[b]);
                    let ba = agent_affinity(&store, ib, ia, &personas[b], &personas[a]);
                    prop_assert!((ab - ba).abs() < 1e-12);
                    prop_assert!((ab - cents.affinity(ia, ib)).abs() < 1e-12);
                    prop_assert_eq!(cents.affinity(ia, ib), cents.affinity(ib, ia));
                }
            }
        }

        #[test]
        fn top_k_is_a_prefix_of_the_full_ranking(qx in -1.0f64..1.0, qy in 0.01f64..1.0, k in 1usize..8) {
            let mut store = VectorStore::new();
            for i in 0..10u64 {
                let ang = (i % 4) as f64 * 0.4;
                store.insert(PostId(i), AgentId((i % 3) as u32), i / 3, unit(&[ang.cos(), ang.sin()]));
            }
            let q = unit(&[qx, qy]);
            let full = store.top_k_similar(&q, 100, None);
            prop_assert_eq!(full.len(), 10);
            prop_assert_eq!(store.top_k_similar(&q, k, None), full[..k.min(10)].to_vec());
        }
    }
}
