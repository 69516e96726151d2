//! Nodal attributes and neighbor-superiority analysis.
//!
//! An agent experiences neighbor superiority for an attribute when its own
//! value is strictly below the mean (or median) of its neighbors' values.
//! Neighbors are followees or followers, optionally restricted to the `k`
//! with whom the agent interacts most. Agents with no neighbors on the
//! analyzed side are not eligible and are left out of the percentage.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{PostId, PostKind};
use crate::events::{EventKind, SimulationEvent};
use crate::graph::{AgentId, SocialGraph};
use crate::simulation::SimulationState;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("pearson correlation needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("inconsistent log at event {seq}: {message}")]
    InconsistentLog { seq: u64, message: String },
    #[error("unknown {what}: {value:?}")]
    Parse { what: &'static str, value: String },
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attribute {
    #[serde(rename = "In-Degree")]
    InDegree,
    #[serde(rename = "Out-Degree")]
    OutDegree,
    #[serde(rename = "NT")]
    Nt,
    #[serde(rename = "NOT")]
    Not,
    #[serde(rename = "TTR")]
    Ttr,
    #[serde(rename = "RPT")]
    Rpt,
    #[serde(rename = "IAR")]
    Iar,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::InDegree,
        Attribute::OutDegree,
        Attribute::Nt,
        Attribute::Not,
        Attribute::Ttr,
        Attribute::Rpt,
        Attribute::Iar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::InDegree => "In-Degree",
            Attribute::OutDegree => "Out-Degree",
            Attribute::Nt => "NT",
            Attribute::Not => "NOT",
            Attribute::Ttr => "TTR",
            Attribute::Rpt => "RPT",
            Attribute::Iar => "IAR",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Follower,
    Followee,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Follower, Side::Followee];

    pub fn name(self) -> &'static str {
        match self {
            Side::Follower => "follower",
            Side::Followee => "followee",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Median,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
        }
    }

    /// Aggregates a non-empty slice. Reorders `values` for the median.
    pub fn apply(self, values: &mut [f64]) -> f64 {
        debug_assert!(!values.is_empty());
        match self {
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    (values[n / 2 - 1] + values[n / 2]) / 2.0
                }
            }
        }
    }
}

impl FromStr for Aggregator {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            other => Err(MetricsError::Parse {
                what: "aggregator",
                value: other.to_string(),
            }),
        }
    }
}

/// Neighbor restriction: the top-`k` by interaction frequency, or all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Restriction {
    Top(usize),
    All,
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Restriction::Top(k) => write!(f, "{k}"),
            Restriction::All => f.write_str("inf"),
        }
    }
}

impl FromStr for Restriction {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if matches!(s, "inf" | "∞" | "all") {
            return Ok(Restriction::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Restriction::Top(k)),
            _ => Err(MetricsError::Parse {
                what: "restriction",
                value: s.to_string(),
            }),
        }
    }
}

impl Serialize for Restriction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Restriction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense directed count of `a`'s reactions (reshare, like, dislike,
/// comment) to posts authored by `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl InteractionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn record(&mut self, from: AgentId, to: AgentId) {
        self.counts[from.index() * self.n + to.index()] += 1;
    }

    pub fn set(&mut self, from: AgentId, to: AgentId, count: u64) {
        self.counts[from.index() * self.n + to.index()] = count;
    }

    pub fn get(&self, from: AgentId, to: AgentId) -> u64 {
        self.counts[from.index() * self.n + to.index()]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentAttributes {
    pub in_deg: u64,
    pub out_deg: u64,
    pub nt: u64,
    pub not: u64,
    pub ttr: u64,
    pub rpt: f64,
    pub iar: f64,
}

impl AgentAttributes {
    pub fn value(&self, attr: Attribute) -> f64 {
        match attr {
            Attribute::InDegree => self.in_deg as f64,
            Attribute::OutDegree => self.out_deg as f64,
            Attribute::Nt => self.nt as f64,
            Attribute::Not => self.not as f64,
            Attribute::Ttr => self.ttr as f64,
            Attribute::Rpt => self.rpt,
            Attribute::Iar => self.iar,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodalAttributes {
    pub agents: Vec<AgentAttributes>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl NodalAttributes {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn value(&self, agent: AgentId, attr: Attribute) -> f64 {
        self.agents[agent.index()].value(attr)
    }

    pub fn column(&self, attr: Attribute) -> Vec<f64> {
        self.agents.iter().map(|a| a.value(attr)).collect()
    }

    /// Attributes of a finished (or in-progress) simulation.
    pub fn from_state(state: &SimulationState) -> Self {
        let n = state.agent_count();
        let mut agents = vec![AgentAttributes::default(); n];
        for post in state.posts.iter() {
            let a = &mut agents[post.author.index()];
            match post.kind {
                PostKind::Original => {
                    a.nt += 1;
                    a.not += 1;
                }
                PostKind::Reshare(_) => a.nt += 1,
                PostKind::Comment(_) => {}
            }
            a.ttr += state.posts.engagement(post.id).map_or(0, |e| e.reshares);
        }
        for (i, a) in agents.iter_mut().enumerate() {
            let id = AgentId::from(i);
            a.in_deg = state.graph.follower_set(id).len() as u64;
            a.out_deg = state.graph.followee_set(id).len() as u64;
            a.rpt = ratio(a.ttr, a.not);
            a.iar = ratio(state.adoption_count[i], state.exposure_count[i]);
        }
        Self { agents }
    }
}

/// Everything the analyzer needs, rebuilt from an event log alone.
#[derive(Debug, Clone)]
pub struct LogAnalysis {
    pub graph: SocialGraph,
    pub attributes: NodalAttributes,
    pub interactions: InteractionMatrix,
    pub exposure_count: Vec<u64>,
    pub adoption_count: Vec<u64>,
}

impl LogAnalysis {
    /// Replays the events for `agent_count` agents. Agent ids beyond the
    /// count, unknown targets, or more adoptions than exposures are errors.
    pub fn from_events(events: &[SimulationEvent], agent_count: usize) -> Result<Self, MetricsError> {
        let n = agent_count;
        let mut graph = SocialGraph::with_agents(n);
        let mut interactions = InteractionMatrix::new(n);
        let mut exposure = vec![0u64; n];
        let mut adoption = vec![0u64; n];
        let mut agents = vec![AgentAttributes::default(); n];
        let mut author_of: HashMap<PostId, AgentId> = HashMap::new();

        for e in events {
            let bad = |message: String| MetricsError::InconsistentLog {
                seq: e.seq,
                message,
            };
            let Some(a) = e.agent else {
                continue;
            };
            if a.index() >= n {
                return Err(bad(format!("agent {a} out of range for {n} agents")));
            }
            if e.kind.is_action() {
                exposure[a.index()] += e.feed.as_ref().map_or(0, |f| f.len() as u64);
            }
            let target_author = |t: Option<u64>| -> Result<AgentId, MetricsError> {
                let t = t.ok_or_else(|| bad(format!("{:?} without target", e.kind)))?;
                author_of
                    .get(&PostId(t))
                    .copied()
                    .ok_or_else(|| bad(format!("target post {t} unknown")))
            };
            match e.kind {
                EventKind::Publish | EventKind::Reshare | EventKind::Comment => {
                    let reacted = if e.kind == EventKind::Publish {
                        None
                    } else {
                        Some(target_author(e.target)?)
                    };
                    let pid = e.post.ok_or_else(|| bad(format!("{:?} without post id", e.kind)))?;
                    if author_of.insert(pid, a).is_some() {
                        return Err(bad(format!("post {pid} created twice")));
                    }
                    let me = &mut agents[a.index()];
                    match e.kind {
                        EventKind::Publish => {
                            me.nt += 1;
                            me.not += 1;
                        }
                        EventKind::Reshare => {
                            me.nt += 1;
                            adoption[a.index()] += 1;
                        }
                        _ => {}
                    }
                    if let Some(b) = reacted {
                        interactions.record(a, b);
                        if e.kind == EventKind::Reshare {
                            agents[b.index()].ttr += 1;
                        }
                    }
                }
                EventKind::Like | EventKind::Dislike => {
                    let b = target_author(e.target)?;
                    interactions.record(a, b);
                }
                EventKind::Follow => {
                    let t = e.target.ok_or_else(|| bad("Follow without target".into()))?;
                    graph
                        .follow(a, AgentId(t as u32))
                        .map_err(|err| bad(err.to_string()))?;
                }
                EventKind::Refrain | EventKind::Promotion | EventKind::Decay | EventKind::Halt => {}
            }
        }
        for (i, at) in agents.iter_mut().enumerate() {
            if adoption[i] > exposure[i] {
                return Err(MetricsError::InconsistentLog {
                    seq: 0,
                    message: format!(
                        "agent {i} adopted {} posts but was exposed to {}",
                        adoption[i], exposure[i]
                    ),
                });
            }
            let id = AgentId::from(i);
            at.in_deg = graph.follower_set(id).len() as u64;
            at.out_deg = graph.followee_set(id).len() as u64;
            at.rpt = ratio(at.ttr, at.not);
            at.iar = ratio(adoption[i], exposure[i]);
        }
        Ok(Self {
            graph,
            attributes: NodalAttributes { agents },
            interactions,
            exposure_count: exposure,
            adoption_count: adoption,
        })
    }
}

/// Outcome of one superiority measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Superiority {
    /// `100 * count / eligible`, `None` when nobody is eligible.
    pub percentage: Option<f64>,
    pub count: usize,
    pub eligible: usize,
}

fn neighbors_of(graph: &SocialGraph, a: AgentId, side: Side) -> Vec<AgentId> {
    match side {
        Side::Followee => graph.followee_set(a).iter().copied().collect(),
        Side::Follower => graph.follower_set(a).iter().copied().collect(),
    }
}

fn superiority_over<F>(attrs: &NodalAttributes, attr: Attribute, agg: Aggregator, mut neighbors: F) -> Superiority
where
    F: FnMut(AgentId) -> Vec<AgentId>,
{
    let mut count = 0;
    let mut eligible = 0;
    let mut buf = Vec::new();
    for i in 0..attrs.len() {
        let a = AgentId::from(i);
        let ns = neighbors(a);
        if ns.is_empty() {
            continue;
        }
        eligible += 1;
        buf.clear();
        buf.extend(ns.iter().map(|&b| attrs.value(b, attr)));
        if attrs.value(a, attr) < agg.apply(&mut buf) {
            count += 1;
        }
    }
    Superiority {
        percentage: (eligible > 0).then(|| 100.0 * count as f64 / eligible as f64),
        count,
        eligible,
    }
}

pub fn neighbor_superiority(
    attrs: &NodalAttributes,
    graph: &SocialGraph,
    attr: Attribute,
    side: Side,
    agg: Aggregator,
) -> Superiority {
    superiority_over(attrs, attr, agg, |a| neighbors_of(graph, a, side))
}

/// Neighbors on `side` ranked by interaction frequency (descending, ties by
/// ascending id), truncated to `k`. On the followee side the frequency is
/// `a`'s reactions to `b`; on the follower side it is `b`'s reactions to `a`.
pub fn top_k_neighbors(
    graph: &SocialGraph,
    interactions: &InteractionMatrix,
    a: AgentId,
    k: usize,
    side: Side,
) -> Vec<AgentId> {
    let mut ns = neighbors_of(graph, a, side);
    let freq = |b: AgentId| match side {
        Side::Followee => interactions.get(a, b),
        Side::Follower => interactions.get(b, a),
    };
    ns.sort_by(|&x, &y| freq(y).cmp(&freq(x)).then(x.cmp(&y)));
    ns.truncate(k);
    ns
}

pub fn restricted_superiority(
    attrs: &NodalAttributes,
    graph: &SocialGraph,
    interactions: &InteractionMatrix,
    attr: Attribute,
    side: Side,
    agg: Aggregator,
    restriction: Restriction,
) -> Superiority {
    match restriction {
        Restriction::All => neighbor_superiority(attrs, graph, attr, side, agg),
        Restriction::Top(k) => superiority_over(attrs, attr, agg, |a| {
            top_k_neighbors(graph, interactions, a, k, side)
        }),
    }
}

/// 7x7 sample Pearson correlation matrix in [`Attribute::ALL`] order;
/// entries involving a zero-variance attribute are `None`.
pub fn pearson_matrix(attrs: &NodalAttributes) -> Result<Vec<Vec<Option<f64>>>, MetricsError> {
    let n = attrs.len();
    if n < 2 {
        return Err(MetricsError::TooFewAgents(n));
    }
    let centered: Vec<Vec<f64>> = Attribute::ALL
        .iter()
        .map(|&attr| {
            let col = attrs.column(attr);
            let mean = col.iter().sum::<f64>() / n as f64;
            col.into_iter().map(|x| x - mean).collect()
        })
        .collect();
    let ss: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    let k = Attribute::ALL.len();
    let mut out = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            if ss[i] == 0.0 || ss[j] == 0.0 {
                continue;
            }
            let r = if i == j {
                1.0
            } else {
                let sxy: f64 = centered[i].iter().zip(&centered[j]).map(|(x, y)| x * y).sum();
                (sxy / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0)
            };
            out[i][j] = Some(r);
            out[j][i] = Some(r);
        }
    }
    Ok(out)
}

/// Mean over agents with at least one neighbor of (mean neighbor degree -
/// own degree) on the undirected version of `graph`. `None` if no agent has
/// a neighbor.
pub fn classical_paradox_gap(graph: &SocialGraph) -> Option<f64> {
    let n = graph.agent_count();
    let mut adj: Vec<std::collections::BTreeSet<AgentId>> = vec![Default::default(); n];
    for e in graph.export_edge_list() {
        adj[e.follower.index()].insert(e.followee);
        adj[e.followee.index()].insert(e.follower);
    }
    let mut total = 0.0;
    let mut m = 0usize;
    for nbrs in &adj {
        if nbrs.is_empty() {
            continue;
        }
        let mean: f64 = nbrs.iter().map(|b| adj[b.index()].len() as f64).sum::<f64>() / nbrs.len() as f64;
        total += mean - nbrs.len() as f64;
        m += 1;
    }
    (m > 0).then(|| total / m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub attribute: Attribute,
    pub side: Side,
    pub aggregator: Aggregator,
    pub k: Restriction,
    pub percentage: Option<f64>,
    pub eligible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperiorityReport {
    pub agent_count: usize,
    pub rows: Vec<ReportRow>,
}

impl SuperiorityReport {
    /// Rows ordered attribute, side (follower first), aggregator, k.
    pub fn build(
        attrs: &NodalAttributes,
        graph: &SocialGraph,
        interactions: &InteractionMatrix,
        aggregators: &[Aggregator],
        restrictions: &[Restriction],
    ) -> Self {
        let mut rows = Vec::new();
        for attr in Attribute::ALL {
            for side in Side::BOTH {
                for &agg in aggregators {
                    for &k in restrictions {
                        let s = restricted_superiority(attrs, graph, interactions, attr, side, agg, k);
                        rows.push(ReportRow {
                            attribute: attr,
                            side,
                            aggregator: agg,
                            k,
                            percentage: s.percentage,
                            eligible: s.eligible,
                        });
                    }
                }
            }
        }
        Self {
            agent_count: attrs.len(),
            rows,
        }
    }

    pub fn get(&self, attr: Attribute, side: Side, agg: Aggregator, k: Restriction) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.attribute == attr && r.side == side && r.aggregator == agg && r.k == k)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["attribute", "side", "aggregator", "k", "percentage", "eligible"])?;
        for r in &self.rows {
            wtr.write_record([
                r.attribute.name().to_string(),
                r.side.name().to_string(),
                r.aggregator.name().to_string(),
                r.k.to_string(),
                r.percentage.map(|p| p.to_string()).unwrap_or_default(),
                r.eligible.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, MetricsError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Writes the correlation matrix with a header row of attribute names;
/// undefined entries are empty.
pub fn write_correlations_csv<W: Write>(w: W, matrix: &[Vec<Option<f64>>]) -> Result<(), MetricsError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["attribute".to_string()];
    header.extend(Attribute::ALL.iter().map(|a| a.name().to_string()));
    wtr.write_record(&header)?;
    for (attr, row) in Attribute::ALL.iter().zip(matrix) {
        let mut rec = vec![attr.name().to_string()];
        rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, edges: &[(u32, u32)]) -> SocialGraph {
        let mut g = SocialGraph::with_agents(n);
        for &(a, b) in edges {
            g.follow(AgentId(a), AgentId(b)).unwrap();
        }
        g
    }

    fn with_in_degree(graph: &SocialGraph) -> NodalAttributes {
        NodalAttributes {
            agents: graph
                .agents()
                .map(|a| AgentAttributes {
                    in_deg: graph.in_degree(a).unwrap() as u64,
                    out_deg: graph.out_degree(a).unwrap() as u64,
                    ..Default::default()
                })
                .collect(),
        }
    }

    #[test]
    fn three_agent_example() {
        let graph = g(3, &[(0, 1), (1, 2), (2, 1)]);
        let attrs = with_in_degree(&graph);
        assert_eq!(attrs.column(Attribute::InDegree), vec![0.0, 2.0, 1.0]);
        let s = neighbor_superiority(&attrs, &graph, Attribute::InDegree, Side::Followee, Aggregator::Mean);
        assert_eq!((s.count, s.eligible), (2, 3));
        assert_eq!(s.percentage, Some(200.0 / 3.0));
    }

    #[test]
    fn star_and_constant_laws() {
        let edges: Vec<_> = (1..10).map(|l| (l, 0)).collect();
        let graph = g(10, &edges);
        let attrs = with_in_degree(&graph);
        let s = neighbor_superiority(&attrs, &graph, Attribute::InDegree, Side::Followee, Aggregator::Mean);
        assert_eq!((s.count, s.eligible, s.percentage), (9, 9, Some(100.0)));
        // Nt is zero for everybody
        for side in Side::BOTH {
            for agg in [Aggregator::Mean, Aggregator::Median] {
                let s = neighbor_superiority(&attrs, &graph, Attribute::Nt, side, agg);
                assert_eq!(s.percentage, Some(0.0));
            }
        }
    }

    #[test]
    fn median_of_even_sets_averages_the_middle() {
        assert_eq!(Aggregator::Median.apply(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(Aggregator::Median.apply(&mut [5.0, 1.0, 3.0]), 3.0);
        assert_eq!(Aggregator::Mean.apply(&mut [1.0, 2.0]), 1.5);
    }

    #[test]
    fn top_k_ranking() {
        let graph = g(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let mut im = InteractionMatrix::new(5);
        im.set(AgentId(0), AgentId(2), 5);
        im.set(AgentId(0), AgentId(3), 2);
        im.set(AgentId(0), AgentId(4), 2);
        assert_eq!(
            top_k_neighbors(&graph, &im, AgentId(0), 2, Side::Followee),
            vec![AgentId(2), AgentId(3)]
        );
        let small = g(3, &[(0, 1), (0, 2)]);
        assert_eq!(
            top_k_neighbors(&small, &InteractionMatrix::new(3), AgentId(0), 3, Side::Followee),
            vec![AgentId(1), AgentId(2)]
        );
        assert_eq!(
            top_k_neighbors(&graph, &InteractionMatrix::new(5), AgentId(0), 1, Side::Followee),
            vec![AgentId(1)]
        );
        // follower side counts the follower's reactions to us
        let fol = g(3, &[(1, 0), (2, 0)]);
        let mut im = InteractionMatrix::new(3);
        im.set(AgentId(2), AgentId(0), 1);
        assert_eq!(top_k_neighbors(&fol, &im, AgentId(0), 1, Side::Follower), vec![AgentId(2)]);
    }

    #[test]
    fn k1_with_zero_interactions_uses_lowest_id() {
        let graph = g(3, &[(0, 1), (1, 2), (2, 1)]);
        let attrs = with_in_degree(&graph);
        let im = InteractionMatrix::new(3);
        // every agent has one followee, so k=1 equals the full set
        let s1 = restricted_superiority(&attrs, &graph, &im, Attribute::InDegree, Side::Followee, Aggregator::Mean, Restriction::Top(1));
        let all = neighbor_superiority(&attrs, &graph, Attribute::InDegree, Side::Followee, Aggregator::Mean);
        assert_eq!(s1, all);
        // follower side: agent 1 has followers {0, 2}; k=1 keeps agent 0 (in_deg 0)
        let s1 = restricted_superiority(&attrs, &graph, &im, Attribute::InDegree, Side::Follower, Aggregator::Mean, Restriction::Top(1));
        // agent1: 2 < 0 no; agent2: 1 < in(1)=2 yes -> 1 of 2
        assert_eq!((s1.count, s1.eligible), (1, 2));
    }

    #[test]
    fn isolated_agents_are_never_eligible() {
        let graph = g(2, &[]);
        let attrs = with_in_degree(&graph);
        let im = InteractionMatrix::new(2);
        for k in [Restriction::Top(1), Restriction::Top(3), Restriction::All] {
            let s = restricted_superiority(&attrs, &graph, &im, Attribute::InDegree, Side::Follower, Aggregator::Mean, k);
            assert_eq!((s.eligible, s.percentage), (0, None));
        }
    }

    #[test]
    fn pearson_examples() {
        let mk = |xs: &[f64], ys: &[f64]| NodalAttributes {
            agents: xs
                .iter()
                .zip(ys)
                .map(|(&x, &y)| AgentAttributes {
                    rpt: x,
                    iar: y,
                    in_deg: 3,
                    ..Default::default()
                })
                .collect(),
        };
        let m = pearson_matrix(&mk(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])).unwrap();
        assert!((m[5][6].unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(m[5][5], Some(1.0));
        assert!(m[0].iter().all(Option::is_none));
        let m = pearson_matrix(&mk(&[1.0, 2.0, 4.0], &[2.0, 4.0, 8.0])).unwrap();
        assert!((m[5][6].unwrap() - 1.0).abs() < 1e-15);
        assert!(pearson_matrix(&mk(&[1.0], &[1.0])).is_err());
    }

    #[test]
    fn restriction_parsing() {
        assert_eq!("inf".parse::<Restriction>().unwrap(), Restriction::All);
        assert_eq!("3".parse::<Restriction>().unwrap(), Restriction::Top(3));
        assert!("0".parse::<Restriction>().is_err());
        assert!("x".parse::<Aggregator>().is_err());
    }

    #[test]
    fn report_cardinality_and_round_trip() {
        let graph = g(3, &[(0, 1), (1, 2), (2, 1)]);
        let attrs = with_in_degree(&graph);
        let report = SuperiorityReport::build(
            &attrs,
            &graph,
            &InteractionMatrix::new(3),
            &[Aggregator::Mean, Aggregator::Median],
            &[Restriction::Top(1), Restriction::Top(3), Restriction::All],
        );
        assert_eq!(report.rows.len(), 84);
        let back = SuperiorityReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 85);
        assert!(text.starts_with("attribute,side,aggregator,k,percentage,eligible\nIn-Degree,follower,mean,1,"));

        let empty = g(4, &[]);
        let report = SuperiorityReport::build(
            &with_in_degree(&empty),
            &empty,
            &InteractionMatrix::new(4),
            &[Aggregator::Mean],
            &[Restriction::All],
        );
        assert!(report.rows.iter().all(|r| r.eligible == 0 && r.percentage.is_none()));
    }
}
