//! Directed follower-followee graph.
//!
//! An edge `a -> b` means `a` follows `b`: `b` is a followee of `a` and `a`
//! is a follower of `b`. Edges are append-only and neighbor lists are kept
//! sorted so every downstream computation iterates in ascending id order.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense agent identifier in `0..agent_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for AgentId {
    fn from(i: usize) -> Self {
        AgentId(i as u32)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("agent {agent} cannot follow itself")]
    SelfFollow { agent: AgentId },
    #[error("agent id {agent} out of range (agent count {count})")]
    InvalidAgent { agent: AgentId, count: usize },
    #[error("edge list csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("edge list io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialGraph {
    followees: Vec<BTreeSet<AgentId>>,
    followers: Vec<BTreeSet<AgentId>>,
    edge_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub follower: AgentId,
    pub followee: AgentId,
}

impl SocialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph with `n` agents and no edges.
    pub fn with_agents(n: usize) -> Self {
        let mut g = Self::new();
        for _ in 0..n {
            g.add_agent();
        }
        g
    }

    pub fn add_agent(&mut self) -> AgentId {
        let id = AgentId::from(self.followees.len());
        self.followees.push(BTreeSet::new());
        self.followers.push(BTreeSet::new());
        id
    }

    pub fn agent_count(&self) -> usize {
        self.followees.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.agent_count()).map(AgentId::from)
    }

    fn check(&self, a: AgentId) -> Result<(), GraphError> {
        if a.index() < self.agent_count() {
            Ok(())
        } else {
            Err(GraphError::InvalidAgent {
                agent: a,
                count: self.agent_count(),
            })
        }
    }

    /// Inserts `a -> b`. Returns `true` iff the edge is new.
    pub fn follow(&mut self, a: AgentId, b: AgentId) -> Result<bool, GraphError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(GraphError::SelfFollow { agent: a });
        }
        let inserted = self.followees[a.index()].insert(b);
        if inserted {
            self.followers[b.index()].insert(a);
            self.edge_count += 1;
        }
        Ok(inserted)
    }

    pub fn is_following(&self, a: AgentId, b: AgentId) -> bool {
        self.followees
            .get(a.index())
            .is_some_and(|s| s.contains(&b))
    }

    pub fn followees(&self, a: AgentId) -> Result<Vec<AgentId>, GraphError> {
        self.check(a)?;
        Ok(self.followees[a.index()].iter().copied().collect())
    }

    pub fn followers(&self, a: AgentId) -> Result<Vec<AgentId>, GraphError> {
        self.check(a)?;
        Ok(self.followers[a.index()].iter().copied().collect())
    }

    /// Borrowing view of the followee set; panics on an invalid id.
    pub fn followee_set(&self, a: AgentId) -> &BTreeSet<AgentId> {
        &self.followees[a.index()]
    }

    /// Borrowing view of the follower set; panics on an invalid id.
    pub fn follower_set(&self, a: AgentId) -> &BTreeSet<AgentId> {
        &self.followers[a.index()]
    }

    pub fn in_degree(&self, a: AgentId) -> Result<usize, GraphError> {
        self.check(a)?;
        Ok(self.followers[a.index()].len())
    }

    pub fn out_degree(&self, a: AgentId) -> Result<usize, GraphError> {
        self.check(a)?;
        Ok(self.followees[a.index()].len())
    }

    /// All edges in ascending `(follower, followee)` order.
    pub fn export_edge_list(&self) -> Vec<Edge> {
        self.followees
            .iter()
            .enumerate()
            .flat_map(|(a, set)| {
                set.iter().map(move |&b| Edge {
                    follower: AgentId::from(a),
                    followee: b,
                })
            })
            .collect()
    }

    pub fn import_edge_list(agent_count: usize, edges: &[Edge]) -> Result<Self, GraphError> {
        let mut g = Self::with_agents(agent_count);
        for e in edges {
            g.follow(e.follower, e.followee)?;
        }
        Ok(g)
    }

    /// Writes the `follower,followee` csv snapshot.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GraphError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["follower", "followee"])?;
        for e in self.export_edge_list() {
            wtr.serialize((e.follower.0, e.followee.0))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(agent_count: usize, r: R) -> Result<Self, GraphError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut edges = Vec::new();
        for rec in rdr.deserialize() {
            let (follower, followee): (u32, u32) = rec?;
            edges.push(Edge {
                follower: AgentId(follower),
                followee: AgentId(followee),
            });
        }
        Self::import_edge_list(agent_count, &edges)
    }
}

/// File name of the snapshot taken after `k` completed iterations.
pub fn snapshot_file_name(k: usize) -> String {
    format!("graph_iter_{k}.csv")
}
