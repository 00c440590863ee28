//! Agent communication graphs.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("agent {agent} has a neighbourhood of size {size}; at least 2 are required")]
    SmallNeighbourhood { agent: usize, size: usize },
    #[error("agent index {0} out of range for {1} agents")]
    Index(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring,
    Star,
    Complete,
    RandomConnected,
}

impl Topology {
    pub fn min_agents(self) -> usize {
        match self {
            Topology::Ring | Topology::Star => 3,
            Topology::Complete | Topology::RandomConnected => 2,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Ring => "ring",
            Topology::Star => "star",
            Topology::Complete => "complete",
            Topology::RandomConnected => "random_connected",
        })
    }
}

impl FromStr for Topology {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" => Ok(Topology::Ring),
            "star" => Ok(Topology::Star),
            "complete" => Ok(Topology::Complete),
            "random_connected" => Ok(Topology::RandomConnected),
            other => Err(GraphError::InvalidTopology(format!("unknown topology {other:?}"))),
        }
    }
}

/// Undirected, connected agent graph.
///
/// Neighbourhoods are stored sorted and include the agent itself when
/// `self_inclusive` is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_agents: usize,
    edges: BTreeSet<(usize, usize)>,
    self_inclusive: bool,
    neighbourhoods: Vec<Vec<usize>>,
}

impl Graph {
    fn assemble(
        num_agents: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        self_inclusive: bool,
    ) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= num_agents {
                return Err(GraphError::Index(a, num_agents));
            }
            if b >= num_agents {
                return Err(GraphError::Index(b, num_agents));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let mut neighbourhoods: Vec<Vec<usize>> =
            (0..num_agents).map(|k| if self_inclusive { vec![k] } else { Vec::new() }).collect();
        for &(a, b) in &set {
            neighbourhoods[a].push(b);
            neighbourhoods[b].push(a);
        }
        for n in &mut neighbourhoods {
            n.sort_unstable();
        }
        Ok(Self { num_agents, edges: set, self_inclusive, neighbourhoods })
    }

    /// Builds a graph from an explicit edge list, enforcing connectivity and
    /// `|N_k| >= 2` for every agent.
    pub fn from_edges(num_agents: usize, edges: &[(usize, usize)], self_inclusive: bool) -> Result<Self, GraphError> {
        if num_agents == 0 {
            return Err(GraphError::InvalidTopology("graph needs at least one agent".into()));
        }
        let graph = Self::assemble(num_agents, edges.iter().copied(), self_inclusive)?;
        graph.validate()?;
        Ok(graph)
    }

    fn validate(&self) -> Result<(), GraphError> {
        if !self.check_connected() {
            return Err(GraphError::Disconnected);
        }
        if let Some((agent, n)) = self.neighbourhoods.iter().enumerate().find(|(_, n)| n.len() < 2) {
            return Err(GraphError::SmallNeighbourhood { agent, size: n.len() });
        }
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn self_inclusive(&self) -> bool {
        self.self_inclusive
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// `N_k`, sorted ascending.
    pub fn neighbourhood(&self, k: usize) -> Result<&[usize], GraphError> {
        self.neighbourhoods.get(k).map(Vec::as_slice).ok_or(GraphError::Index(k, self.num_agents))
    }

    /// Breadth-first check that one component spans every agent.
    pub fn check_connected(&self) -> bool {
        if self.num_agents == 0 {
            return false;
        }
        let mut seen = vec![false; self.num_agents];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(k) = queue.pop_front() {
            for &j in &self.neighbourhoods[k] {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == self.num_agents
    }
}

/// Builds one of the supported topology families. `random_connected` draws a
/// uniformly shuffled spanning tree and then adds each remaining pair with
/// probability `extra_edge_prob`. The star is centred on agent 0.
pub fn build_topology(
    kind: Topology,
    num_agents: usize,
    extra_edge_prob: f64,
    seed: u64,
    self_inclusive: bool,
) -> Result<Graph, GraphError> {
    if num_agents < kind.min_agents() {
        return Err(GraphError::InvalidTopology(format!(
            "{kind} needs at least {} agents, got {num_agents}",
            kind.min_agents()
        )));
    }
    if !(0.0..=1.0).contains(&extra_edge_prob) {
        return Err(GraphError::InvalidTopology(format!("extra_edge_prob must lie in [0, 1], got {extra_edge_prob}")));
    }
    let k = num_agents;
    let edges: Vec<(usize, usize)> = match kind {
        Topology::Ring => (0..k).map(|i| (i, (i + 1) % k)).collect(),
        Topology::Star => (1..k).map(|i| (0, i)).collect(),
        Topology::Complete => (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect(),
        Topology::RandomConnected => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(&mut rng);
            let mut edges: Vec<(usize, usize)> = (1..k).map(|i| (order[i], order[rng.random_range(0..i)])).collect();
            let tree: BTreeSet<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            for i in 0..k {
                for j in i + 1..k {
                    if !tree.contains(&(i, j)) && rng.random_bool(extra_edge_prob) {
                        edges.push((i, j));
                    }
                }
            }
            edges
        }
    };
    Graph::from_edges(k, &edges, self_inclusive)
}
