//! Network graph, topology file loading and gravity-model endpoint sampling.
//!
//! Topology files are JSON documents:
//!
//! ```json
//! {
//!   "name": "optional label",
//!   "nodes": [{ "id": "A", "gen_prob": 0.5 }, { "id": "B", "gen_prob": 0.5 }],
//!   "links": [{ "a": "A", "b": "B", "length_km": 100.0 }]
//! }
//! ```
//!
//! Links are undirected. Node indices follow file order, and that order is
//! the one used for every lexicographic tie-break in routing.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::TopologyError;

pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

pub type NodeIx = usize;
pub type LinkIx = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub gen_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub length_km: f64,
}

/// On-disk form of a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone)]
enum DestinationDist {
    Weighted(WeightedIndex<f64>),
    Uniform,
}

/// A validated, immutable network graph.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    /// Link endpoints as node indices, `a < b` not guaranteed.
    endpoints: Vec<(NodeIx, NodeIx)>,
    /// Link lengths in whole millimetres so path costs add exactly.
    length_mm: Vec<u64>,
    /// Per node: `(neighbor, link)` sorted by neighbor index.
    adjacency: Vec<Vec<(NodeIx, LinkIx)>>,
    link_lookup: HashMap<(NodeIx, NodeIx), LinkIx>,
    source_dist: WeightedIndex<f64>,
    dest_dist: Vec<DestinationDist>,
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<Topology, TopologyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: TopologyFile = serde_json::from_str(&text).map_err(|source| TopologyError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    Topology::from_file(file)
}

impl Topology {
    pub fn from_file(file: TopologyFile) -> Result<Self, TopologyError> {
        let TopologyFile { nodes, links, .. } = file;
        if nodes.len() < 2 {
            return Err(TopologyError::TooFewNodes(nodes.len()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(TopologyError::DuplicateNode(n.id.clone()));
            }
            if !(0.0..=1.0).contains(&n.gen_prob) {
                return Err(TopologyError::ProbabilityRange {
                    id: n.id.clone(),
                    prob: n.gen_prob,
                });
            }
        }
        let sum: f64 = nodes.iter().map(|n| n.gen_prob).sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(TopologyError::ProbabilitySum(sum));
        }

        let mut endpoints = Vec::with_capacity(links.len());
        let mut length_mm = Vec::with_capacity(links.len());
        let mut link_lookup = HashMap::with_capacity(links.len() * 2);
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (li, l) in links.iter().enumerate() {
            let lookup = |id: &String| {
                index.get(id).copied().ok_or_else(|| TopologyError::UnknownNode {
                    a: l.a.clone(),
                    b: l.b.clone(),
                    missing: id.clone(),
                })
            };
            let (a, b) = (lookup(&l.a)?, lookup(&l.b)?);
            if a == b {
                return Err(TopologyError::SelfLoop {
                    a: l.a.clone(),
                    b: l.b.clone(),
                });
            }
            if !(l.length_km > 0.0) || !l.length_km.is_finite() {
                return Err(TopologyError::NonpositiveLength {
                    a: l.a.clone(),
                    b: l.b.clone(),
                    length_km: l.length_km,
                });
            }
            if link_lookup.insert((a, b), li).is_some() {
                return Err(TopologyError::DuplicateLink {
                    a: l.a.clone(),
                    b: l.b.clone(),
                });
            }
            link_lookup.insert((b, a), li);
            endpoints.push((a, b));
            length_mm.push(((l.length_km * 1e6).round() as u64).max(1));
            adjacency[a].push((b, li));
            adjacency[b].push((a, li));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        // connectivity from node 0
        let mut seen = vec![false; nodes.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(TopologyError::Disconnected(nodes[i].id.clone()));
        }

        let probs: Vec<f64> = nodes.iter().map(|n| n.gen_prob).collect();
        let source_dist = WeightedIndex::new(&probs).map_err(|_| TopologyError::ProbabilitySum(sum))?;
        let dest_dist = (0..nodes.len())
            .map(|s| {
                let w: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| if i == s { 0.0 } else { p })
                    .collect();
                match WeightedIndex::new(&w) {
                    Ok(d) => DestinationDist::Weighted(d),
                    Err(_) => DestinationDist::Uniform,
                }
            })
            .collect();

        Ok(Self {
            nodes,
            links,
            endpoints,
            length_mm,
            adjacency,
            link_lookup,
            source_dist,
            dest_dist,
        })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_id(&self, n: NodeIx) -> &str {
        &self.nodes[n].id
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIx> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn endpoints(&self, l: LinkIx) -> (NodeIx, NodeIx) {
        self.endpoints[l]
    }

    pub fn length_km(&self, l: LinkIx) -> f64 {
        self.links[l].length_km
    }

    pub fn length_mm(&self, l: LinkIx) -> u64 {
        self.length_mm[l]
    }

    pub fn neighbors(&self, n: NodeIx) -> &[(NodeIx, LinkIx)] {
        &self.adjacency[n]
    }

    pub fn link_between(&self, a: NodeIx, b: NodeIx) -> Option<LinkIx> {
        self.link_lookup.get(&(a, b)).copied()
    }

    /// Links traversed by a node path, or `None` if some hop is not a link.
    pub fn path_links(&self, path: &[NodeIx]) -> Option<Vec<LinkIx>> {
        path.windows(2).map(|w| self.link_between(w[0], w[1])).collect()
    }

    pub fn mean_link_length_km(&self) -> f64 {
        self.links.iter().map(|l| l.length_km).sum::<f64>() / self.links.len().max(1) as f64
    }

    /// Gravity-model endpoint draw. The source follows `gen_prob`; the
    /// destination follows `gen_prob` renormalised over the other nodes, or
    /// is uniform over them when they all have zero probability.
    pub fn sample_endpoints<R: Rng + ?Sized>(&self, rng: &mut R) -> (NodeIx, NodeIx) {
        let s = self.source_dist.sample(rng);
        let d = match &self.dest_dist[s] {
            DestinationDist::Weighted(w) => w.sample(rng),
            DestinationDist::Uniform => {
                let k = rng.random_range(0..self.nodes.len() - 1);
                if k >= s {
                    k + 1
                } else {
                    k
                }
            }
        };
        (s, d)
    }
}
