//! k-shortest loopless paths (Yen) and routing + spectrum assignment.
//!
//! Path costs are summed in whole millimetres so that equal-length paths
//! tie exactly; ties are broken by the lexicographic node-index sequence.
//! The spur search returns the lexicographically smallest of the shortest
//! spur paths, which is what makes Yen's output coincide with a full
//! (cost, sequence) sort of all loopless paths.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::qot::{slot_capacity, ModulationRow, QotEstimator};
use crate::spectrum::{BandPlan, SlotRange, SpectrumGrid};
use crate::topology::{LinkIx, NodeIx, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub k: usize,
    pub max_slots_per_lightpath: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_slots_per_lightpath: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePath {
    pub nodes: Vec<NodeIx>,
    pub links: Vec<LinkIx>,
    pub cost_mm: u64,
}

impl CandidatePath {
    fn from_nodes(topology: &Topology, nodes: Vec<NodeIx>) -> Self {
        let links = topology.path_links(&nodes).expect("path follows links");
        let cost_mm = links.iter().map(|&l| topology.length_mm(l)).sum();
        Self { nodes, links, cost_mm }
    }

    pub fn length_km(&self) -> f64 {
        self.cost_mm as f64 / 1e6
    }
}

/// Lexicographically smallest shortest path from `src` to `dst` avoiding
/// banned nodes and links.
fn lexmin_shortest(
    topology: &Topology,
    src: NodeIx,
    dst: NodeIx,
    banned_node: &[bool],
    banned_link: &[bool],
) -> Option<Vec<NodeIx>> {
    let n = topology.node_count();
    let mut dist = vec![u64::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[dst] = 0;
    heap.push(Reverse((0u64, dst)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, l) in topology.neighbors(u) {
            if banned_node[v] || banned_link[l] {
                continue;
            }
            let nd = d + topology.length_mm(l);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((nd, v)));
            }
        }
    }
    if dist[src] == u64::MAX {
        return None;
    }
    let mut path = vec![src];
    let mut u = src;
    while u != dst {
        let &(next, _) = topology
            .neighbors(u)
            .iter()
            .find(|&&(v, l)| {
                !banned_node[v]
                    && !banned_link[l]
                    && dist[v] != u64::MAX
                    && dist[v] + topology.length_mm(l) == dist[u]
            })
            .expect("a shortest-path successor exists");
        path.push(next);
        u = next;
    }
    Some(path)
}

/// Up to `k` loopless paths from `s` to `d`, ascending by length, ties by
/// node sequence.
pub fn k_shortest_paths(topology: &Topology, s: NodeIx, d: NodeIx, k: usize) -> Vec<CandidatePath> {
    let n = topology.node_count();
    if k == 0 || s == d || s >= n || d >= n {
        return Vec::new();
    }
    let mut banned_node = vec![false; n];
    let mut banned_link = vec![false; topology.link_count()];
    let Some(first) = lexmin_shortest(topology, s, d, &banned_node, &banned_link) else {
        return Vec::new();
    };
    let mut accepted = vec![CandidatePath::from_nodes(topology, first)];
    let mut candidates: BTreeSet<(u64, Vec<NodeIx>)> = BTreeSet::new();

    while accepted.len() < k {
        let prev = accepted.last().expect("nonempty").nodes.clone();
        for i in 0..prev.len() - 1 {
            let spur = prev[i];
            let root = &prev[..=i];
            banned_node.iter_mut().for_each(|b| *b = false);
            banned_link.iter_mut().for_each(|b| *b = false);
            for p in &accepted {
                if p.nodes.len() > i + 1 && &p.nodes[..=i] == root {
                    banned_link[p.links[i]] = true;
                }
            }
            for &r in &root[..i] {
                banned_node[r] = true;
            }
            if let Some(tail) = lexmin_shortest(topology, spur, d, &banned_node, &banned_link) {
                let mut nodes = root[..i].to_vec();
                nodes.extend(tail);
                if accepted.iter().any(|p| p.nodes == nodes) {
                    continue;
                }
                let cost = CandidatePath::from_nodes(topology, nodes.clone()).cost_mm;
                candidates.insert((cost, nodes));
            }
        }
        match candidates.pop_first() {
            Some((_, nodes)) => accepted.push(CandidatePath::from_nodes(topology, nodes)),
            None => break,
        }
    }
    accepted
}

/// The (path, slots) chosen for a request.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePlan {
    pub path: Vec<NodeIx>,
    pub links: Vec<LinkIx>,
    pub slots: SlotRange,
    pub n_slots: usize,
    pub gsnr_db: f64,
    pub slot_rate_gbps: f64,
    /// Achievable rate over the chosen slots.
    pub rate_gbps: f64,
    pub modulation: String,
}

/// Precomputed candidate paths for every ordered node pair plus the QoT
/// model used to price slots.
pub struct Router<'a> {
    topology: &'a Topology,
    paths: Vec<Vec<CandidatePath>>,
    estimator: &'a dyn QotEstimator,
    table: &'a [ModulationRow],
    max_slots: usize,
    max_slot_rate: f64,
}

impl<'a> Router<'a> {
    pub fn new(
        topology: &'a Topology,
        config: &RoutingConfig,
        estimator: &'a dyn QotEstimator,
        table: &'a [ModulationRow],
    ) -> Self {
        let n = topology.node_count();
        let paths = (0..n * n)
            .map(|i| k_shortest_paths(topology, i / n, i % n, config.k))
            .collect();
        let max_slot_rate = table.iter().map(|r| r.slot_rate_gbps).fold(0.0, f64::max);
        Self {
            topology,
            paths,
            estimator,
            table,
            max_slots: config.max_slots_per_lightpath,
            max_slot_rate,
        }
    }

    pub fn paths(&self, s: NodeIx, d: NodeIx) -> &[CandidatePath] {
        &self.paths[s * self.topology.node_count() + d]
    }

    /// First feasible candidate, scanning path-major, then slot count, then
    /// band (C first), with first-fit inside each band.
    pub fn rsa(&self, s: NodeIx, d: NodeIx, rate_gbps: f64, grid: &SpectrumGrid, plan: &BandPlan) -> Option<CandidatePlan> {
        for path in self.paths(s, d) {
            for n_slots in 1..=self.max_slots {
                if self.max_slot_rate * (n_slots as f64) < rate_gbps {
                    continue;
                }
                for &band in plan.bands() {
                    let Some(slots) = grid.first_fit_in_band(&path.links, band, n_slots) else {
                        continue;
                    };
                    let gsnr_db = self.estimator.estimate_gsnr(self.topology, &path.links, slots, grid);
                    let report = slot_capacity(self.table, gsnr_db);
                    let achievable = report.slot_rate_gbps * n_slots as f64;
                    if achievable >= rate_gbps {
                        return Some(CandidatePlan {
                            path: path.nodes.clone(),
                            links: path.links.clone(),
                            slots,
                            n_slots,
                            gsnr_db,
                            slot_rate_gbps: report.slot_rate_gbps,
                            rate_gbps: achievable,
                            modulation: report.modulation.unwrap_or_default(),
                        });
                    }
                }
            }
        }
        None
    }
}
