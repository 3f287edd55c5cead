//! Louvain community detection on the undirected view of a citation graph.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CitationGraph;
use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
const MAX_PASSES: usize = 1000;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community per node index, dense from 0 in order of first appearance.
    pub assignment: Vec<usize>,
    pub communities: usize,
    /// Standard (resolution 1) modularity of `assignment`.
    pub q: f64,
}

/// Weighted undirected multigraph with self-loops, as used between Louvain levels.
#[derive(Debug, Clone)]
struct WGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    total: f64, // 2m
}

impl WGraph {
    fn from_citation(graph: &CitationGraph) -> Self {
        let n = graph.nodes.len();
        let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for a in &graph.arcs {
            let key = (a.citing.min(a.cited), a.citing.max(a.cited));
            *pairs.entry(key).or_insert(0.0) += a.weight;
        }
        let mut self_loop = vec![0.0; n];
        let mut adj = vec![Vec::new(); n];
        for ((i, j), w) in pairs {
            if i == j {
                self_loop[i] += w;
            } else {
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
        Self::finish(adj, self_loop)
    }

    fn finish(adj: Vec<Vec<(usize, f64)>>, self_loop: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loop)
            .map(|(l, s)| l.iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total = degree.iter().sum();
        WGraph { adj, self_loop, degree, total }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, comm: &[usize], resolution: f64) -> f64 {
        if self.total == 0.0 {
            return 0.0;
        }
        let k = comm.iter().max().map_or(0, |m| m + 1);
        let mut internal = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for i in 0..self.len() {
            tot[comm[i]] += self.degree[i];
            internal[comm[i]] += 2.0 * self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == comm[i] {
                    internal[comm[i]] += w;
                }
            }
        }
        (0..k)
            .map(|c| internal[c] / self.total - resolution * (tot[c] / self.total).powi(2))
            .sum()
    }

    /// One round of local moving. Returns dense community labels.
    fn local_moving(&self, resolution: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot: Vec<f64> = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut link = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        for _ in 0..MAX_PASSES {
            let mut moved = false;
            for &i in &order {
                let ki = self.degree[i];
                let old = comm[i];
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    link[c] += w;
                }
                tot[old] -= ki;
                let gain = |c: usize, link_c: f64| link_c - resolution * tot[c] * ki / self.total;
                let mut best = old;
                let mut best_gain = gain(old, link[old]);
                for &c in &touched {
                    let g = gain(c, link[c]);
                    if g > best_gain + EPS {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ki;
                comm[i] = best;
                if best != old {
                    moved = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                    seen[c] = false;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        relabel(&comm)
    }

    fn aggregate(&self, comm: &[usize]) -> WGraph {
        let k = comm.iter().max().map_or(0, |m| m + 1);
        let mut self_loop = vec![0.0; k];
        let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for i in 0..self.len() {
            self_loop[comm[i]] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                if j < i {
                    continue;
                }
                let (a, b) = (comm[i], comm[j]);
                if a == b {
                    self_loop[a] += w;
                } else {
                    *pairs.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
                }
            }
        }
        let mut adj = vec![Vec::new(); k];
        for ((a, b), w) in pairs {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        WGraph::finish(adj, self_loop)
    }
}

fn relabel(comm: &[usize]) -> Vec<usize> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    comm.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Two-phase Louvain (local moving, aggregation) repeated until a level
/// changes nothing. Visit order is shuffled by a generator seeded with `seed`.
pub fn louvain(graph: &CitationGraph, seed: u64, resolution: f64) -> Partition {
    let base = WGraph::from_citation(graph);
    let n = base.len();
    let mut assignment: Vec<usize> = (0..n).collect();
    if base.total == 0.0 {
        return Partition { communities: n, assignment, q: 0.0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = base.clone();
    let mut best_q = base.modularity(&assignment, resolution);
    loop {
        let comm = level.local_moving(resolution, &mut rng);
        let k = comm.iter().max().map_or(0, |m| m + 1);
        if k == level.len() {
            break;
        }
        let candidate: Vec<usize> = assignment.iter().map(|&c| comm[c]).collect();
        let q = base.modularity(&candidate, resolution);
        if q < best_q - EPS {
            break;
        }
        best_q = q;
        assignment = candidate;
        level = level.aggregate(&comm);
    }
    let assignment = relabel(&assignment);
    let communities = assignment.iter().max().map_or(0, |m| m + 1);
    let q = base.modularity(&assignment, 1.0);
    Partition { assignment, communities, q }
}

/// `Q = sum_c [ e_c / m - (d_c / 2m)^2 ]` on the undirected weighted view; 0 without edges.
pub fn modularity(graph: &CitationGraph, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != graph.nodes.len() {
        return Err(Error::PartitionMismatch { expected: graph.nodes.len(), got: assignment.len() });
    }
    let base = WGraph::from_citation(graph);
    Ok(base.modularity(&relabel(assignment), 1.0))
}
