//! Intra-set citation graph analyses: chronology repair, search path counts
//! and main path, shortest paths, Louvain communities, bibliographic coupling.

mod coupling;
mod louvain;
mod spc;

pub use coupling::{bibliographic_coupling, CouplingEdge, CouplingGraph, CouplingMode, CouplingOptions};
pub use louvain::{louvain, modularity, Partition, DEFAULT_SEED};
pub use spc::{main_path, spc_weights, MainPath, SpcWeights, DEFAULT_PATH_CAP};

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::corpus::{CitationEdge, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Node {
    pub id: String,
    pub year: Option<i32>,
}

/// Directed citing -> cited arc between node indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arc {
    pub citing: usize,
    pub cited: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CitationGraph {
    pub nodes: Vec<Node>,
    /// Sorted by (citing, cited); no self-loops or parallel arcs.
    pub arcs: Vec<Arc>,
    pub acyclic: bool,
}

impl CitationGraph {
    /// Build from explicit nodes and arcs; arcs are deduplicated and self-loops dropped.
    pub fn from_parts(nodes: Vec<Node>, arcs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let set: BTreeSet<(usize, usize)> = arcs.into_iter().filter(|(a, b)| a != b).collect();
        let arcs = set.into_iter().map(|(citing, cited)| Arc { citing, cited, weight: 1.0 }).collect();
        CitationGraph { nodes, arcs, acyclic: false }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Successor lists in citing -> cited orientation.
    pub fn out_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for a in &self.arcs {
            adj[a.citing].push(a.cited);
        }
        adj
    }

    /// Neighbor lists of the undirected view, sorted and deduplicated.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for a in &self.arcs {
            adj[a.citing].push(a.cited);
            adj[a.cited].push(a.citing);
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }

    /// Weakly connected components, largest first; each component sorted.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.undirected_neighbors();
        let mut seen = vec![false; self.nodes.len()];
        let mut comps = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
        comps
    }

    pub fn is_acyclic(&self) -> bool {
        topological_order(self.nodes.len(), &self.out_neighbors()).is_some()
    }
}

/// Kahn's algorithm; smallest available index first. `None` on a cycle.
pub(crate) fn topological_order(n: usize, succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    for l in succ {
        for &v in l {
            indeg[v] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = ready.pop_first() {
        order.push(u);
        for &v in &succ[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.insert(v);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// One node per corpus record, one arc per citation edge.
pub fn build_graph(edges: &[CitationEdge], corpus: &Corpus) -> CitationGraph {
    let nodes = corpus
        .records()
        .iter()
        .map(|r| Node { id: r.id.clone(), year: r.pub_year })
        .collect();
    CitationGraph::from_parts(nodes, edges.iter().map(|e| (e.citing_index, e.cited_index)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    /// The citing record is dated before the record it cites.
    Chronology,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RemovedArc {
    pub citing: String,
    pub cited: String,
    pub reason: RemovalReason,
}

/// Back arcs met by a depth-first search that starts from nodes in id order
/// and visits successors in id order.
fn back_arcs(graph: &CitationGraph, succ: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let n = graph.nodes.len();
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by(|&a, &b| graph.nodes[a].id.cmp(&graph.nodes[b].id));
    let ordered: Vec<Vec<usize>> = succ
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.sort_by(|&a, &b| graph.nodes[a].id.cmp(&graph.nodes[b].id));
            l
        })
        .collect();

    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut found = Vec::new();
    for &root in &by_id {
        if state[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        state[root] = 1;
        while let Some((u, next)) = stack.last_mut() {
            let u = *u;
            if let Some(&v) = ordered[u].get(*next) {
                *next += 1;
                match state[v] {
                    0 => {
                        state[v] = 1;
                        stack.push((v, 0));
                    }
                    1 => found.push((u, v)),
                    _ => {}
                }
            } else {
                state[u] = 2;
                stack.pop();
            }
        }
    }
    found
}

/// Remove chronology anomalies, then break remaining cycles one back arc at a
/// time, always removing the back arc with the smallest (citing id, cited id).
pub fn acyclicize(graph: &CitationGraph) -> (CitationGraph, Vec<RemovedArc>) {
    let mut removed = Vec::new();
    let mut arcs = Vec::with_capacity(graph.arcs.len());
    for a in &graph.arcs {
        match (graph.nodes[a.citing].year, graph.nodes[a.cited].year) {
            (Some(citing), Some(cited)) if citing < cited => removed.push(RemovedArc {
                citing: graph.nodes[a.citing].id.clone(),
                cited: graph.nodes[a.cited].id.clone(),
                reason: RemovalReason::Chronology,
            }),
            _ => arcs.push(*a),
        }
    }
    let mut out = CitationGraph { nodes: graph.nodes.clone(), arcs, acyclic: false };
    loop {
        let succ = out.out_neighbors();
        if topological_order(out.nodes.len(), &succ).is_some() {
            break;
        }
        let victim = back_arcs(&out, &succ)
            .into_iter()
            .min_by(|&(a, b), &(c, d)| {
                (&out.nodes[a].id, &out.nodes[b].id).cmp(&(&out.nodes[c].id, &out.nodes[d].id))
            })
            .expect("a cyclic graph has a back arc");
        out.arcs.retain(|a| (a.citing, a.cited) != victim);
        removed.push(RemovedArc {
            citing: out.nodes[victim.0].id.clone(),
            cited: out.nodes[victim.1].id.clone(),
            reason: RemovalReason::Cycle,
        });
    }
    out.acyclic = true;
    (out, removed)
}

/// Default upper bound on the number of shortest paths enumerated.
pub const DEFAULT_SHORTEST_CAP: usize = 1000;

/// All shortest paths between two nodes on the undirected view, as node
/// index sequences in lexicographic order. Empty when disconnected.
pub fn shortest_paths(graph: &CitationGraph, from: usize, to: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    let n = graph.nodes.len();
    for x in [from, to] {
        if x >= n {
            return Err(Error::UnknownNode(x.to_string()));
        }
    }
    if from == to {
        return Ok(vec![vec![from]]);
    }
    let adj = graph.undirected_neighbors();
    let mut dist = vec![usize::MAX; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if dist[u] >= dist[to] {
            break;
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
            if dist[v] == dist[u] + 1 {
                preds[v].push(u);
            }
        }
    }
    if dist[to] == usize::MAX {
        return Ok(Vec::new());
    }
    // walk predecessors back from the target
    let mut paths = Vec::new();
    let mut stack = vec![vec![to]];
    while let Some(partial) = stack.pop() {
        let head = *partial.last().expect("non-empty");
        if head == from {
            let mut p = partial;
            p.reverse();
            paths.push(p);
            if paths.len() >= cap {
                break;
            }
            continue;
        }
        for &p in preds[head].iter().rev() {
            let mut next = partial.clone();
            next.push(p);
            stack.push(next);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Shortest paths addressed by record id.
pub fn shortest_paths_by_id(graph: &CitationGraph, from: &str, to: &str, cap: usize) -> Result<Vec<Vec<String>>> {
    let a = graph.index_of(from).ok_or_else(|| Error::UnknownNode(from.to_string()))?;
    let b = graph.index_of(to).ok_or_else(|| Error::UnknownNode(to.to_string()))?;
    Ok(shortest_paths(graph, a, b, cap)?
        .into_iter()
        .map(|p| p.into_iter().map(|i| graph.nodes[i].id.clone()).collect())
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn nodes(spec: &[(&str, i32)]) -> Vec<Node> {
        spec.iter().map(|(id, y)| Node { id: id.to_string(), year: Some(*y) }).collect()
    }

    #[test]
    fn chain_graph() {
        let g = CitationGraph::from_parts(nodes(&[("A", 1980), ("B", 1985), ("C", 1990)]), [(1, 0), (2, 1)]);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.arcs.len(), 2);
        assert_eq!(g.components().len(), 1);
    }

    #[test]
    fn empty_and_duplicate_edges() {
        let g = CitationGraph::from_parts(nodes(&[("A", 1980), ("B", 1985)]), []);
        assert_eq!(g.components().len(), 2);
        let g = CitationGraph::from_parts(nodes(&[("A", 1980), ("B", 1985)]), [(1, 0), (1, 0), (1, 1)]);
        assert_eq!(g.arcs.len(), 1);
    }

    #[test]
    fn mutual_same_year_citation() {
        let g = CitationGraph::from_parts(nodes(&[("A", 1990), ("B", 1990)]), [(0, 1), (1, 0)]);
        let (dag, removed) = acyclicize(&g);
        assert_eq!(removed, vec![RemovedArc { citing: "B".into(), cited: "A".into(), reason: RemovalReason::Cycle }]);
        assert!(dag.is_acyclic());
        assert_eq!(dag.arcs.len(), 1);
        let (again, none) = acyclicize(&dag);
        assert!(none.is_empty());
        assert_eq!(again.arcs, dag.arcs);
    }

    #[test]
    fn chronology_anomaly_removed() {
        let g = CitationGraph::from_parts(nodes(&[("A", 1990), ("B", 1995)]), [(0, 1)]);
        let (dag, removed) = acyclicize(&g);
        assert!(dag.arcs.is_empty());
        assert_eq!(removed[0].reason, RemovalReason::Chronology);
    }

    #[test]
    fn acyclic_input_unchanged() {
        let g = CitationGraph::from_parts(nodes(&[("A", 1980), ("B", 1985), ("C", 1990)]), [(1, 0), (2, 1), (2, 0)]);
        let (dag, removed) = acyclicize(&g);
        assert!(removed.is_empty());
        assert_eq!(dag.arcs, g.arcs);
        assert!(dag.acyclic);
    }

    #[test]
    fn shortest_path_examples() {
        let g = CitationGraph::from_parts(nodes(&[("a", 1), ("b", 2), ("c", 3), ("d", 4)]), [(1, 0), (2, 1)]);
        assert_eq!(shortest_paths(&g, 0, 2, 10).unwrap(), vec![vec![0, 1, 2]]);
        assert_eq!(shortest_paths(&g, 0, 0, 10).unwrap(), vec![vec![0]]);
        assert!(shortest_paths(&g, 0, 3, 10).unwrap().is_empty());
        assert!(matches!(shortest_paths(&g, 0, 9, 10), Err(Error::UnknownNode(_))));
        assert!(matches!(shortest_paths_by_id(&g, "a", "zz", 10), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn shortest_path_multiplicity() {
        // square a-b-d, a-c-d
        let g = CitationGraph::from_parts(nodes(&[("a", 1), ("b", 2), ("c", 2), ("d", 3)]), [(1, 0), (2, 0), (3, 1), (3, 2)]);
        assert_eq!(shortest_paths(&g, 0, 3, 10).unwrap(), vec![vec![0, 1, 3], vec![0, 2, 3]]);
        assert_eq!(shortest_paths(&g, 0, 3, 1).unwrap().len(), 1);
    }
}
