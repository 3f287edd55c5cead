//! Search path count (SPC) arc weights and forward main path extraction.
//!
//! Arcs are read in knowledge-flow direction, cited -> citing, so paths run
//! forward in time. Every node without predecessors hangs off a virtual
//! source and every node without successors feeds a virtual sink; the SPC of
//! an arc `u -> v` is the number of source-to-sink paths through it, i.e.
//! `paths(source -> u) * paths(v -> sink)`. Isolated records take no part.

use serde::Serialize;

use super::{topological_order, CitationGraph};
use crate::error::{Error, Result};

pub const DEFAULT_PATH_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowArc {
    /// The cited (older) record.
    pub from: usize,
    /// The citing (newer) record.
    pub to: usize,
    pub spc: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpcWeights {
    /// Sorted by (from, to).
    pub arcs: Vec<FlowArc>,
    /// Virtual source -> node, weighted by the node's paths to the sink.
    pub source_arcs: Vec<(usize, u128)>,
    /// Node -> virtual sink, weighted by the node's paths from the source.
    pub sink_arcs: Vec<(usize, u128)>,
    pub paths_from_source: Vec<u128>,
    pub paths_to_sink: Vec<u128>,
    pub total_paths: u128,
}

impl SpcWeights {
    pub fn arc(&self, from: usize, to: usize) -> Option<u128> {
        self.arcs
            .binary_search_by(|a| (a.from, a.to).cmp(&(from, to)))
            .ok()
            .map(|i| self.arcs[i].spc)
    }

    fn successors(&self, n: usize) -> Vec<Vec<(usize, u128)>> {
        let mut out = vec![Vec::new(); n];
        for a in &self.arcs {
            out[a.from].push((a.to, a.spc));
        }
        out
    }
}

pub fn spc_weights(dag: &CitationGraph) -> Result<SpcWeights> {
    let n = dag.nodes.len();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for a in &dag.arcs {
        succ[a.cited].push(a.citing);
        pred[a.citing].push(a.cited);
    }
    let order = topological_order(n, &succ).ok_or(Error::CyclicInput)?;
    let linked = |v: usize| !succ[v].is_empty() || !pred[v].is_empty();
    let overflow = |u: usize, v: usize| Error::PathCountOverflow(dag.nodes[u].id.clone(), dag.nodes[v].id.clone());

    let mut from_source = vec![0u128; n];
    for &v in &order {
        if !linked(v) {
            continue;
        }
        from_source[v] = if pred[v].is_empty() {
            1
        } else {
            pred[v]
                .iter()
                .try_fold(0u128, |acc, &u| acc.checked_add(from_source[u]))
                .ok_or_else(|| overflow(v, v))?
        };
    }
    let mut to_sink = vec![0u128; n];
    for &v in order.iter().rev() {
        if !linked(v) {
            continue;
        }
        to_sink[v] = if succ[v].is_empty() {
            1
        } else {
            succ[v]
                .iter()
                .try_fold(0u128, |acc, &w| acc.checked_add(to_sink[w]))
                .ok_or_else(|| overflow(v, v))?
        };
    }

    let mut arcs = Vec::with_capacity(dag.arcs.len());
    for a in &dag.arcs {
        let (u, v) = (a.cited, a.citing);
        let spc = from_source[u].checked_mul(to_sink[v]).ok_or_else(|| overflow(u, v))?;
        arcs.push(FlowArc { from: u, to: v, spc });
    }
    arcs.sort_by_key(|a| (a.from, a.to));

    let source_arcs: Vec<(usize, u128)> = (0..n)
        .filter(|&v| linked(v) && pred[v].is_empty())
        .map(|v| (v, to_sink[v]))
        .collect();
    let sink_arcs: Vec<(usize, u128)> = (0..n)
        .filter(|&v| linked(v) && succ[v].is_empty())
        .map(|v| (v, from_source[v]))
        .collect();
    let total_paths = source_arcs
        .iter()
        .try_fold(0u128, |acc, &(_, w)| acc.checked_add(w))
        .ok_or_else(|| Error::PathCountOverflow("source".into(), "sink".into()))?;

    Ok(SpcWeights {
        arcs,
        source_arcs,
        sink_arcs,
        paths_from_source: from_source,
        paths_to_sink: to_sink,
        total_paths,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathArc {
    pub from: usize,
    pub to: usize,
    pub spc: u128,
}

/// One main path, oldest record first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MainPath {
    pub nodes: Vec<usize>,
    pub ids: Vec<String>,
    pub arcs: Vec<PathArc>,
    pub total_weight: u128,
}

/// Forward greedy main path from the virtual source.
///
/// At each step the out-arcs with maximal SPC are candidates. Among them, a
/// candidate whose own strongest out-arc is heavier is preferred; candidates
/// still equal on both counts are all followed, up to `cap` paths.
pub fn main_path(weights: &SpcWeights, graph: &CitationGraph, cap: usize) -> Vec<MainPath> {
    let n = graph.nodes.len();
    let succ = weights.successors(n);
    let best_out = |v: usize| succ[v].iter().map(|&(_, w)| w).max().unwrap_or(0);
    let choose = |options: &[(usize, u128)]| -> Vec<(usize, u128)> {
        let Some(top) = options.iter().map(|&(_, w)| w).max() else {
            return Vec::new();
        };
        let tied: Vec<(usize, u128)> = options.iter().copied().filter(|&(_, w)| w == top).collect();
        let look = tied.iter().map(|&(v, _)| best_out(v)).max().unwrap_or(0);
        let mut chosen: Vec<(usize, u128)> = tied.into_iter().filter(|&(v, _)| best_out(v) == look).collect();
        chosen.sort_unstable();
        chosen
    };

    // (nodes so far, chosen via arcs with weights)
    let mut stack: Vec<(Vec<usize>, Vec<PathArc>)> = choose(&weights.source_arcs)
        .into_iter()
        .rev()
        .map(|(v, _)| (vec![v], Vec::new()))
        .collect();
    let mut finished: Vec<MainPath> = Vec::new();
    while let Some((nodes, arcs)) = stack.pop() {
        if cap > 0 && finished.len() >= cap {
            break;
        }
        let tail = *nodes.last().expect("non-empty path");
        let next = choose(&succ[tail]);
        if next.is_empty() {
            let total_weight = arcs.iter().map(|a| a.spc).sum();
            finished.push(MainPath {
                ids: nodes.iter().map(|&i| graph.nodes[i].id.clone()).collect(),
                nodes,
                arcs,
                total_weight,
            });
            continue;
        }
        for &(v, w) in next.iter().rev() {
            let mut p = nodes.clone();
            p.push(v);
            let mut a = arcs.clone();
            a.push(PathArc { from: tail, to: v, spc: w });
            stack.push((p, a));
        }
    }
    finished
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citegraph::tests::nodes;
    use crate::citegraph::{acyclicize, CitationGraph};

    /// Build from flow arcs (older -> newer) so fixtures read forward in time.
    fn flow_graph(ids: &[&str], flow: &[(usize, usize)]) -> CitationGraph {
        let spec: Vec<(&str, i32)> = ids.iter().enumerate().map(|(i, id)| (*id, 2000 + i as i32)).collect();
        let mut g = CitationGraph::from_parts(nodes(&spec), flow.iter().map(|&(old, new)| (new, old)));
        g.acyclic = true;
        g
    }

    #[test]
    fn chain_has_unit_weights() {
        let g = flow_graph(&["a", "b", "c"], &[(0, 1), (1, 2)]);
        let w = spc_weights(&g).unwrap();
        assert!(w.arcs.iter().all(|a| a.spc == 1));
        assert_eq!(w.total_paths, 1);
        let paths = main_path(&w, &g, DEFAULT_PATH_CAP);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn diamond_ties() {
        let g = flow_graph(&["a", "b", "c", "d"], &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let w = spc_weights(&g).unwrap();
        assert!(w.arcs.iter().all(|a| a.spc == 1));
        assert_eq!(w.total_paths, 2);
        let paths = main_path(&w, &g, DEFAULT_PATH_CAP);
        let ids: Vec<Vec<String>> = paths.into_iter().map(|p| p.ids).collect();
        assert_eq!(ids, vec![vec!["a", "b", "d"], vec!["a", "c", "d"]]);
    }

    #[test]
    fn feeder_diamond_prefers_fed_node() {
        // f feeds b: paths a-b-d, a-c-d, f-b-d
        let g = flow_graph(&["a", "b", "c", "d", "f"], &[(0, 1), (0, 2), (1, 3), (2, 3), (4, 1)]);
        let w = spc_weights(&g).unwrap();
        assert_eq!(w.arc(1, 3), Some(2));
        assert_eq!(w.arc(2, 3), Some(1));
        assert_eq!(w.arc(4, 1), Some(1));
        assert_eq!(w.total_paths, 3);
        let paths = main_path(&w, &g, DEFAULT_PATH_CAP);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].ids, vec!["a", "b", "d"]);
        assert_eq!(paths[0].total_weight, 3);
    }

    #[test]
    fn disjoint_chains() {
        let g = flow_graph(&["a", "b", "c", "d"], &[(0, 1), (2, 3)]);
        let w = spc_weights(&g).unwrap();
        assert!(w.arcs.iter().all(|a| a.spc == 1));
        assert_eq!(w.total_paths, 2);
    }

    #[test]
    fn isolated_nodes_ignored() {
        let g = flow_graph(&["a", "b", "x"], &[(0, 1)]);
        let w = spc_weights(&g).unwrap();
        assert_eq!(w.total_paths, 1);
        assert_eq!(w.source_arcs, vec![(0, 1)]);
    }

    #[test]
    fn cyclic_input_rejected() {
        let g = CitationGraph::from_parts(nodes(&[("A", 1990), ("B", 1990)]), [(0, 1), (1, 0)]);
        assert!(matches!(spc_weights(&g), Err(Error::CyclicInput)));
        let (dag, _) = acyclicize(&g);
        assert!(spc_weights(&dag).is_ok());
    }

    #[test]
    fn path_cap_limits_output() {
        let g = flow_graph(&["a", "b", "c", "d"], &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let w = spc_weights(&g).unwrap();
        assert_eq!(main_path(&w, &g, 1).len(), 1);
    }
}
