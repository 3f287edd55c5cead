//! Bibliographic coupling between citing documents or their co-authors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Arc, CitationGraph, Node};
use crate::corpus::Corpus;
use crate::disambig::IdentityMap;
use crate::wos::normalize_author;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    Document,
    Coauthor,
}

#[derive(Debug, Clone, Default)]
pub struct CouplingOptions {
    /// Normalized author key left out of coauthor coupling (the focal author).
    pub exclude_author: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingEdge {
    pub a: usize,
    pub b: usize,
    pub shared: usize,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingGraph {
    pub entities: Vec<String>,
    /// Distinct references per entity.
    pub ref_counts: Vec<usize>,
    /// Sorted by (a, b) with a < b; pairs sharing nothing are omitted.
    pub edges: Vec<CouplingEdge>,
}

impl CouplingGraph {
    /// Cosine-normalized coupling between arbitrary reference sets.
    pub fn from_sets(entities: Vec<String>, sets: &[BTreeSet<String>]) -> Self {
        let mut holders: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (e, refs) in sets.iter().enumerate() {
            for r in refs {
                holders.entry(r.as_str()).or_default().push(e);
            }
        }
        let mut shared: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for list in holders.values() {
            for (x, &i) in list.iter().enumerate() {
                for &j in &list[x + 1..] {
                    *shared.entry((i, j)).or_insert(0) += 1;
                }
            }
        }
        let edges = shared
            .into_iter()
            .map(|((a, b), s)| CouplingEdge {
                a,
                b,
                shared: s,
                cosine: s as f64 / ((sets[a].len() * sets[b].len()) as f64).sqrt(),
            })
            .collect();
        CouplingGraph { ref_counts: sets.iter().map(BTreeSet::len).collect(), entities, edges }
    }

    /// Cosine-weighted view for community detection; arc direction is meaningless here.
    pub fn to_graph(&self) -> CitationGraph {
        let nodes = self.entities.iter().map(|id| Node { id: id.clone(), year: None }).collect();
        let arcs = self.edges.iter().map(|e| Arc { citing: e.a, cited: e.b, weight: e.cosine }).collect();
        CitationGraph { nodes, arcs, acyclic: false }
    }
}

/// Coupling over canonical reference identities. In coauthor mode an author's
/// reference set is the union over every record listing that author.
pub fn bibliographic_coupling(
    mode: CouplingMode,
    corpus: &Corpus,
    identity: &IdentityMap,
    options: &CouplingOptions,
) -> CouplingGraph {
    let refs_of = |rec: &crate::wos::DocumentRecord| -> BTreeSet<String> {
        rec.cited_refs.iter().map(|r| identity.canonical(&r.raw).to_string()).collect()
    };
    match mode {
        CouplingMode::Document => {
            let entities = corpus.records().iter().map(|r| r.id.clone()).collect();
            let sets: Vec<BTreeSet<String>> = corpus.records().iter().map(refs_of).collect();
            CouplingGraph::from_sets(entities, &sets)
        }
        CouplingMode::Coauthor => {
            let excluded = options.exclude_author.as_deref().map(normalize_author);
            let mut by_author: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for rec in corpus.records() {
                let refs = refs_of(rec);
                let authors: BTreeSet<String> = rec
                    .authors
                    .iter()
                    .map(|a| normalize_author(a))
                    .filter(|a| !a.is_empty() && Some(a) != excluded.as_ref())
                    .collect();
                for a in authors {
                    by_author.entry(a).or_default().extend(refs.iter().cloned());
                }
            }
            let (entities, sets): (Vec<String>, Vec<BTreeSet<String>>) = by_author.into_iter().unzip();
            CouplingGraph::from_sets(entities, &sets)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn half_overlap() {
        let g = CouplingGraph::from_sets(vec!["A".into(), "B".into()], &[set(&["r1", "r2"]), set(&["r2", "r3"])]);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].shared, 1);
        assert!((g.edges[0].cosine - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        let g = CouplingGraph::from_sets(
            vec!["A".into(), "B".into(), "C".into()],
            &[set(&["r1", "r2"]), set(&["r1", "r2"]), set(&["r9"])],
        );
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].cosine - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sets_have_no_edges() {
        let g = CouplingGraph::from_sets(vec!["A".into(), "B".into()], &[set(&[]), set(&[])]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn weighted_view_splits_on_weak_link() {
        let g = CouplingGraph::from_sets(
            ["A", "B", "C", "D"].map(String::from).to_vec(),
            &[set(&["r1", "r2"]), set(&["r1", "r2", "r5"]), set(&["r3", "r4", "r5"]), set(&["r3", "r4"])],
        );
        let view = g.to_graph();
        assert_eq!(view.arcs.len(), 3);
        let p = crate::citegraph::louvain(&view, 1, 1.0);
        assert_eq!(p.assignment, vec![0, 0, 1, 1]);
        let q = crate::citegraph::modularity(&view, &p.assignment).unwrap();
        assert!((p.q - q).abs() < 1e-9);
    }
}
