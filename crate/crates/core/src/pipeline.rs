//! Everything derived from a project file, computed in one place so the CLI
//! and the HTTP service agree on every number.

use crate::citegraph::{
    acyclicize, build_graph, louvain, main_path, spc_weights, CitationGraph, MainPath, Partition, RemovedArc,
    SpcWeights,
};
use crate::corpus::{Corpus, EdgeSet};
use crate::disambig::{apply_ledger, auto_cluster, ClusterConfig, ClusterSet, IdentityMap, ReplayDiagnostic};
use crate::error::{Error, Result};
use crate::io::{ProjectFile, Settings};
use crate::rpys::{median_deviation, spectrum, top_referenced, DeviationSeries, Segmentation, Spectrum, TopReference, YearRange};

#[derive(Debug, Clone)]
pub struct Analysis {
    pub corpus: Corpus,
    pub edges: EdgeSet,
    /// Clusters before any manual decision.
    pub auto: ClusterSet,
    /// Clusters after replaying the ledger.
    pub clusters: ClusterSet,
    pub replay: Vec<ReplayDiagnostic>,
    pub settings: Settings,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct MainPathResult {
    pub dag: CitationGraph,
    pub removed: Vec<RemovedArc>,
    pub weights: SpcWeights,
    pub paths: Vec<MainPath>,
}

impl Analysis {
    pub fn from_project(p: &ProjectFile) -> Result<Self> {
        if p.records.is_empty() {
            return Err(Error::EmptyExport);
        }
        let corpus = Corpus::new(p.records.clone());
        let edges = corpus.build_citation_edges();
        let config = ClusterConfig::with_threshold(p.settings.threshold)?;
        let auto = auto_cluster(corpus.all_refs(), &config);
        let (clusters, replay) = apply_ledger(&auto, &p.ledger);
        Ok(Analysis {
            corpus,
            edges,
            auto,
            clusters,
            replay,
            settings: p.settings.clone(),
            fingerprint: p.state_fingerprint(),
        })
    }

    pub fn rpy_range(&self) -> Result<Option<YearRange>> {
        self.settings.rpy_range.as_deref().map(str::parse).transpose()
    }

    pub fn segmentation(&self) -> Result<Segmentation> {
        self.settings.segmentation.parse()
    }

    pub fn identity(&self) -> IdentityMap {
        IdentityMap::from_clusters(&self.clusters.clusters)
    }

    pub fn spectrum(&self, range: Option<YearRange>) -> Result<(Spectrum, DeviationSeries)> {
        let s = spectrum(self.corpus.all_refs(), range)?;
        let d = median_deviation(&s);
        Ok((s, d))
    }

    /// Most-referenced works, variants collapsed by cluster. With
    /// `reviewed_only`, only clusters a reviewer touched collapse.
    pub fn top_referenced(&self, min_count: u64, reviewed_only: bool) -> Vec<TopReference> {
        let map = if reviewed_only {
            IdentityMap::reviewed_only(&self.clusters.clusters)
        } else {
            self.identity()
        };
        top_referenced(self.corpus.all_refs(), min_count, Some(|raw: &str| map.canonical(raw).to_string()))
    }

    pub fn graph(&self) -> CitationGraph {
        build_graph(&self.edges.edges, &self.corpus)
    }

    pub fn main_paths(&self) -> Result<MainPathResult> {
        let (dag, removed) = acyclicize(&self.graph());
        let weights = spc_weights(&dag)?;
        let paths = main_path(&weights, &dag, self.settings.main_path_cap);
        Ok(MainPathResult { dag, removed, weights, paths })
    }

    pub fn communities(&self) -> Partition {
        louvain(&self.graph(), self.settings.seed, self.settings.resolution)
    }
}
