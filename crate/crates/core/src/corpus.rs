//! The parsed document set, in-set citation matching and descriptive profiles.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::wos::{CitedRef, DocumentRecord};

/// Address of one cited reference: (record index, ref index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RefAddr {
    pub record: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    Doi,
    VolumePage,
    SourceVolume,
    SourceUnique,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchOutcome {
    Matched { record: usize, rule: MatchRule },
    Unmatched,
    /// Rule 4 found more than one candidate.
    Ambiguous(Vec<usize>),
}

impl MatchOutcome {
    pub fn record(&self) -> Option<usize> {
        match self {
            MatchOutcome::Matched { record, .. } => Some(*record),
            _ => None,
        }
    }
}

type AuthorYear = (String, i32);

#[derive(Debug, Clone, Default)]
struct MatchIndex {
    by_doi: HashMap<String, Vec<usize>>,
    by_volume_page: HashMap<(AuthorYear, String, String), Vec<usize>>,
    by_source_volume: HashMap<(AuthorYear, String, String), Vec<usize>>,
    by_source: HashMap<(AuthorYear, String), Vec<usize>>,
}

/// Immutable document set with lookup structures for reference matching.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<DocumentRecord>,
    ref_pool: Vec<RefAddr>,
    by_id: HashMap<String, usize>,
    index: MatchIndex,
}

/// Uppercase, turn punctuation into spaces and collapse whitespace.
pub fn normalize_source(s: &str) -> String {
    let mapped: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_uppercase() } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Corpus {
    pub fn new(records: Vec<DocumentRecord>) -> Self {
        let mut index = MatchIndex::default();
        let mut by_id = HashMap::new();
        let mut ref_pool = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            by_id.insert(rec.id.clone(), i);
            ref_pool.extend((0..rec.cited_refs.len()).map(|index| RefAddr { record: i, index }));

            if let Some(doi) = &rec.doi {
                index.by_doi.entry(doi.clone()).or_default().push(i);
            }
            let Some(year) = rec.pub_year else { continue };
            let ay = (rec.first_author_norm.clone(), year);
            let source = normalize_source(rec.source_abbrev.as_deref().unwrap_or(&rec.source));
            if let (Some(v), Some(p)) = (&rec.volume, &rec.begin_page) {
                index
                    .by_volume_page
                    .entry((ay.clone(), v.clone(), p.clone()))
                    .or_default()
                    .push(i);
            }
            if !source.is_empty() {
                if let Some(v) = &rec.volume {
                    index
                        .by_source_volume
                        .entry((ay.clone(), source.clone(), v.clone()))
                        .or_default()
                        .push(i);
                }
                index.by_source.entry((ay, source)).or_default().push(i);
            }
        }
        Corpus { records, ref_pool, by_id, index }
    }

    pub fn records(&self) -> &[DocumentRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DocumentRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ref_pool(&self) -> &[RefAddr] {
        &self.ref_pool
    }

    pub fn cited_ref(&self, addr: RefAddr) -> &CitedRef {
        &self.records[addr.record].cited_refs[addr.index]
    }

    pub fn all_refs(&self) -> impl Iterator<Item = &CitedRef> + Clone {
        self.records.iter().flat_map(|r| r.cited_refs.iter())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Resolve a cited reference against the in-set records.
    ///
    /// Rules fire in priority order: DOI; author+year+volume+page;
    /// author+year+source+volume; author+year+source (only when unique).
    pub fn match_reference(&self, r: &CitedRef) -> MatchOutcome {
        if let Some(hit) = r.doi.as_ref().and_then(|d| self.index.by_doi.get(d)) {
            return MatchOutcome::Matched { record: hit[0], rule: MatchRule::Doi };
        }
        let Some(year) = r.ref_year else {
            return MatchOutcome::Unmatched;
        };
        let ay = (r.first_author_norm.clone(), year);
        if let (Some(v), Some(p)) = (&r.volume, &r.page) {
            if let Some(hit) = self.index.by_volume_page.get(&(ay.clone(), v.clone(), p.clone())) {
                return MatchOutcome::Matched { record: hit[0], rule: MatchRule::VolumePage };
            }
        }
        let Some(source) = r.source_abbrev.as_deref().map(normalize_source) else {
            return MatchOutcome::Unmatched;
        };
        if let Some(v) = &r.volume {
            if let Some(hit) = self.index.by_source_volume.get(&(ay.clone(), source.clone(), v.clone())) {
                return MatchOutcome::Matched { record: hit[0], rule: MatchRule::SourceVolume };
            }
        }
        match self.index.by_source.get(&(ay, source)) {
            Some(hit) if hit.len() == 1 => {
                MatchOutcome::Matched { record: hit[0], rule: MatchRule::SourceUnique }
            }
            Some(hit) => MatchOutcome::Ambiguous(hit.clone()),
            None => MatchOutcome::Unmatched,
        }
    }

    /// In-set citation edges plus diagnostics for self-citations and ambiguous matches.
    pub fn build_citation_edges(&self) -> EdgeSet {
        let mut edges = Vec::new();
        let mut diagnostics = Vec::new();
        let mut seen = HashSet::new();
        for (ci, rec) in self.records.iter().enumerate() {
            for (ri, r) in rec.cited_refs.iter().enumerate() {
                match self.match_reference(r) {
                    MatchOutcome::Matched { record, .. } if record == ci => {
                        diagnostics.push(format!(
                            "{}: reference {:?} resolves to the citing record; self-loop dropped",
                            rec.id, r.raw
                        ));
                    }
                    MatchOutcome::Matched { record, .. } => {
                        if seen.insert((ci, record)) {
                            edges.push(CitationEdge {
                                citing: rec.id.clone(),
                                cited: self.records[record].id.clone(),
                                citing_index: ci,
                                cited_index: record,
                                via_ref: ri,
                                via_raw: r.raw.clone(),
                            });
                        }
                    }
                    MatchOutcome::Ambiguous(cands) => {
                        let ids: Vec<&str> = cands.iter().map(|&c| self.records[c].id.as_str()).collect();
                        diagnostics.push(format!(
                            "{}: reference {:?} is ambiguous between {}",
                            rec.id,
                            r.raw,
                            ids.join(", ")
                        ));
                    }
                    MatchOutcome::Unmatched => {}
                }
            }
        }
        EdgeSet { edges, diagnostics }
    }

    /// Local citation score (in-set in-degree) per record, in record order.
    pub fn local_citation_scores(&self, edges: &[CitationEdge]) -> Vec<u64> {
        let mut lcs = vec![0u64; self.records.len()];
        for e in edges {
            lcs[e.cited_index] += 1;
        }
        lcs
    }

    /// The `n` highest-scoring records and the citation edges among them.
    ///
    /// Ties go to the earlier publication year, then to the smaller id.
    pub fn top_layer(&self, edges: &[CitationEdge], n: usize, score: Score) -> crate::Result<TopLayer> {
        if n == 0 {
            return Err(crate::Error::InvalidArgument("top layer size must be at least 1".into()));
        }
        let lcs = self.local_citation_scores(edges);
        let value = |i: usize| match score {
            Score::Lcs => lcs[i],
            Score::Gcs => self.records[i].times_cited_global,
        };
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by(|&a, &b| {
            value(b)
                .cmp(&value(a))
                .then_with(|| {
                    let ya = self.records[a].pub_year.unwrap_or(i32::MAX);
                    let yb = self.records[b].pub_year.unwrap_or(i32::MAX);
                    ya.cmp(&yb)
                })
                .then_with(|| self.records[a].id.cmp(&self.records[b].id))
        });
        order.truncate(n);
        let members: HashSet<usize> = order.iter().copied().collect();
        let induced = edges
            .iter()
            .filter(|e| members.contains(&e.citing_index) && members.contains(&e.cited_index))
            .cloned()
            .collect();
        let rows = order
            .iter()
            .map(|&i| TopRow {
                id: self.records[i].id.clone(),
                label: self.records[i].label(),
                lcs: lcs[i],
                gcs: self.records[i].times_cited_global,
            })
            .collect();
        Ok(TopLayer { rows, edges: induced })
    }

    pub fn yearly_profile(&self, edges: &[CitationEdge]) -> Profile {
        let mut publications = BTreeMap::new();
        let mut cited_refs = BTreeMap::new();
        let mut local_citations = BTreeMap::new();
        let mut undated = 0;
        for rec in &self.records {
            match rec.pub_year {
                Some(y) => {
                    *publications.entry(y).or_insert(0) += 1;
                    *cited_refs.entry(y).or_insert(0) += rec.cited_refs.len() as u64;
                }
                None => undated += 1,
            }
        }
        for e in edges {
            if let Some(y) = self.records[e.citing_index].pub_year {
                *local_citations.entry(y).or_insert(0) += 1;
            }
        }
        let total_refs: u64 = self.records.iter().map(|r| r.cited_refs.len() as u64).sum();
        let tc: Vec<u64> = self.records.iter().map(|r| r.times_cited_global).collect();
        let tc_sum: u64 = tc.iter().sum();
        let n = self.records.len();
        let summary = Summary {
            records: n,
            undated_records: undated,
            total_refs,
            refs_per_publication: (n > 0).then(|| round2(total_refs as f64 / n as f64)),
            times_cited_sum: tc_sum,
            times_cited_mean: (n > 0).then(|| round2(tc_sum as f64 / n as f64)),
            h_index: h_index(&tc),
            local_citations: edges.len(),
        };
        Profile {
            publications: YearSeries(publications),
            cited_refs: YearSeries(cited_refs),
            local_citations: YearSeries(local_citations),
            summary,
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationEdge {
    pub citing: String,
    pub cited: String,
    pub citing_index: usize,
    pub cited_index: usize,
    pub via_ref: usize,
    pub via_raw: String,
}

#[derive(Debug, Clone, Default)]
pub struct EdgeSet {
    pub edges: Vec<CitationEdge>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    Lcs,
    Gcs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopRow {
    pub id: String,
    pub label: String,
    pub lcs: u64,
    pub gcs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopLayer {
    pub rows: Vec<TopRow>,
    pub edges: Vec<CitationEdge>,
}

/// Count per publication year for one metric.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSeries(pub BTreeMap<i32, u64>);

impl YearSeries {
    pub fn get(&self, year: i32) -> u64 {
        self.0.get(&year).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn years(&self) -> Option<(i32, i32)> {
        Some((*self.0.keys().next()?, *self.0.keys().next_back()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub records: usize,
    pub undated_records: usize,
    pub total_refs: u64,
    pub refs_per_publication: Option<f64>,
    pub times_cited_sum: u64,
    pub times_cited_mean: Option<f64>,
    pub h_index: u64,
    pub local_citations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub publications: YearSeries,
    pub cited_refs: YearSeries,
    /// Citations received from inside the set, by citing year.
    pub local_citations: YearSeries,
    pub summary: Summary,
}

impl Profile {
    /// Zero-filled rows `(year, publications, cited_refs, local_citations)`.
    pub fn rows(&self) -> Vec<(i32, u64, u64, u64)> {
        let bounds = [
            self.publications.years(),
            self.cited_refs.years(),
            self.local_citations.years(),
        ];
        let lo = bounds.iter().flatten().map(|b| b.0).min();
        let hi = bounds.iter().flatten().map(|b| b.1).max();
        match (lo, hi) {
            (Some(lo), Some(hi)) => (lo..=hi)
                .map(|y| {
                    (
                        y,
                        self.publications.get(y),
                        self.cited_refs.get(y),
                        self.local_citations.get(y),
                    )
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Largest `h` such that at least `h` values are `>= h`.
pub fn h_index(values: &[u64]) -> u64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .iter()
        .enumerate()
        .take_while(|(i, &v)| v >= (*i as u64 + 1))
        .count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wos::parse_cited_ref;
    use proptest::prelude::*;

    pub(crate) fn record(id: &str, author: &str, year: i32, source: &str, vol: &str, page: &str, refs: &[&str]) -> DocumentRecord {
        DocumentRecord {
            id: id.into(),
            first_author_norm: author.into(),
            authors: vec![author.into()],
            title: String::new(),
            source: source.into(),
            source_abbrev: Some(source.into()),
            document_type: None,
            pub_year: Some(year),
            volume: (!vol.is_empty()).then(|| vol.to_string()),
            begin_page: (!page.is_empty()).then(|| page.to_string()),
            doi: None,
            times_cited_global: 0,
            cited_refs: refs.iter().map(|r| parse_cited_ref(r)).collect(),
        }
    }

    fn chain() -> Corpus {
        Corpus::new(vec![
            record("A", "ALPHA A", 1980, "SCIENTOMETRICS", "1", "10", &[]),
            record("B", "BETA B", 1985, "SCIENTOMETRICS", "5", "20", &["ALPHA A, 1980, SCIENTOMETRICS, V1, P10"]),
            record("C", "GAMMA C", 1990, "SCIENTOMETRICS", "9", "30", &["BETA B, 1985, SCIENTOMETRICS, V5, P20"]),
        ])
    }

    #[test]
    fn schubert_row_matches() {
        let c = Corpus::new(vec![record("S", "SCHUBERT A", 1986, "SCIENTOMETRICS", "9", "281", &[])]);
        let r = parse_cited_ref("SCHUBERT A, 1986, SCIENTOMETRICS, V9, P281");
        assert_eq!(c.match_reference(&r), MatchOutcome::Matched { record: 0, rule: MatchRule::VolumePage });
        let r = parse_cited_ref("SCHUBERT A, 3000, SCIENTOMETRICS, V9, P281");
        assert_eq!(c.match_reference(&r), MatchOutcome::Unmatched);
    }

    #[test]
    fn rule_four_requires_uniqueness() {
        let c = Corpus::new(vec![
            record("X", "BRAUN T", 1987, "SCIENTOMETRICS", "11", "9", &[]),
            record("Y", "BRAUN T", 1987, "SCIENTOMETRICS", "12", "3", &[]),
        ]);
        let r = parse_cited_ref("BRAUN T, 1987, SCIENTOMETRICS");
        assert_eq!(c.match_reference(&r), MatchOutcome::Ambiguous(vec![0, 1]));
        let r = parse_cited_ref("BRAUN T, 1987, SCIENTOMETRICS, V12");
        assert_eq!(c.match_reference(&r), MatchOutcome::Matched { record: 1, rule: MatchRule::SourceVolume });
    }

    #[test]
    fn doi_match_wins() {
        let mut rec = record("D", "HIRSCH JE", 2005, "P NATL ACAD SCI USA", "102", "16569", &[]);
        rec.doi = Some("10.1073/pnas.0507655102".into());
        let c = Corpus::new(vec![rec]);
        let r = parse_cited_ref("HIRSCH J, 2006, PNAS, DOI 10.1073/PNAS.0507655102");
        assert_eq!(c.match_reference(&r), MatchOutcome::Matched { record: 0, rule: MatchRule::Doi });
    }

    #[test]
    fn chain_edges_and_lcs() {
        let c = chain();
        let set = c.build_citation_edges();
        let pairs: Vec<(&str, &str)> = set.edges.iter().map(|e| (e.citing.as_str(), e.cited.as_str())).collect();
        assert_eq!(pairs, vec![("B", "A"), ("C", "B")]);
        assert_eq!(c.local_citation_scores(&set.edges), vec![1, 1, 0]);
    }

    #[test]
    fn self_citation_dropped() {
        let c = Corpus::new(vec![record("A", "ALPHA A", 1980, "X", "1", "1", &["ALPHA A, 1980, X, V1, P1"])]);
        let set = c.build_citation_edges();
        assert!(set.edges.is_empty());
        assert_eq!(set.diagnostics.len(), 1);
    }

    #[test]
    fn duplicate_matches_collapse() {
        let c = Corpus::new(vec![
            record("A", "ALPHA A", 1980, "X", "1", "1", &[]),
            record("B", "BETA B", 1981, "X", "2", "2", &["ALPHA A, 1980, X, V1, P1", "ALPHA A, 1980, X, V1"]),
        ]);
        let set = c.build_citation_edges();
        assert_eq!(set.edges.len(), 1);
        assert_eq!(set.edges[0].via_ref, 0);
    }

    #[test]
    fn top_layer_tie_break() {
        let c = chain();
        let edges = c.build_citation_edges().edges;
        let top = c.top_layer(&edges, 1, Score::Lcs).unwrap();
        assert_eq!(top.rows[0].id, "A");
        let all = c.top_layer(&edges, 10, Score::Lcs).unwrap();
        assert_eq!(all.rows.len(), 3);
        assert_eq!(all.edges.len(), 2);
        assert!(c.top_layer(&edges, 0, Score::Lcs).is_err());
    }

    #[test]
    fn profile_arithmetic() {
        let c = Corpus::new(vec![
            record("A", "A A", 1980, "X", "", "", &["Q Q, 1970, X", "R R, 1971, Y", "S S, 1972, Z"]),
            record("B", "B B", 1981, "X", "", "", &["Q Q, 1970, X", "R R, 1971, Y"]),
        ]);
        let p = c.yearly_profile(&[]);
        assert_eq!(p.cited_refs.0, BTreeMap::from([(1980, 3), (1981, 2)]));
        assert_eq!(p.summary.refs_per_publication, Some(2.5));
        let empty = Corpus::new(vec![]).yearly_profile(&[]);
        assert!(empty.publications.0.is_empty());
        assert_eq!(empty.summary.refs_per_publication, None);
    }

    #[test]
    fn h_index_examples() {
        assert_eq!(h_index(&[10, 5, 3, 1]), 3);
        assert_eq!(h_index(&[]), 0);
        assert_eq!(h_index(&[1, 1, 1, 1]), 1);
    }

    proptest! {
        #[test]
        fn h_index_is_permutation_invariant(mut v in proptest::collection::vec(0u64..50, 0..40)) {
            let h = h_index(&v);
            v.sort_unstable();
            prop_assert_eq!(h_index(&v), h);
        }
    }
}
