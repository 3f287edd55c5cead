//! Cited-reference variant clustering with a human review loop.
//!
//! Distinct raw CR strings are blocked on surname prefix and year, compared
//! pairwise with a weighted field similarity and linked into clusters with
//! union-find. Manual corrections are recorded as [`Decision`]s in an
//! append-only [`DecisionLedger`] and replayed over the automatic clusters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::wos::CitedRef;

pub const DEFAULT_THRESHOLD: f64 = 0.80;
pub const REVIEW_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub author: f64,
    pub year: f64,
    pub source: f64,
    pub volume: f64,
    pub page: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { author: 0.30, year: 0.20, source: 0.25, volume: 0.15, page: 0.10 }
    }
}

impl Weights {
    pub fn sum(&self) -> f64 {
        self.author + self.year + self.source + self.volume + self.page
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub author: f64,
    pub year: f64,
    pub source: f64,
    pub volume: f64,
    pub page: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub breakdown: Breakdown,
}

/// `LOTKA AJ` + 1926 gives `LOTK1926`; without a year only the surname prefix.
pub fn blocking_key(r: &CitedRef) -> String {
    let tokens: Vec<&str> = r.first_author_norm.split_whitespace().collect();
    let surname: String = match tokens.len() {
        0 => String::new(),
        1 => tokens[0].to_string(),
        n => tokens[..n - 1].concat(),
    };
    let prefix: String = surname.chars().take(4).collect();
    match r.ref_year {
        Some(y) => format!("{prefix}{y}"),
        None => prefix,
    }
}

/// `1 - levenshtein / max_len`, with two empty strings fully similar.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / max_len as f64
}

/// Journal-abbreviation similarity where a token that prefixes its
/// counterpart counts as a full match (`WASH` vs `WASHINGTON`).
pub fn source_similarity(a: &str, b: &str) -> f64 {
    let ta: Vec<&str> = a.split_whitespace().collect();
    let tb: Vec<&str> = b.split_whitespace().collect();
    let n = ta.len().max(tb.len());
    if n == 0 {
        return 1.0;
    }
    let aligned: f64 = ta
        .iter()
        .zip(&tb)
        .map(|(x, y)| {
            if x.starts_with(y) || y.starts_with(x) {
                1.0
            } else {
                edit_similarity(x, y)
            }
        })
        .sum::<f64>()
        / n as f64;
    aligned.max(edit_similarity(a, b))
}

fn exact_field(a: Option<&str>, b: Option<&str>) -> f64 {
    match (a, b) {
        (Some(x), Some(y)) if x == y => 1.0,
        (Some(_), Some(_)) => 0.0,
        (None, None) => 1.0,
        _ => 0.5,
    }
}

pub fn pair_similarity_with(a: &CitedRef, b: &CitedRef, w: &Weights) -> SimilarityScore {
    let author = edit_similarity(&a.first_author_norm, &b.first_author_norm);
    let year = match (a.ref_year, b.ref_year) {
        (Some(x), Some(y)) if x == y => 1.0,
        (Some(x), Some(y)) if (x - y).abs() == 1 => 0.5,
        (None, None) => 1.0,
        _ => 0.0,
    };
    let source = match (&a.source_abbrev, &b.source_abbrev) {
        (Some(x), Some(y)) => source_similarity(x, y),
        (None, None) => 1.0,
        _ => 0.5,
    };
    let volume = exact_field(a.volume.as_deref(), b.volume.as_deref());
    let page = exact_field(a.page.as_deref(), b.page.as_deref());
    let breakdown = Breakdown { author, year, source, volume, page };
    let value = w.author * author + w.year * year + w.source * source + w.volume * volume + w.page * page;
    SimilarityScore { value, breakdown }
}

pub fn pair_similarity(a: &CitedRef, b: &CitedRef) -> SimilarityScore {
    pair_similarity_with(a, b, &Weights::default())
}

fn incomplete(r: &CitedRef) -> bool {
    r.volume.is_none() || r.page.is_none()
}

fn conflicting(a: Option<&str>, b: Option<&str>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if x != y)
}

/// Why a pair that scores above the threshold must not be merged
/// automatically: it disagrees on year, volume or page. Such pairs go to review.
fn conflict(a: &CitedRef, b: &CitedRef) -> Option<CandidateReason> {
    let year_conflict = matches!((a.ref_year, b.ref_year), (Some(x), Some(y)) if x != y);
    let any = year_conflict
        || conflicting(a.volume.as_deref(), b.volume.as_deref())
        || conflicting(a.page.as_deref(), b.page.as_deref());
    match (any, incomplete(a) || incomplete(b)) {
        (false, _) => None,
        (true, true) => Some(CandidateReason::IncompleteConflict),
        // e.g. two volumes of a series with the same page
        (true, false) => Some(CandidateReason::FieldConflict),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub threshold: f64,
    pub weights: Weights,
    pub review_margin: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { threshold: DEFAULT_THRESHOLD, weights: Weights::default(), review_margin: REVIEW_MARGIN }
    }
}

impl ClusterConfig {
    pub fn with_threshold(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1]")));
        }
        Ok(ClusterConfig { threshold, ..Default::default() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterStatus {
    Auto,
    Confirmed,
    Edited,
}

impl fmt::Display for ClusterStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterStatus::Auto => "auto",
            ClusterStatus::Confirmed => "confirmed",
            ClusterStatus::Edited => "edited",
        })
    }
}

impl FromStr for ClusterStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ClusterStatus::Auto),
            "confirmed" => Ok(ClusterStatus::Confirmed),
            "edited" => Ok(ClusterStatus::Edited),
            _ => Err(Error::InvalidArgument(format!("unknown cluster status {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub raw: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantCluster {
    pub cluster_id: String,
    pub members: Vec<Member>,
    pub canonical: String,
    pub status: ClusterStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_override: Option<String>,
}

impl VariantCluster {
    fn new(members: Vec<Member>, status: ClusterStatus) -> Self {
        let mut c = VariantCluster {
            cluster_id: String::new(),
            members,
            canonical: String::new(),
            status,
            canonical_override: None,
        };
        c.refresh();
        c
    }

    /// Re-sort members and recompute the id and canonical form.
    fn refresh(&mut self) {
        self.members.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.raw.cmp(&b.raw)));
        self.cluster_id = cluster_id(self.members.iter().map(|m| m.raw.as_str()));
        if let Some(o) = &self.canonical_override {
            if !self.contains(o) {
                self.canonical_override = None;
            }
        }
        self.canonical = match &self.canonical_override {
            Some(o) => o.clone(),
            None => default_canonical(&self.members),
        };
    }

    pub fn total(&self) -> u64 {
        self.members.iter().map(|m| m.count).sum()
    }

    pub fn contains(&self, raw: &str) -> bool {
        self.members.iter().any(|m| m.raw == raw)
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }
}

/// Highest count, then longest raw string, then lexicographically smallest.
fn default_canonical(members: &[Member]) -> String {
    members
        .iter()
        .max_by(|a, b| {
            a.count
                .cmp(&b.count)
                .then_with(|| a.raw.chars().count().cmp(&b.raw.chars().count()))
                .then_with(|| b.raw.cmp(&a.raw))
        })
        .map(|m| m.raw.clone())
        .unwrap_or_default()
}

pub fn cluster_id<'a>(raws: impl Iterator<Item = &'a str>) -> String {
    let mut sorted: Vec<&str> = raws.collect();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for r in sorted {
        h.update(r.as_bytes());
        h.update(b"\n");
    }
    let digest = h.finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateReason {
    NearThreshold,
    IncompleteConflict,
    FieldConflict,
}

/// A pair left unmerged that a reviewer should look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: String,
    pub b: String,
    pub similarity: f64,
    pub reason: CandidateReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    pub clusters: Vec<VariantCluster>,
    pub candidates: Vec<CandidatePair>,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Distinct raw strings with their occurrence counts, in raw-string order.
pub fn distinct_refs<'a>(refs: impl IntoIterator<Item = &'a CitedRef>) -> Vec<(&'a CitedRef, u64)> {
    let mut by_raw: BTreeMap<&str, (&CitedRef, u64)> = BTreeMap::new();
    for r in refs {
        by_raw.entry(r.raw.as_str()).or_insert((r, 0)).1 += 1;
    }
    by_raw.into_values().collect()
}

pub fn auto_cluster<'a>(refs: impl IntoIterator<Item = &'a CitedRef>, config: &ClusterConfig) -> ClusterSet {
    let distinct = distinct_refs(refs);
    let mut blocks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, (r, _)) in distinct.iter().enumerate() {
        blocks.entry(blocking_key(r)).or_default().push(i);
    }

    let mut uf = UnionFind::new(distinct.len());
    let mut near = Vec::new();
    let mut held = Vec::new();
    let review_floor = config.threshold - config.review_margin;
    for members in blocks.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let (a, b) = (distinct[i].0, distinct[j].0);
                let s = pair_similarity_with(a, b, &config.weights).value;
                if s >= config.threshold {
                    if config.threshold >= 1.0 && a.raw != b.raw {
                        continue;
                    }
                    if let Some(reason) = conflict(a, b) {
                        held.push((i, j, s, reason));
                    } else {
                        uf.union(i, j);
                    }
                } else if s >= review_floor {
                    near.push((i, j, s));
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<Member>> = BTreeMap::new();
    for (i, (r, count)) in distinct.iter().enumerate() {
        groups
            .entry(uf.find(i))
            .or_default()
            .push(Member { raw: r.raw.clone(), count: *count });
    }
    let mut clusters: Vec<VariantCluster> = groups
        .into_values()
        .map(|m| VariantCluster::new(m, ClusterStatus::Auto))
        .collect();
    sort_clusters(&mut clusters);

    let mut candidates = Vec::new();
    let near = near.into_iter().map(|(i, j, s)| (i, j, s, CandidateReason::NearThreshold));
    for (i, j, s, reason) in held.into_iter().chain(near) {
        if uf.find(i) != uf.find(j) {
            candidates.push(CandidatePair {
                a: distinct[i].0.raw.clone(),
                b: distinct[j].0.raw.clone(),
                similarity: s,
                reason,
            });
        }
    }
    candidates.sort_by(|x, y| {
        y.similarity
            .total_cmp(&x.similarity)
            .then_with(|| x.a.cmp(&y.a))
            .then_with(|| x.b.cmp(&y.b))
    });
    ClusterSet { clusters, candidates }
}

fn sort_clusters(clusters: &mut [VariantCluster]) {
    clusters.sort_by(|a, b| {
        b.total()
            .cmp(&a.total())
            .then_with(|| a.canonical.cmp(&b.canonical))
            .then_with(|| a.cluster_id.cmp(&b.cluster_id))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Merge,
    Split,
    SetCanonical,
}

impl FromStr for DecisionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merge" => Ok(DecisionKind::Merge),
            "split" => Ok(DecisionKind::Split),
            "set_canonical" => Ok(DecisionKind::SetCanonical),
            _ => Err(Error::InvalidArgument(format!("unknown decision kind {s:?}"))),
        }
    }
}

/// One manual or automatic correction. Operands are raw CR strings or cluster ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub operands: Vec<String>,
    pub actor: String,
    pub timestamp: String,
}

impl Decision {
    pub fn new(kind: DecisionKind, operands: Vec<String>, actor: impl Into<String>) -> Self {
        Decision { kind, operands, actor: actor.into(), timestamp: timestamp_now() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.operands.is_empty() {
            return Err(Error::InvalidArgument("decision has no operands".into()));
        }
        if self.operands.iter().any(|o| o.trim().is_empty()) {
            return Err(Error::InvalidArgument("decision has an empty operand".into()));
        }
        if self.kind == DecisionKind::SetCanonical && self.operands.len() != 1 {
            return Err(Error::InvalidArgument("set_canonical takes exactly one operand".into()));
        }
        if self.actor.trim().is_empty() {
            return Err(Error::InvalidArgument("decision has no actor".into()));
        }
        Ok(())
    }
}

/// ISO-8601 UTC timestamp, pinned by `SOURCE_DATE_EPOCH` when set.
pub fn timestamp_now() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Append-only list of decisions; stored one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionLedger {
    pub decisions: Vec<Decision>,
}

impl DecisionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, d: Decision) {
        self.decisions.push(d);
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.decisions {
            serde_json::to_writer(&mut w, d).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut decisions = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let d: Decision = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedLedger { line: i + 1, message: e.to_string() })?;
            decisions.push(d);
        }
        Ok(DecisionLedger { decisions })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayDiagnostic {
    pub decision: usize,
    pub message: String,
}

/// Outcome of replaying one decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    /// Cluster ids touched by the decision, after application.
    Changed(Vec<String>),
    UnknownOperand(String),
}

struct ClusterTable {
    clusters: Vec<Option<VariantCluster>>,
    by_raw: HashMap<String, usize>,
}

impl ClusterTable {
    fn new(clusters: &[VariantCluster]) -> Self {
        let mut by_raw = HashMap::new();
        for (i, c) in clusters.iter().enumerate() {
            for m in &c.members {
                by_raw.insert(m.raw.clone(), i);
            }
        }
        ClusterTable { clusters: clusters.iter().cloned().map(Some).collect(), by_raw }
    }

    fn resolve(&self, operand: &str) -> Option<usize> {
        if let Some(&i) = self.by_raw.get(operand) {
            return Some(i);
        }
        self.clusters
            .iter()
            .position(|c| c.as_ref().is_some_and(|c| c.cluster_id == operand))
    }

    fn insert(&mut self, c: VariantCluster) -> usize {
        let idx = self.clusters.len();
        for m in &c.members {
            self.by_raw.insert(m.raw.clone(), idx);
        }
        self.clusters.push(Some(c));
        idx
    }

    fn apply(&mut self, d: &Decision) -> Applied {
        let mut targets = Vec::new();
        for op in &d.operands {
            match self.resolve(op) {
                Some(i) => targets.push(i),
                None => return Applied::UnknownOperand(op.clone()),
            }
        }
        match d.kind {
            DecisionKind::Merge => {
                let mut uniq: Vec<usize> = Vec::new();
                for &t in &targets {
                    if !uniq.contains(&t) {
                        uniq.push(t);
                    }
                }
                if uniq.len() == 1 {
                    let c = self.clusters[uniq[0]].as_mut().expect("live cluster");
                    if c.status == ClusterStatus::Auto {
                        c.status = ClusterStatus::Confirmed;
                    }
                    return Applied::Changed(vec![c.cluster_id.clone()]);
                }
                let mut members = Vec::new();
                let mut override_raw = None;
                for &t in &uniq {
                    let c = self.clusters[t].take().expect("live cluster");
                    if override_raw.is_none() {
                        override_raw = c.canonical_override.clone();
                    }
                    members.extend(c.members);
                }
                let mut merged = VariantCluster::new(members, ClusterStatus::Edited);
                if override_raw.is_some() {
                    merged.canonical_override = override_raw;
                    merged.refresh();
                }
                let id = merged.cluster_id.clone();
                self.insert(merged);
                Applied::Changed(vec![id])
            }
            DecisionKind::Split => {
                let named: HashSet<&str> = d.operands.iter().map(String::as_str).collect();
                let mut sources: Vec<usize> = Vec::new();
                for op in &d.operands {
                    match self.by_raw.get(op.as_str()) {
                        Some(&i) => {
                            if !sources.contains(&i) {
                                sources.push(i);
                            }
                        }
                        // split operands must name members, not clusters
                        None => return Applied::UnknownOperand(op.clone()),
                    }
                }
                let mut touched = Vec::new();
                for s in sources {
                    let c = self.clusters[s].take().expect("live cluster");
                    let (out, keep): (Vec<Member>, Vec<Member>) =
                        c.members.iter().cloned().partition(|m| named.contains(m.raw.as_str()));
                    if keep.is_empty() {
                        let id = c.cluster_id.clone();
                        self.clusters[s] = Some(c);
                        touched.push(id);
                        continue;
                    }
                    let mut rest = VariantCluster::new(keep, ClusterStatus::Edited);
                    rest.canonical_override = c.canonical_override.clone();
                    rest.refresh();
                    let extracted = VariantCluster::new(out, ClusterStatus::Edited);
                    touched.push(rest.cluster_id.clone());
                    touched.push(extracted.cluster_id.clone());
                    self.insert(rest);
                    self.insert(extracted);
                }
                Applied::Changed(touched)
            }
            DecisionKind::SetCanonical => {
                let raw = &d.operands[0];
                if !self.by_raw.contains_key(raw) {
                    return Applied::UnknownOperand(raw.clone());
                }
                let c = self.clusters[targets[0]].as_mut().expect("live cluster");
                c.canonical_override = Some(raw.clone());
                c.status = ClusterStatus::Edited;
                c.refresh();
                Applied::Changed(vec![c.cluster_id.clone()])
            }
        }
    }

    fn finish(self) -> Vec<VariantCluster> {
        let mut out: Vec<VariantCluster> = self.clusters.into_iter().flatten().collect();
        sort_clusters(&mut out);
        out
    }
}

/// Replay a ledger over automatic clusters. Decisions naming unknown
/// operands are skipped and reported; replay continues.
pub fn apply_ledger(set: &ClusterSet, ledger: &DecisionLedger) -> (ClusterSet, Vec<ReplayDiagnostic>) {
    let mut table = ClusterTable::new(&set.clusters);
    let mut diagnostics = Vec::new();
    for (i, d) in ledger.decisions.iter().enumerate() {
        if let Applied::UnknownOperand(op) = table.apply(d) {
            diagnostics.push(ReplayDiagnostic {
                decision: i,
                message: format!("unknown operand {op:?}; decision skipped"),
            });
        }
    }
    let clusters = table.finish();
    let owner: HashMap<&str, &str> = clusters
        .iter()
        .flat_map(|c| c.members.iter().map(move |m| (m.raw.as_str(), c.cluster_id.as_str())))
        .collect();
    let candidates = set
        .candidates
        .iter()
        .filter(|p| owner.get(p.a.as_str()) != owner.get(p.b.as_str()))
        .cloned()
        .collect();
    (ClusterSet { clusters, candidates }, diagnostics)
}

/// Apply one decision, returning the ids of affected clusters.
pub fn apply_decision(set: &ClusterSet, d: &Decision) -> (ClusterSet, Applied) {
    let mut table = ClusterTable::new(&set.clusters);
    let applied = table.apply(d);
    let clusters = table.finish();
    let owner: HashMap<&str, &str> = clusters
        .iter()
        .flat_map(|c| c.members.iter().map(move |m| (m.raw.as_str(), c.cluster_id.as_str())))
        .collect();
    let candidates = set
        .candidates
        .iter()
        .filter(|p| owner.get(p.a.as_str()) != owner.get(p.b.as_str()))
        .cloned()
        .collect();
    (ClusterSet { clusters, candidates }, applied)
}

/// Raw CR string to the canonical string of its cluster.
#[derive(Debug, Clone, Default)]
pub struct IdentityMap {
    canonical: HashMap<String, String>,
}

impl IdentityMap {
    pub fn from_clusters(clusters: &[VariantCluster]) -> Self {
        Self::filtered(clusters, |_| true)
    }

    /// Only clusters accepted by a reviewer collapse; auto clusters keep their variants apart.
    pub fn reviewed_only(clusters: &[VariantCluster]) -> Self {
        Self::filtered(clusters, |c| c.status != ClusterStatus::Auto)
    }

    fn filtered(clusters: &[VariantCluster], keep: impl Fn(&VariantCluster) -> bool) -> Self {
        let mut canonical = HashMap::new();
        for c in clusters.iter().filter(|c| keep(c)) {
            for m in &c.members {
                canonical.insert(m.raw.clone(), c.canonical.clone());
            }
        }
        IdentityMap { canonical }
    }

    pub fn canonical<'a>(&'a self, raw: &'a str) -> &'a str {
        self.canonical.get(raw).map(String::as_str).unwrap_or(raw)
    }
}

const REVIEW_HEADER: &str = "# cited-reference review file v1\n\
# Edit the `action:` line of an entry, then import the file.\n\
#   accept            merge all listed variants into one work\n\
#   split             (two-member entries) separate the variants\n\
#   split 2,3         move variants 2 and 3 into a cluster of their own\n\
#   canonical 2       use variant 2 as the canonical form\n\
#   reject / pending  no decision\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReviewAction {
    Pending,
    Accept,
    Reject,
    Split(Vec<usize>),
    Canonical(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewEntry {
    pub header: String,
    pub similarity: Option<f64>,
    pub action: ReviewAction,
    pub members: Vec<Member>,
}

/// Non-singleton automatic clusters and candidate pairs, one entry each.
pub fn export_review_file(set: &ClusterSet) -> String {
    let mut out = String::from(REVIEW_HEADER);
    let counts: HashMap<&str, u64> = set
        .clusters
        .iter()
        .flat_map(|c| c.members.iter().map(|m| (m.raw.as_str(), m.count)))
        .collect();
    for c in set.clusters.iter().filter(|c| c.status == ClusterStatus::Auto && !c.is_singleton()) {
        out.push_str(&format!("\n[cluster {}]\naction: pending\n", c.cluster_id));
        for (i, m) in c.members.iter().enumerate() {
            out.push_str(&format!("{}. ({}) {}\n", i + 1, m.count, m.raw));
        }
    }
    for (n, p) in set.candidates.iter().enumerate() {
        let reason = match p.reason {
            CandidateReason::NearThreshold => "near-threshold",
            CandidateReason::IncompleteConflict => "incomplete-conflict",
            CandidateReason::FieldConflict => "field-conflict",
        };
        out.push_str(&format!(
            "\n[candidate {}]\nsimilarity: {:.6} {}\naction: pending\n",
            n + 1,
            p.similarity,
            reason
        ));
        for (i, raw) in [&p.a, &p.b].into_iter().enumerate() {
            out.push_str(&format!("{}. ({}) {}\n", i + 1, counts.get(raw.as_str()).copied().unwrap_or(0), raw));
        }
    }
    out
}

fn parse_action(s: &str, line: usize) -> Result<ReviewAction> {
    let bad = |m: &str| Error::MalformedReviewFile { line, message: m.to_string() };
    let s = s.trim();
    let (word, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
    let numbers = |rest: &str| -> Result<Vec<usize>> {
        rest.split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>().map_err(|_| bad(&format!("bad member number {t:?}"))))
            .collect()
    };
    match word {
        "" | "pending" => Ok(ReviewAction::Pending),
        "accept" => Ok(ReviewAction::Accept),
        "reject" => Ok(ReviewAction::Reject),
        "split" => Ok(ReviewAction::Split(numbers(rest)?)),
        "canonical" => match numbers(rest)?.as_slice() {
            [n] => Ok(ReviewAction::Canonical(*n)),
            _ => Err(bad("canonical takes exactly one member number")),
        },
        other => Err(bad(&format!("unknown action {other:?}"))),
    }
}

pub fn parse_review_file(doc: &str) -> Result<Vec<ReviewEntry>> {
    let mut entries: Vec<(usize, ReviewEntry)> = Vec::new();
    for (i, raw_line) in doc.lines().enumerate() {
        let lineno = i + 1;
        let line = raw_line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| Error::MalformedReviewFile { line: lineno, message: m };
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(bad("unterminated entry header".into()));
            }
            entries.push((
                lineno,
                ReviewEntry {
                    header: line[1..line.len() - 1].to_string(),
                    similarity: None,
                    action: ReviewAction::Pending,
                    members: Vec::new(),
                },
            ));
            continue;
        }
        let Some((_, entry)) = entries.last_mut() else {
            return Err(bad("content before the first entry header".into()));
        };
        if let Some(rest) = line.strip_prefix("action:") {
            entry.action = parse_action(rest, lineno)?;
        } else if let Some(rest) = line.strip_prefix("similarity:") {
            let v = rest.split_whitespace().next().unwrap_or("");
            entry.similarity = Some(v.parse().map_err(|_| bad(format!("bad similarity {v:?}")))?);
        } else if let Some((num, rest)) = line.split_once(". (") {
            let expected = entry.members.len() + 1;
            if num.trim().parse::<usize>().ok() != Some(expected) {
                return Err(bad(format!("expected member number {expected}")));
            }
            let (count, raw) = rest
                .split_once(") ")
                .ok_or_else(|| bad("member line must look like `1. (7) RAW`".into()))?;
            let count = count.parse().map_err(|_| bad(format!("bad count {count:?}")))?;
            entry.members.push(Member { raw: raw.to_string(), count });
        } else {
            return Err(bad(format!("unrecognized line {line:?}")));
        }
    }
    for (lineno, e) in &entries {
        let n = e.members.len();
        let bad = |m: String| Error::MalformedReviewFile { line: *lineno, message: m };
        if n < 2 {
            return Err(bad(format!("entry [{}] lists fewer than two variants", e.header)));
        }
        match &e.action {
            ReviewAction::Split(idx) if idx.is_empty() && n != 2 => {
                return Err(bad("split without member numbers needs exactly two variants".into()))
            }
            ReviewAction::Split(idx) if idx.iter().any(|&k| k == 0 || k > n) => {
                return Err(bad("split member number out of range".into()))
            }
            ReviewAction::Canonical(k) if *k == 0 || *k > n => {
                return Err(bad("canonical member number out of range".into()))
            }
            _ => {}
        }
    }
    Ok(entries.into_iter().map(|(_, e)| e).collect())
}

/// Turn reviewer annotations into ledger decisions. Untouched entries yield nothing.
pub fn import_review_file(doc: &str, actor: &str) -> Result<DecisionLedger> {
    let mut ledger = DecisionLedger::new();
    for e in parse_review_file(doc)? {
        let raws = |idx: &[usize]| idx.iter().map(|&k| e.members[k - 1].raw.clone()).collect::<Vec<_>>();
        let all: Vec<String> = e.members.iter().map(|m| m.raw.clone()).collect();
        let decision = match &e.action {
            ReviewAction::Pending | ReviewAction::Reject => continue,
            ReviewAction::Accept => Decision::new(DecisionKind::Merge, all, actor),
            ReviewAction::Split(idx) if idx.is_empty() => Decision::new(DecisionKind::Split, raws(&[2]), actor),
            ReviewAction::Split(idx) => Decision::new(DecisionKind::Split, raws(idx), actor),
            ReviewAction::Canonical(k) => {
                if e.header.starts_with("candidate") {
                    ledger.push(Decision::new(DecisionKind::Merge, all, actor));
                }
                Decision::new(DecisionKind::SetCanonical, raws(&[*k]), actor)
            }
        };
        ledger.push(decision);
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wos::parse_cited_ref;

    const LOTKA_LONG: &str = "LOTKA A. J., 1926, J WASHINGTON ACAD SC, V16, P317";
    const LOTKA_SHORT: &str = "LOTKA AJ, 1926, J WASH ACAD SCI, P16";

    fn occurrences(spec: &[(&str, usize)]) -> Vec<CitedRef> {
        spec.iter()
            .flat_map(|(raw, n)| std::iter::repeat_n(parse_cited_ref(raw), *n))
            .collect()
    }

    #[test]
    fn blocking_keys() {
        assert_eq!(blocking_key(&parse_cited_ref(LOTKA_LONG)), "LOTK1926");
        assert_eq!(blocking_key(&parse_cited_ref(LOTKA_SHORT)), "LOTK1926");
        assert_eq!(blocking_key(&parse_cited_ref("NARIN F, EVALUATIVE BIBLIOMET")), "NARI");
    }

    #[test]
    fn lotka_pair_golden() {
        let s = pair_similarity(&parse_cited_ref(LOTKA_LONG), &parse_cited_ref(LOTKA_SHORT));
        assert_eq!(s.breakdown.author, 1.0);
        assert_eq!(s.breakdown.year, 1.0);
        assert_eq!(s.breakdown.source, 1.0);
        assert_eq!(s.breakdown.volume, 0.5);
        assert_eq!(s.breakdown.page, 0.0);
        assert!((s.value - 0.825).abs() < 1e-12);
    }

    #[test]
    fn conflicting_volume_and_page_bound() {
        let a = parse_cited_ref("BRAUN T, 1987, SCIENTOMETRICS, V11, P9");
        let b = parse_cited_ref("BRAUN T, 1987, SCIENTOMETRICS, V12, P3");
        let s = pair_similarity(&a, &b);
        assert!(s.value <= 0.75 + 1e-12);
        assert!((pair_similarity(&a, &a).value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complete_refs_with_different_volumes_stay_apart() {
        let refs = occurrences(&[
            ("BACKGROUND A, 1971, J BACKGR, V1, P1971", 1),
            ("BACKGROUND B, 1971, J BACKGR, V2, P1971", 1),
        ]);
        let (a, b) = (&refs[0], &refs[1]);
        assert!(pair_similarity(a, b).value >= DEFAULT_THRESHOLD);
        let set = auto_cluster(&refs, &ClusterConfig::default());
        assert_eq!(set.clusters.len(), 2);
        assert_eq!(set.candidates.len(), 1);
        assert_eq!(set.candidates[0].reason, CandidateReason::FieldConflict);
        assert!(export_review_file(&set).contains("field-conflict"));
    }

    #[test]
    fn narin_variants_form_one_cluster() {
        let refs = occurrences(&[
            ("NARIN F, 1976, EVALUATIVE BIBLIOMET", 7),
            ("NARIN F., 1976, EVALUATIVE BIBLIOMET", 1),
            ("NARIN F, 1976, EVALUATIVE BIBLIOMETRICS", 1),
            ("NARIN F, 1976, EVALUATIVE BIBLIOMETRI", 1),
        ]);
        let set = auto_cluster(&refs, &ClusterConfig::default());
        assert_eq!(set.clusters.len(), 1);
        assert_eq!(set.clusters[0].total(), 10);
        assert_eq!(set.clusters[0].canonical, "NARIN F, 1976, EVALUATIVE BIBLIOMET");
    }

    #[test]
    fn lotka_pair_is_held_for_review() {
        let refs = occurrences(&[(LOTKA_LONG, 6), (LOTKA_SHORT, 1)]);
        let set = auto_cluster(&refs, &ClusterConfig::default());
        assert_eq!(set.clusters.len(), 2);
        assert_eq!(set.candidates.len(), 1);
        assert_eq!(set.candidates[0].reason, CandidateReason::IncompleteConflict);
        let doc = export_review_file(&set);
        let doc = doc.replacen("action: pending", "action: accept", 1);
        let ledger = import_review_file(&doc, "tester").unwrap();
        let (after, diags) = apply_ledger(&set, &ledger);
        assert!(diags.is_empty());
        assert_eq!(after.clusters.len(), 1);
        assert_eq!(after.clusters[0].total(), 7);
        assert_eq!(after.clusters[0].canonical, LOTKA_LONG);
        assert!(after.candidates.is_empty());
    }

    #[test]
    fn different_blocks_never_merge() {
        let refs = occurrences(&[("SMITH J, 1990, NATURE, V1, P1", 1), ("SMITH J, 1991, NATURE, V1, P1", 1)]);
        let set = auto_cluster(&refs, &ClusterConfig::default());
        assert_eq!(set.clusters.len(), 2);
    }

    #[test]
    fn threshold_one_only_merges_identical_strings() {
        let refs = occurrences(&[("LOTKA AJ, 1926, J WASH ACAD SCI", 2), ("LOTKA A. J., 1926, J WASH ACAD SCI", 1)]);
        let cfg = ClusterConfig::with_threshold(1.0).unwrap();
        let set = auto_cluster(&refs, &cfg);
        assert_eq!(set.clusters.len(), 2);
        assert!(ClusterConfig::with_threshold(0.0).is_err());
        assert!(ClusterConfig::with_threshold(1.5).is_err());
    }

    fn singles() -> ClusterSet {
        let refs = occurrences(&[("A X, 1990, J", 3), ("B Y, 1991, K", 2), ("C Z, 1992, L", 1)]);
        auto_cluster(&refs, &ClusterConfig::default())
    }

    #[test]
    fn merge_two_singletons() {
        let set = singles();
        let mut ledger = DecisionLedger::new();
        ledger.push(Decision::new(DecisionKind::Merge, vec!["A X, 1990, J".into(), "B Y, 1991, K".into()], "u"));
        let (after, _) = apply_ledger(&set, &ledger);
        assert_eq!(after.clusters.len(), 2);
        assert_eq!(after.clusters[0].total(), 5);
        assert_eq!(after.clusters[0].status, ClusterStatus::Edited);
    }

    #[test]
    fn split_one_of_three() {
        let set = singles();
        let mut ledger = DecisionLedger::new();
        ledger.push(Decision::new(
            DecisionKind::Merge,
            vec!["A X, 1990, J".into(), "B Y, 1991, K".into(), "C Z, 1992, L".into()],
            "u",
        ));
        ledger.push(Decision::new(DecisionKind::Split, vec!["C Z, 1992, L".into()], "u"));
        let (after, _) = apply_ledger(&set, &ledger);
        let sizes: Vec<usize> = after.clusters.iter().map(|c| c.members.len()).collect();
        assert_eq!(sizes, vec![2, 1]);
        assert_eq!(after.clusters.iter().map(VariantCluster::total).sum::<u64>(), 6);
    }

    #[test]
    fn empty_ledger_is_identity() {
        let set = singles();
        let (after, diags) = apply_ledger(&set, &DecisionLedger::new());
        assert_eq!(after, set);
        assert!(diags.is_empty());
    }

    #[test]
    fn unknown_operand_skipped() {
        let set = singles();
        let mut ledger = DecisionLedger::new();
        ledger.push(Decision::new(DecisionKind::Merge, vec!["NOPE".into(), "A X, 1990, J".into()], "u"));
        ledger.push(Decision::new(DecisionKind::SetCanonical, vec!["B Y, 1991, K".into()], "u"));
        let (after, diags) = apply_ledger(&set, &ledger);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].decision, 0);
        assert_eq!(after.clusters.len(), 3);
        assert!(after.clusters.iter().any(|c| c.status == ClusterStatus::Edited));
    }

    #[test]
    fn set_canonical_overrides_default() {
        let refs = occurrences(&[
            ("NARIN F, 1976, EVALUATIVE BIBLIOMET", 7),
            ("NARIN F, 1976, EVALUATIVE BIBLIOMETRICS", 1),
        ]);
        let set = auto_cluster(&refs, &ClusterConfig::default());
        let mut ledger = DecisionLedger::new();
        ledger.push(Decision::new(
            DecisionKind::SetCanonical,
            vec!["NARIN F, 1976, EVALUATIVE BIBLIOMETRICS".into()],
            "u",
        ));
        let (after, _) = apply_ledger(&set, &ledger);
        assert_eq!(after.clusters[0].canonical, "NARIN F, 1976, EVALUATIVE BIBLIOMETRICS");
        assert_eq!(after.clusters[0].status, ClusterStatus::Edited);
    }

    #[test]
    fn review_round_trip_without_edits_is_empty() {
        let refs = occurrences(&[
            ("NARIN F, 1976, EVALUATIVE BIBLIOMET", 7),
            ("NARIN F., 1976, EVALUATIVE BIBLIOMET", 1),
            (LOTKA_LONG, 6),
            (LOTKA_SHORT, 1),
        ]);
        let set = auto_cluster(&refs, &ClusterConfig::default());
        let doc = export_review_file(&set);
        assert_eq!(parse_review_file(&doc).unwrap().len(), 2);
        assert!(import_review_file(&doc, "u").unwrap().is_empty());
    }

    #[test]
    fn split_annotation_yields_split_decision() {
        let refs = occurrences(&[
            ("NARIN F, 1976, EVALUATIVE BIBLIOMET", 7),
            ("NARIN F., 1976, EVALUATIVE BIBLIOMET", 1),
        ]);
        let set = auto_cluster(&refs, &ClusterConfig::default());
        let doc = export_review_file(&set).replace("action: pending", "action: split");
        let ledger = import_review_file(&doc, "u").unwrap();
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger.decisions[0].kind, DecisionKind::Split);
        let (after, _) = apply_ledger(&set, &ledger);
        assert_eq!(after.clusters.len(), 2);
    }

    #[test]
    fn malformed_review_reports_line() {
        let doc = "# header\n[cluster abc]\naction: explode\n1. (1) A\n2. (1) B\n";
        match parse_review_file(doc) {
            Err(Error::MalformedReviewFile { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let doc = "[cluster abc]\naction: accept\n1. (1) A\nwhat is this\n";
        assert!(matches!(parse_review_file(doc), Err(Error::MalformedReviewFile { line: 4, .. })));
    }

    #[test]
    fn ledger_jsonl_round_trip() {
        let mut ledger = DecisionLedger::new();
        ledger.push(Decision {
            kind: DecisionKind::Merge,
            operands: vec!["A".into(), "B".into()],
            actor: "auto".into(),
            timestamp: "2024-01-01T00:00:00Z".into(),
        });
        let mut buf = Vec::new();
        ledger.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "{\"kind\":\"merge\",\"operands\":[\"A\",\"B\"],\"actor\":\"auto\",\"timestamp\":\"2024-01-01T00:00:00Z\"}\n"
        );
        assert_eq!(DecisionLedger::read_jsonl(buf.as_slice()).unwrap(), ledger);
        assert!(matches!(
            DecisionLedger::read_jsonl(&b"{}\n"[..]),
            Err(Error::MalformedLedger { line: 1, .. })
        ));
    }
}
