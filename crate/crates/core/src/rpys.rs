//! Reference publication year spectroscopy.
//!
//! A spectrum counts cited references per referenced publication year. Peaks
//! are located through the deviation of each year's count from the median of
//! the five-year window centred on it. Multi-RPYS repeats this for segments of
//! the citing documents and rank-transforms each segment's deviations so the
//! segments can be compared as rows of a heatmap.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::wos::CitedRef;

/// Segments with fewer dated references than this are flagged.
pub const LOW_SUPPORT: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidRange(start, end));
        }
        Ok(YearRange { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl FromStr for YearRange {
    type Err = Error;

    /// Accepts `1900:2015` or `1900-2015`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| Error::InvalidArgument(format!("year range {s:?} must look like 1900:2015")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<i32>()
                .map_err(|_| Error::InvalidArgument(format!("bad year {t:?} in range {s:?}")))
        };
        YearRange::new(parse(a)?, parse(b)?)
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// Counts per referenced publication year, zero-filled across the range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Spectrum {
    pub range: YearRange,
    pub counts: Vec<u64>,
    pub undated: u64,
    pub out_of_range: u64,
}

impl Spectrum {
    /// Build directly from a range and counts; used by tests and oracles.
    pub fn from_counts(start: i32, counts: Vec<u64>) -> Self {
        assert!(!counts.is_empty(), "spectrum needs at least one year");
        let end = start + counts.len() as i32 - 1;
        Spectrum { range: YearRange { start, end }, counts, undated: 0, out_of_range: 0 }
    }

    pub fn count(&self, year: i32) -> u64 {
        if self.range.contains(year) {
            self.counts[(year - self.range.start) as usize]
        } else {
            0
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn dated_range<'a>(refs: impl IntoIterator<Item = &'a CitedRef>) -> Option<YearRange> {
    let mut lo = None;
    let mut hi = None;
    for y in refs.into_iter().filter_map(|r| r.ref_year) {
        lo = Some(lo.map_or(y, |l: i32| l.min(y)));
        hi = Some(hi.map_or(y, |h: i32| h.max(y)));
    }
    Some(YearRange { start: lo?, end: hi? })
}

pub fn spectrum<'a, I>(refs: I, range: Option<YearRange>) -> Result<Spectrum>
where
    I: IntoIterator<Item = &'a CitedRef>,
    I::IntoIter: Clone,
{
    let refs = refs.into_iter();
    let range = match range {
        Some(r) => r,
        None => dated_range(refs.clone()).ok_or(Error::NoDatedRefs)?,
    };
    let mut counts = vec![0u64; range.len()];
    let (mut undated, mut out_of_range, mut dated) = (0, 0, 0);
    for r in refs {
        match r.ref_year {
            None => undated += 1,
            Some(y) if range.contains(y) => {
                counts[(y - range.start) as usize] += 1;
                dated += 1;
            }
            Some(_) => {
                out_of_range += 1;
                dated += 1;
            }
        }
    }
    if dated == 0 {
        return Err(Error::NoDatedRefs);
    }
    Ok(Spectrum { range, counts, undated, out_of_range })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationSeries {
    pub range: YearRange,
    pub medians: Vec<f64>,
    pub deviations: Vec<f64>,
}

impl DeviationSeries {
    pub fn deviation(&self, year: i32) -> Option<f64> {
        self.range
            .contains(year)
            .then(|| self.deviations[(year - self.range.start) as usize])
    }
}

fn median_of(window: &mut [u64]) -> f64 {
    window.sort_unstable();
    let n = window.len();
    if n % 2 == 1 {
        window[n / 2] as f64
    } else {
        (window[n / 2 - 1] + window[n / 2]) as f64 / 2.0
    }
}

/// Deviation of each year's count from the median of `t-2..=t+2`.
///
/// Windows are truncated at the edges of the range rather than zero-padded.
pub fn median_deviation(spec: &Spectrum) -> DeviationSeries {
    let n = spec.counts.len();
    let mut medians = Vec::with_capacity(n);
    let mut deviations = Vec::with_capacity(n);
    let mut buf = [0u64; 5];
    for i in 0..n {
        let lo = i.saturating_sub(2);
        let hi = (i + 2).min(n - 1);
        let window = &mut buf[..hi - lo + 1];
        window.copy_from_slice(&spec.counts[lo..=hi]);
        let m = median_of(window);
        medians.push(m);
        deviations.push(spec.counts[i] as f64 - m);
    }
    DeviationSeries { range: spec.range, medians, deviations }
}

/// Rank-transform one row: average ranks (1-based, ascending) divided by the row length.
pub fn rank_cells(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share ranks i+1..=j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg / n as f64;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopReference {
    pub reference: String,
    pub count: u64,
}

/// Most-referenced table. `identity` maps a raw CR string to its canonical
/// form; without it every distinct raw string is its own row.
pub fn top_referenced<'a, F>(
    refs: impl IntoIterator<Item = &'a CitedRef>,
    min_count: u64,
    identity: Option<F>,
) -> Vec<TopReference>
where
    F: Fn(&str) -> String,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in refs {
        let key = match &identity {
            Some(f) => f(&r.raw),
            None => r.raw.clone(),
        };
        *counts.entry(key).or_insert(0) += 1;
    }
    let mut rows: Vec<TopReference> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(reference, count)| TopReference { reference, count })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.reference.cmp(&b.reference)));
    rows
}

/// How citing documents are grouped into heatmap rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segmentation {
    PerYear,
    /// Equal-width bins over the citing years.
    Bins(u32),
    /// Each cut year starts a new segment.
    Cuts(Vec<i32>),
}

impl Default for Segmentation {
    fn default() -> Self {
        Segmentation::PerYear
    }
}

impl FromStr for Segmentation {
    type Err = Error;

    /// `per-year`, `bins:N` or `cuts:1994,2005`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("segmentation {s:?} must be per-year, bins:N or cuts:Y1,Y2"));
        if s == "per-year" {
            return Ok(Segmentation::PerYear);
        }
        if let Some(n) = s.strip_prefix("bins:") {
            let n: u32 = n.trim().parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(bad());
            }
            return Ok(Segmentation::Bins(n));
        }
        if let Some(list) = s.strip_prefix("cuts:") {
            let mut cuts = list
                .split(',')
                .map(|t| t.trim().parse::<i32>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            cuts.sort_unstable();
            cuts.dedup();
            return Ok(Segmentation::Cuts(cuts));
        }
        Err(bad())
    }
}

impl fmt::Display for Segmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Segmentation::PerYear => write!(f, "per-year"),
            Segmentation::Bins(n) => write!(f, "bins:{n}"),
            Segmentation::Cuts(c) => {
                let c: Vec<String> = c.iter().map(i32::to_string).collect();
                write!(f, "cuts:{}", c.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub label: String,
    pub start: i32,
    pub end: i32,
    pub documents: usize,
    pub ref_count: u64,
    pub low_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapMatrix {
    pub segments: Vec<Segment>,
    pub rpy_axis: YearRange,
    /// `cells[segment][year - rpy_axis.start]`
    pub cells: Vec<Vec<Option<f64>>>,
    pub diagnostics: Vec<String>,
}

impl HeatmapMatrix {
    pub fn cell(&self, segment: usize, year: i32) -> Option<f64> {
        if !self.rpy_axis.contains(year) {
            return None;
        }
        self.cells[segment][(year - self.rpy_axis.start) as usize]
    }

    pub fn segment_index(&self, label: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.label == label)
    }
}

fn segment_bounds(years: (i32, i32), seg: &Segmentation) -> Vec<(i32, i32)> {
    let (lo, hi) = years;
    match seg {
        Segmentation::PerYear => (lo..=hi).map(|y| (y, y)).collect(),
        Segmentation::Bins(k) => {
            let span = (hi - lo + 1) as i64;
            let k = (*k as i64).min(span).max(1);
            (0..k)
                .map(|i| {
                    let s = lo as i64 + span * i / k;
                    let e = lo as i64 + span * (i + 1) / k - 1;
                    (s as i32, e as i32)
                })
                .collect()
        }
        Segmentation::Cuts(cuts) => {
            let mut out = Vec::new();
            let mut start = lo;
            for &c in cuts.iter().filter(|&&c| c > lo && c <= hi) {
                out.push((start, c - 1));
                start = c;
            }
            out.push((start, hi));
            out
        }
    }
}

fn segment_label(s: i32, e: i32) -> String {
    if s == e {
        s.to_string()
    } else {
        format!("{s}-{e}")
    }
}

/// Multi-segment RPYS as a rank-transformed heatmap.
///
/// `range` fixes the referenced-year axis; by default it spans every dated
/// reference in the corpus. Per-year segmentation only emits rows for years
/// that contain at least one citing document.
pub fn multi_rpys(corpus: &Corpus, segmentation: &Segmentation, range: Option<YearRange>) -> Result<HeatmapMatrix> {
    let citing_years: Vec<i32> = corpus.records().iter().filter_map(|r| r.pub_year).collect();
    let (Some(&lo), Some(&hi)) = (citing_years.iter().min(), citing_years.iter().max()) else {
        return Err(Error::EmptySegmentation);
    };
    let axis = match range {
        Some(r) => r,
        None => dated_range(corpus.all_refs()).ok_or(Error::NoDatedRefs)?,
    };

    let mut bounds = segment_bounds((lo, hi), segmentation);
    if matches!(segmentation, Segmentation::PerYear) {
        bounds.retain(|&(y, _)| citing_years.contains(&y));
    }

    let mut segments = Vec::new();
    let mut cells = Vec::new();
    let mut diagnostics = Vec::new();
    for (s, e) in bounds {
        let docs: Vec<_> = corpus
            .records()
            .iter()
            .filter(|r| r.pub_year.is_some_and(|y| (s..=e).contains(&y)))
            .collect();
        if docs.is_empty() {
            continue;
        }
        let label = segment_label(s, e);
        let refs: Vec<&CitedRef> = docs.iter().flat_map(|d| d.cited_refs.iter()).collect();
        let in_range = refs.iter().filter(|r| r.ref_year.is_some_and(|y| axis.contains(y))).count() as u64;
        let row = if in_range == 0 {
            diagnostics.push(format!("segment {label} has no dated references in {axis}"));
            vec![None; axis.len()]
        } else {
            let spec = spectrum(refs.iter().copied(), Some(axis))?;
            let dev = median_deviation(&spec);
            rank_cells(&dev.deviations).into_iter().map(Some).collect()
        };
        if in_range > 0 && in_range < LOW_SUPPORT {
            diagnostics.push(format!("segment {label} has low support ({in_range} dated references)"));
        }
        segments.push(Segment {
            label,
            start: s,
            end: e,
            documents: docs.len(),
            ref_count: in_range,
            low_support: in_range < LOW_SUPPORT,
        });
        cells.push(row);
    }
    if segments.is_empty() {
        return Err(Error::EmptySegmentation);
    }
    Ok(HeatmapMatrix { segments, rpy_axis: axis, cells, diagnostics })
}
