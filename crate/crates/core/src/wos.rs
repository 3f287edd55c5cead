//! Web of Science field-tagged export parsing.
//!
//! The plain-text "full record with cited references" export is a sequence of
//! two-character tags, one field per line, with continuation lines indented by
//! exactly three spaces:
//!
//! ```text
//! FN Thomson Reuters Web of Science
//! VR 1.0
//! PT J
//! AU Schubert, A
//!    Braun, T
//! PY 1986
//! CR LOTKA AJ, 1926, J WASH ACAD SCI, P16
//!    PRICE DJD, 1963, LITTLE SCI BIG SCI
//! ER
//! EF
//! ```
//!
//! Parsing never drops a block silently: anything that violates the layout is
//! reported as a [`Warning`] carrying the 1-based line number.

use std::collections::HashSet;
use std::fmt;

use deunicode::deunicode;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_YEAR: i32 = 1500;
pub const MAX_YEAR: i32 = 2100;

/// One tagged field of a record block, continuation lines included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawField {
    pub tag: String,
    pub values: Vec<String>,
    pub line: usize,
}

impl RawField {
    pub fn is_valid_tag(tag: &str) -> bool {
        let b = tag.as_bytes();
        b.len() == 2 && b[0].is_ascii_uppercase() && (b[1].is_ascii_uppercase() || b[1].is_ascii_digit())
    }

    fn joined(&self) -> String {
        self.values.join(" ")
    }

    fn first(&self) -> &str {
        self.values.first().map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub first_author_norm: String,
    pub authors: Vec<String>,
    pub title: String,
    pub source: String,
    pub source_abbrev: Option<String>,
    pub document_type: Option<String>,
    pub pub_year: Option<i32>,
    pub volume: Option<String>,
    pub begin_page: Option<String>,
    pub doi: Option<String>,
    pub times_cited_global: u64,
    pub cited_refs: Vec<CitedRef>,
}

impl DocumentRecord {
    /// HistCite-style short label, e.g. `SCHUBERT A, 1986, SCIENTOMETRICS, V9, P281`.
    pub fn label(&self) -> String {
        let mut parts = vec![self.first_author_norm.clone()];
        if let Some(y) = self.pub_year {
            parts.push(y.to_string());
        }
        let src = self.source_abbrev.as_deref().unwrap_or(&self.source);
        if !src.is_empty() {
            parts.push(src.to_string());
        }
        if let Some(v) = &self.volume {
            parts.push(format!("V{v}"));
        }
        if let Some(p) = &self.begin_page {
            parts.push(format!("P{p}"));
        }
        parts.join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CitedRef {
    pub raw: String,
    pub first_author_norm: String,
    pub ref_year: Option<i32>,
    pub source_abbrev: Option<String>,
    pub volume: Option<String>,
    pub page: Option<String>,
    pub doi: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    Latin1Fallback,
    StrayLine,
    TabContinuation,
    OrphanContinuation,
    MissingEndOfRecord,
    MissingYear,
    InvalidYear,
    InvalidTimesCited,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub line: usize,
    pub kind: WarningKind,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedExport {
    pub records: Vec<DocumentRecord>,
    pub warnings: Vec<Warning>,
}

impl ParsedExport {
    pub fn cited_ref_count(&self) -> usize {
        self.records.iter().map(|r| r.cited_refs.len()).sum()
    }
}

fn decode(input: &[u8], warnings: &mut Vec<Warning>) -> Result<String> {
    if input.contains(&0) {
        return Err(Error::UnreadableInput("input contains NUL bytes".into()));
    }
    let bytes = input.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(input);
    match std::str::from_utf8(bytes) {
        Ok(s) => Ok(s.to_string()),
        Err(e) => {
            warnings.push(Warning {
                line: 0,
                kind: WarningKind::Latin1Fallback,
                message: format!(
                    "invalid UTF-8 at byte {}; decoded as Latin-1",
                    e.valid_up_to()
                ),
            });
            Ok(bytes.iter().map(|&b| b as char).collect())
        }
    }
}

/// Splits a line into `(tag, rest)` when it starts with a valid field tag.
fn split_tag(line: &str) -> Option<(&str, &str)> {
    let tag = line.get(..2)?;
    if !RawField::is_valid_tag(tag) {
        return None;
    }
    match line.as_bytes().get(2) {
        None => Some((tag, "")),
        Some(b' ') => Some((tag, line[3..].trim_end())),
        _ => None,
    }
}

struct Block {
    start_line: usize,
    fields: Vec<RawField>,
}

/// Parse a complete export file.
pub fn parse_export(input: &[u8]) -> Result<ParsedExport> {
    let mut warnings = Vec::new();
    let text = decode(input, &mut warnings)?;

    let mut blocks: Vec<Block> = Vec::new();
    let mut current: Option<Block> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim_end_matches('\r');

        if let Some(block) = current.as_mut() {
            if let Some(cont) = line.strip_prefix("   ") {
                match block.fields.last_mut() {
                    Some(field) => field.values.push(cont.trim().to_string()),
                    None => warnings.push(Warning {
                        line: lineno,
                        kind: WarningKind::OrphanContinuation,
                        message: "continuation line without an open field".into(),
                    }),
                }
                continue;
            }
            if line.starts_with('\t') {
                warnings.push(Warning {
                    line: lineno,
                    kind: WarningKind::TabContinuation,
                    message: "tab-indented continuation rejected".into(),
                });
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            match split_tag(line) {
                Some(("ER", _)) => {
                    blocks.push(current.take().expect("open block"));
                }
                Some(("PT", rest)) => {
                    warnings.push(Warning {
                        line: lineno,
                        kind: WarningKind::MissingEndOfRecord,
                        message: format!(
                            "record starting at line {} has no ER line",
                            block.start_line
                        ),
                    });
                    blocks.push(current.take().expect("open block"));
                    current = Some(Block {
                        start_line: lineno,
                        fields: vec![RawField {
                            tag: "PT".into(),
                            values: vec![rest.to_string()],
                            line: lineno,
                        }],
                    });
                }
                Some(("EF", _)) => {
                    warnings.push(Warning {
                        line: lineno,
                        kind: WarningKind::MissingEndOfRecord,
                        message: format!(
                            "record starting at line {} has no ER line",
                            block.start_line
                        ),
                    });
                    blocks.push(current.take().expect("open block"));
                }
                Some((tag, rest)) => block.fields.push(RawField {
                    tag: tag.to_string(),
                    values: vec![rest.to_string()],
                    line: lineno,
                }),
                None => warnings.push(Warning {
                    line: lineno,
                    kind: WarningKind::StrayLine,
                    message: format!("unrecognized line inside record: {:?}", truncate(line)),
                }),
            }
            continue;
        }

        // Between records.
        if line.trim().is_empty() {
            continue;
        }
        match split_tag(line) {
            Some(("PT", rest)) => {
                current = Some(Block {
                    start_line: lineno,
                    fields: vec![RawField {
                        tag: "PT".into(),
                        values: vec![rest.to_string()],
                        line: lineno,
                    }],
                });
            }
            Some(("FN", _)) | Some(("VR", _)) | Some(("EF", _)) => {}
            _ => warnings.push(Warning {
                line: lineno,
                kind: WarningKind::StrayLine,
                message: format!("line outside any record: {:?}", truncate(line)),
            }),
        }
    }
    if let Some(block) = current.take() {
        warnings.push(Warning {
            line: text.lines().count(),
            kind: WarningKind::MissingEndOfRecord,
            message: format!(
                "record starting at line {} is not terminated before end of input",
                block.start_line
            ),
        });
        blocks.push(block);
    }

    if blocks.is_empty() {
        return Err(Error::EmptyExport);
    }

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(blocks.len());
    for (ordinal, block) in blocks.iter().enumerate() {
        let record = build_record(block, ordinal + 1, &mut warnings);
        if !seen.insert(record.id.clone()) {
            warnings.push(Warning {
                line: block.start_line,
                kind: WarningKind::DuplicateId,
                message: format!("duplicate record id {}; keeping the first", record.id),
            });
            continue;
        }
        records.push(record);
    }
    Ok(ParsedExport { records, warnings })
}

fn truncate(line: &str) -> String {
    line.chars().take(40).collect()
}

fn build_record(block: &Block, ordinal: usize, warnings: &mut Vec<Warning>) -> DocumentRecord {
    let field = |tag: &str| block.fields.iter().find(|f| f.tag == tag);
    let nonempty = |tag: &str| {
        field(tag)
            .map(|f| f.joined().trim().to_string())
            .filter(|s| !s.is_empty())
    };

    let authors: Vec<String> = field("AU")
        .map(|f| f.values.iter().filter(|v| !v.is_empty()).cloned().collect())
        .unwrap_or_default();
    let first_author_norm = authors.first().map(|a| normalize_author(a)).unwrap_or_default();

    let pub_year = match field("PY") {
        None => {
            warnings.push(Warning {
                line: block.start_line,
                kind: WarningKind::MissingYear,
                message: "record has no PY field".into(),
            });
            None
        }
        Some(f) => match parse_year(f.first().trim()) {
            Some(y) => Some(y),
            None => {
                warnings.push(Warning {
                    line: f.line,
                    kind: WarningKind::InvalidYear,
                    message: format!("unparseable publication year {:?}", f.first()),
                });
                None
            }
        },
    };

    let times_cited_global = match field("TC") {
        None => 0,
        Some(f) => f.first().trim().parse::<u64>().unwrap_or_else(|_| {
            warnings.push(Warning {
                line: f.line,
                kind: WarningKind::InvalidTimesCited,
                message: format!("unparseable times-cited value {:?}", f.first()),
            });
            0
        }),
    };

    let cited_refs = field("CR")
        .map(|f| {
            f.values
                .iter()
                .filter(|v| !v.trim().is_empty())
                .map(|v| parse_cited_ref(v.trim()))
                .collect()
        })
        .unwrap_or_default();

    DocumentRecord {
        id: nonempty("UT").unwrap_or_else(|| format!("REC-{ordinal:05}")),
        first_author_norm,
        authors,
        title: nonempty("TI").unwrap_or_default(),
        source: nonempty("SO").unwrap_or_default(),
        source_abbrev: nonempty("J9").or_else(|| nonempty("JI")),
        document_type: nonempty("DT"),
        pub_year,
        volume: nonempty("VL"),
        begin_page: nonempty("BP"),
        doi: nonempty("DI").map(|d| normalize_doi(&d)),
        times_cited_global,
        cited_refs,
    }
}

fn parse_year(s: &str) -> Option<i32> {
    if s.len() != 4 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let y: i32 = s.parse().ok()?;
    (MIN_YEAR..=MAX_YEAR).contains(&y).then_some(y)
}

fn is_volume(s: &str) -> bool {
    s.len() > 1 && s.starts_with('V') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

fn is_page(s: &str) -> bool {
    s.len() > 1 && s.starts_with('P') && s[1..].bytes().all(|b| b.is_ascii_alphanumeric())
}

fn doi_subfield(s: &str) -> Option<&str> {
    s.strip_prefix("DOI ").or_else(|| s.strip_prefix("doi:"))
}

/// Lowercase a DOI and strip `DOI ` / `doi:` prefixes and WoS bracket lists.
pub fn normalize_doi(doi: &str) -> String {
    let mut d = doi.trim();
    for prefix in ["DOI ", "doi:", "DOI:"] {
        if let Some(rest) = d.strip_prefix(prefix) {
            d = rest.trim();
        }
    }
    if let Some(inner) = d.strip_prefix('[') {
        d = inner.trim_end_matches(']').split(',').next().unwrap_or("").trim();
    }
    d.to_lowercase()
}

/// Parse one CR line into its subfields. Never fails.
pub fn parse_cited_ref(line: &str) -> CitedRef {
    let subfields: Vec<&str> = line.split(", ").map(str::trim).collect();
    let first_author_norm = normalize_author(subfields[0]);

    let year_pos = subfields
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, s)| parse_year(s).map(|y| (i, y)));

    let mut source_abbrev = None;
    if let Some((pos, _)) = year_pos {
        if let Some(next) = subfields.get(pos + 1) {
            if !next.is_empty() && !is_volume(next) && !is_page(next) && doi_subfield(next).is_none() {
                source_abbrev = Some(next.to_string());
            }
        }
    }

    let mut volume = None;
    let mut page = None;
    let mut doi = None;
    for s in subfields.iter().skip(1) {
        if volume.is_none() && is_volume(s) {
            volume = Some(s[1..].to_string());
        } else if page.is_none() && is_page(s) {
            page = Some(s[1..].to_string());
        } else if doi.is_none() && doi_subfield(s).is_some() {
            doi = Some(normalize_doi(s));
        }
    }

    CitedRef {
        raw: line.to_string(),
        first_author_norm,
        ref_year: year_pos.map(|(_, y)| y),
        source_abbrev,
        volume,
        page,
        doi,
    }
}

/// Normalize an author name to `SURNAME INITIALS`.
///
/// `"Lotka, A. J."`, `"LOTKA A. J."` and `"LOTKA AJ"` all map to `"LOTKA AJ"`.
pub fn normalize_author(name: &str) -> String {
    let folded = deunicode(name).to_uppercase();
    let cleaned: String = folded
        .chars()
        .filter(|c| !matches!(c, '.' | '-' | '\'' | '\u{2019}'))
        .collect();

    let tokens: Vec<String> = match cleaned.split_once(',') {
        Some((surname, given)) => {
            let mut t: Vec<String> = surname.split_whitespace().map(str::to_string).collect();
            let initials: String = given
                .replace(',', " ")
                .split_whitespace()
                .collect::<Vec<_>>()
                .concat();
            if !initials.is_empty() {
                t.push(initials);
            }
            t
        }
        None => cleaned.split_whitespace().map(str::to_string).collect(),
    };
    merge_trailing_initials(tokens).join(" ")
}

/// `["LOTKA", "A", "J"]` becomes `["LOTKA", "AJ"]`; at least one leading token stays.
fn merge_trailing_initials(mut tokens: Vec<String>) -> Vec<String> {
    let mut run_start = tokens.len();
    while run_start > 1 && tokens[run_start - 1].chars().count() == 1 {
        run_start -= 1;
    }
    if tokens.len() - run_start >= 2 {
        let merged = tokens.split_off(run_start).concat();
        tokens.push(merged);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schubert_reference() {
        let r = parse_cited_ref("SCHUBERT A, 1986, SCIENTOMETRICS, V9, P281");
        assert_eq!(r.first_author_norm, "SCHUBERT A");
        assert_eq!(r.ref_year, Some(1986));
        assert_eq!(r.source_abbrev.as_deref(), Some("SCIENTOMETRICS"));
        assert_eq!(r.volume.as_deref(), Some("9"));
        assert_eq!(r.page.as_deref(), Some("281"));
        assert_eq!(r.doi, None);
    }

    #[test]
    fn lotka_short_variant() {
        let r = parse_cited_ref("LOTKA AJ, 1926, J WASH ACAD SCI, P16");
        assert_eq!(r.first_author_norm, "LOTKA AJ");
        assert_eq!(r.ref_year, Some(1926));
        assert_eq!(r.source_abbrev.as_deref(), Some("J WASH ACAD SCI"));
        assert_eq!(r.volume, None);
        assert_eq!(r.page.as_deref(), Some("16"));
    }

    #[test]
    fn single_subfield() {
        let r = parse_cited_ref("ANON");
        assert_eq!(r.first_author_norm, "ANON");
        assert_eq!(r.ref_year, None);
        assert_eq!(r.source_abbrev, None);
        assert_eq!(r.volume, None);
        assert_eq!(r.page, None);
    }

    #[test]
    fn doi_subfield_is_normalized() {
        let r = parse_cited_ref("HIRSCH JE, 2005, P NATL ACAD SCI USA, V102, P16569, DOI 10.1073/PNAS.0507655102");
        assert_eq!(r.doi.as_deref(), Some("10.1073/pnas.0507655102"));
        assert_eq!(r.source_abbrev.as_deref(), Some("P NATL ACAD SCI USA"));
    }

    #[test]
    fn year_is_scanned_not_positional() {
        let r = parse_cited_ref("[ANONYMOUS], NATURE, 1990, V5");
        assert_eq!(r.ref_year, Some(1990));
        assert_eq!(r.source_abbrev, None);
        assert_eq!(r.volume.as_deref(), Some("5"));
    }

    #[test]
    fn author_normalization_examples() {
        assert_eq!(normalize_author("Lotka, A. J."), "LOTKA AJ");
        assert_eq!(normalize_author("GLANZEL W"), "GLANZEL W");
        assert_eq!(normalize_author("glänzel w."), "GLANZEL W");
        assert_eq!(normalize_author("LOTKA A. J."), "LOTKA AJ");
        assert_eq!(normalize_author("Van Raan, A. F. J."), "VAN RAAN AFJ");
        assert_eq!(normalize_author("  "), "");
    }

    #[test]
    fn doi_normalization() {
        assert_eq!(normalize_doi("DOI 10.1007/BF02016680"), "10.1007/bf02016680");
        assert_eq!(normalize_doi("doi:10.1/X"), "10.1/x");
        assert_eq!(normalize_doi("DOI [10.1/A, 10.1/B]"), "10.1/a");
    }

    const ONE_RECORD: &str = "FN Thomson Reuters Web of Science\nVR 1.0\nPT J\nAU SCHUBERT A\nPY 1986\nTC 215\nCR LOTKA AJ, 1926, J WASH ACAD SCI, P16\n   PRICE DJD, 1963, LITTLE SCI BIG SCI\nER\nEF\n";

    #[test]
    fn one_record_file() {
        let out = parse_export(ONE_RECORD.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.cited_ref_count(), 2);
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);
        let rec = &out.records[0];
        assert_eq!(rec.pub_year, Some(1986));
        assert_eq!(rec.times_cited_global, 215);
        assert_eq!(rec.id, "REC-00001");
        assert_eq!(rec.cited_refs[1].raw, "PRICE DJD, 1963, LITTLE SCI BIG SCI");
    }

    #[test]
    fn header_only_is_empty() {
        let err = parse_export(b"FN ISI Export Format\nEF\n").unwrap_err();
        assert!(matches!(err, Error::EmptyExport));
    }

    #[test]
    fn malformed_year_is_flagged() {
        let src = "PT J\nAU X Y\nPY 198X\nER\n";
        let out = parse_export(src.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].pub_year, None);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].kind, WarningKind::InvalidYear);
        assert_eq!(out.warnings[0].line, 3);
    }

    #[test]
    fn tab_continuation_rejected() {
        let src = "PT J\nPY 1990\nCR A B, 1980, X\n\tC D, 1981, Y\nER\n";
        let out = parse_export(src.as_bytes()).unwrap();
        assert_eq!(out.cited_ref_count(), 1);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].kind, WarningKind::TabContinuation);
    }

    #[test]
    fn duplicate_ut_keeps_first() {
        let src = "PT J\nPY 1990\nUT WOS:1\nER\nPT J\nPY 1991\nUT WOS:1\nER\n";
        let out = parse_export(src.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].pub_year, Some(1990));
        assert_eq!(out.warnings[0].kind, WarningKind::DuplicateId);
    }

    #[test]
    fn latin1_fallback_warns() {
        let mut bytes = b"PT J\nAU Gl".to_vec();
        bytes.push(0xE4);
        bytes.extend_from_slice(b"nzel, W\nPY 1990\nER\n");
        let out = parse_export(&bytes).unwrap();
        assert_eq!(out.records[0].first_author_norm, "GLANZEL W");
        assert_eq!(out.warnings[0].kind, WarningKind::Latin1Fallback);
    }

    #[test]
    fn binary_input_is_unreadable() {
        assert!(matches!(parse_export(b"PT J\0\0"), Err(Error::UnreadableInput(_))));
    }

    #[test]
    fn missing_er_is_reported_and_kept() {
        let src = "PT J\nPY 1990\nPT J\nPY 1991\nER\n";
        let out = parse_export(src.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].kind, WarningKind::MissingEndOfRecord);
    }

    proptest! {
        #[test]
        fn cited_ref_parsing_is_total(line in "[^\r\n]{1,80}") {
            let r = parse_cited_ref(&line);
            prop_assert_eq!(&r.raw, &line);
            if let Some(y) = r.ref_year {
                prop_assert!((MIN_YEAR..=MAX_YEAR).contains(&y));
            }
            prop_assert!(r.volume.as_deref().map_or(true, |v| !v.contains(',')));
            prop_assert!(r.page.as_deref().map_or(true, |p| !p.contains(',')));
        }

        #[test]
        fn author_normalization_is_idempotent(name in "\\PC{0,30}") {
            let once = normalize_author(&name);
            prop_assert_eq!(normalize_author(&once), once);
        }

        #[test]
        fn cr_order_is_preserved(refs in proptest::collection::vec("[A-Z]{2,8} [A-Z], 19[0-9]{2}, [A-Z ]{3,12}", 1..12)) {
            let mut src = String::from("PT J\nPY 2000\nCR ");
            src.push_str(&refs.join("\n   "));
            src.push_str("\nER\n");
            let out = parse_export(src.as_bytes()).unwrap();
            let got: Vec<&str> = out.records[0].cited_refs.iter().map(|r| r.raw.as_str()).collect();
            let want: Vec<&str> = refs.iter().map(|r| r.trim()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
