//! The project file: parsed corpus, ledger and settings in one JSON document.
//!
//! Serialization is canonical (fixed field order, pretty printed, `\n`
//! terminated), so loading and saving an unedited project reproduces it byte
//! for byte. Fields this version does not know are kept in `extra` and
//! written back unchanged.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::disambig::{DecisionLedger, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::wos::{DocumentRecord, Warning};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub threshold: f64,
    pub seed: u64,
    pub resolution: f64,
    /// `start:end`; absent means the dated range of the corpus.
    pub rpy_range: Option<String>,
    pub segmentation: String,
    pub main_path_cap: usize,
    pub min_count: u64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            threshold: DEFAULT_THRESHOLD,
            seed: crate::citegraph::DEFAULT_SEED,
            resolution: 1.0,
            rpy_range: None,
            segmentation: "per-year".into(),
            main_path_cap: crate::citegraph::DEFAULT_PATH_CAP,
            min_count: 1,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectFile {
    pub format_version: u32,
    /// SHA-256 of the source export bytes.
    pub fingerprint: String,
    pub source: String,
    pub settings: Settings,
    pub records: Vec<DocumentRecord>,
    pub parse_warnings: Vec<Warning>,
    pub ledger: DecisionLedger,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ProjectFile {
    pub fn new(source: impl Into<String>, export: &[u8], records: Vec<DocumentRecord>, warnings: Vec<Warning>) -> Self {
        ProjectFile {
            format_version: FORMAT_VERSION,
            fingerprint: export_fingerprint(export),
            source: source.into(),
            settings: Settings::default(),
            records,
            parse_warnings: warnings,
            ledger: DecisionLedger::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Fingerprint of the current analysis state: corpus plus ledger.
    pub fn state_fingerprint(&self) -> String {
        state_fingerprint(&self.fingerprint, &self.ledger)
    }

    /// Replace the corpus after re-parsing. Returns a warning when the source
    /// export changed since the project was created; the ledger is kept.
    pub fn reparse(&mut self, export: &[u8], records: Vec<DocumentRecord>, warnings: Vec<Warning>) -> Option<String> {
        let fp = export_fingerprint(export);
        let note = (fp != self.fingerprint)
            .then(|| format!("source export changed (fingerprint {} -> {})", short(&self.fingerprint), short(&fp)));
        self.fingerprint = fp;
        self.records = records;
        self.parse_warnings = warnings;
        note
    }
}

fn short(fp: &str) -> &str {
    fp.get(..12).unwrap_or(fp)
}

pub fn export_fingerprint(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// First 16 hex digits of SHA-256 over the export fingerprint and the ledger as JSONL.
pub fn state_fingerprint(export_fp: &str, ledger: &DecisionLedger) -> String {
    let mut h = Sha256::new();
    h.update(export_fp.as_bytes());
    h.update(b"\n");
    let mut buf = Vec::new();
    ledger.write_jsonl(&mut buf).expect("writing to memory");
    h.update(&buf);
    hex(&h.finalize())[..16].to_string()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_project(p: &ProjectFile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(p).map_err(std::io::Error::from)?;
    s.push('\n');
    Ok(s)
}

pub fn load_project(text: &str) -> Result<ProjectFile> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::CorruptFile {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let version = value.get("format_version").and_then(Value::as_u64).ok_or_else(|| Error::CorruptFile {
        offset: 0,
        message: "missing format_version".into(),
    })?;
    if version > u64::from(FORMAT_VERSION) {
        return Err(Error::VersionTooNew { found: version.min(u64::from(u32::MAX)) as u32, supported: FORMAT_VERSION });
    }
    serde_json::from_value(value).map_err(|e| Error::CorruptFile { offset: 0, message: e.to_string() })
}

/// Byte offset of a 1-based line and column as reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub fn load_project_file(path: &Path) -> Result<ProjectFile> {
    let text = fs::read_to_string(path)?;
    load_project(&text)
}

/// Write to a sibling temp file, fsync, then rename over the target.
pub fn save_project_file(p: &ProjectFile, path: &Path) -> Result<()> {
    let text = save_project(p)?;
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("project");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum LockError {
    #[error("project is locked by {owner} (pid {pid})")]
    Held { owner: String, pid: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Advisory lock: a `<project>.lock` file created exclusively. A lock left by
/// a process that no longer exists is taken over.
#[derive(Debug)]
pub struct ProjectLock {
    path: PathBuf,
}

impl ProjectLock {
    pub fn lock_path(project: &Path) -> PathBuf {
        let mut s = project.as_os_str().to_owned();
        s.push(".lock");
        PathBuf::from(s)
    }

    pub fn acquire(project: &Path, owner: &str) -> std::result::Result<Self, LockError> {
        let path = Self::lock_path(project);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{owner} {}", std::process::id())?;
                    f.sync_all()?;
                    return Ok(ProjectLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let (holder, pid) = Self::holder(&path);
                    if pid != 0 && !process_alive(pid) {
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(LockError::Held { owner: holder, pid });
                }
                Err(e) => return Err(e.into()),
            }
        }
        let (owner, pid) = Self::holder(&path);
        Err(LockError::Held { owner, pid })
    }

    /// Owner and pid of the current lock holder, if any.
    pub fn holder(path: &Path) -> (String, u32) {
        let text = fs::read_to_string(path).unwrap_or_default();
        let mut it = text.split_whitespace();
        let owner = it.next().unwrap_or("unknown").to_string();
        let pid = it.next().and_then(|p| p.parse().ok()).unwrap_or(0);
        (owner, pid)
    }

    /// Whether another live process holds the lock on `project`.
    pub fn is_held(project: &Path) -> bool {
        let path = Self::lock_path(project);
        if !path.exists() {
            return false;
        }
        let (_, pid) = Self::holder(&path);
        pid == 0 || process_alive(pid)
    }
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        true
    }
}
