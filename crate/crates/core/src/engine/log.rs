use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::kg::EntityId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub lsn: u64,
    pub payload_ref: String,
    pub changed_entities: Vec<EntityId>,
    pub checksum: String,
}

fn checksum(lsn: u64, payload_ref: &str, changed: &[EntityId]) -> String {
    let mut h = Sha256::new();
    h.update(lsn.to_string());
    h.update([0x1f]);
    h.update(payload_ref);
    for e in changed {
        h.update([0x1e]);
        h.update(e.to_string());
    }
    hex::encode(h.finalize())
}

impl LogEntry {
    pub fn verify(&self) -> bool {
        self.checksum == checksum(self.lsn, &self.payload_ref, &self.changed_entities)
    }
}

/// Append-only operation log. Entries are JSON lines; each append is synced
/// before its LSN is returned. Payload references resolve against `base`.
#[derive(Debug)]
pub struct OperationLog {
    path: Option<PathBuf>,
    base: PathBuf,
    entries: Vec<LogEntry>,
}

impl OperationLog {
    pub fn in_memory(base: impl Into<PathBuf>) -> Self {
        Self { path: None, base: base.into(), entries: Vec::new() }
    }

    /// Opens (or creates) the log at `path`. A torn last line, left by a
    /// crash during append, is cut off; any other damage is an error.
    pub fn open(path: &Path, base: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let mut log = Self { path: Some(path.to_path_buf()), base: base.into(), entries: Vec::new() };
        if !path.exists() {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            File::create(path)?.sync_all()?;
            return Ok(log);
        }
        let raw = fs::read(path)?;
        let mut good = 0usize;
        let mut offset = 0usize;
        for line in raw.split_inclusive(|b| *b == b'\n') {
            offset += line.len();
            let complete = line.ends_with(b"\n");
            let body = line.strip_suffix(b"\n").unwrap_or(line);
            if body.iter().all(u8::is_ascii_whitespace) {
                good = offset;
                continue;
            }
            let parsed: Result<LogEntry, _> = serde_json::from_slice(body);
            let e = match parsed {
                Ok(e) => e,
                Err(_) if !complete => break,
                Err(err) => return Err(EngineError::LogCorrupt(format!("line after lsn {}: {err}", log.head()))),
            };
            if !e.verify() {
                return Err(EngineError::LogCorrupt(format!("checksum mismatch at lsn {}", e.lsn)));
            }
            if e.lsn != log.head() + 1 {
                return Err(EngineError::LogGap { expected: log.head() + 1, found: e.lsn });
            }
            log.entries.push(e);
            good = offset;
        }
        if good < raw.len() {
            log::warn!("dropping torn tail of {}", path.display());
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(good as u64)?;
            f.sync_all()?;
        }
        Ok(log)
    }

    pub fn head(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.lsn)
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Entries with LSN in `(after, after + limit]`.
    pub fn entries_after(&self, after: u64, limit: usize) -> &[LogEntry] {
        let from = (after as usize).min(self.entries.len());
        let to = from.saturating_add(limit).min(self.entries.len());
        &self.entries[from..to]
    }

    pub fn resolve(&self, entry: &LogEntry) -> PathBuf {
        self.base.join(&entry.payload_ref)
    }

    /// Appends an entry for a staged payload; returns its LSN.
    pub fn append_op(&mut self, payload_ref: &str, changed_entities: Vec<EntityId>) -> Result<u64, EngineError> {
        if !self.base.join(payload_ref).is_file() {
            return Err(EngineError::StageMissing(payload_ref.to_string()));
        }
        let lsn = self.head() + 1;
        let entry = LogEntry {
            lsn,
            checksum: checksum(lsn, payload_ref, &changed_entities),
            payload_ref: payload_ref.to_string(),
            changed_entities,
        };
        if let Some(path) = &self.path {
            let mut line = serde_json::to_vec(&entry).map_err(|e| EngineError::LogCorrupt(e.to_string()))?;
            line.push(b'\n');
            let mut f = OpenOptions::new().append(true).open(path)?;
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.entries.push(entry);
        Ok(lsn)
    }
}

/// Reads a staged payload: triples as JSON lines.
pub fn read_payload(path: &Path) -> Result<Vec<crate::kg::ExtendedTriple>, EngineError> {
    let f = File::open(path).map_err(|_| EngineError::StageMissing(path.display().to_string()))?;
    crate::kg::read_triples_jsonl(BufReader::new(f)).map_err(|e| EngineError::Payload(e.to_string()))
}
