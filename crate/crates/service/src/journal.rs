//! Append-only JSON-lines journals.
//!
//! Every append is written as one `write` of a full line and flushed to disk
//! with `fsync` before the caller sees the new length. A crash can therefore
//! leave at most one unterminated line at the tail; [`Journal::open`] drops it
//! and truncates the file back to the last complete record.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use interest_core::{Comparison, Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A "can't decide" answer. Kept for audit only; the model has no tie outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub a: String,
    pub b: String,
    pub session: String,
    pub timestamp: DateTime<Utc>,
}

pub type ComparisonLog = Journal<Comparison>;
pub type SkipLog = Journal<SkipRecord>;

#[derive(Debug)]
pub struct Journal<R> {
    path: PathBuf,
    file: File,
    entries: Vec<R>,
    bytes: u64,
    /// Bytes of a torn tail dropped while opening.
    recovered: u64,
}

impl<R: Serialize + DeserializeOwned + Clone> Journal<R> {
    /// Opens or creates the journal, replaying every complete line.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;

        let complete = raw.iter().rposition(|&b| b == b'\n').map_or(0, |k| k + 1);
        let mut entries = Vec::new();
        for (k, line) in raw[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let record = serde_json::from_slice(line).map_err(|e| Error::Load {
                path: path.clone(),
                record: k + 1,
                reason: e.to_string(),
            })?;
            entries.push(record);
        }

        let recovered = (raw.len() - complete) as u64;
        if recovered > 0 {
            file.set_len(complete as u64)?;
            file.sync_all()?;
        }
        Ok(Journal {
            path,
            file,
            entries,
            bytes: complete as u64,
            recovered,
        })
    }

    /// Durably appends one record and returns the new record count.
    ///
    /// On failure the file is cut back to its previous length and the
    /// in-memory view is unchanged.
    pub fn append(&mut self, record: &R) -> Result<usize> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let written = self
            .file
            .write_all(&line)
            .and_then(|()| self.file.sync_data());
        if let Err(e) = written {
            let _ = self.file.set_len(self.bytes);
            return Err(e.into());
        }
        self.bytes += line.len() as u64;
        self.entries.push(record.clone());
        Ok(self.entries.len())
    }

    pub fn entries(&self) -> &[R] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn recovered_bytes(&self) -> u64 {
        self.recovered
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judgment(k: usize) -> Comparison {
        Comparison::new(format!("w{k}"), format!("l{k}"), "s").unwrap()
    }

    #[test]
    fn append_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut log = ComparisonLog::open(&path).unwrap();
        assert!(log.is_empty());
        let written = [judgment(0), judgment(0)];
        assert_eq!(log.append(&written[0]).unwrap(), 1);
        assert_eq!(log.append(&written[1]).unwrap(), 2);
        drop(log);
        let log = ComparisonLog::open(&path).unwrap();
        assert_eq!(log.entries(), &written[..]);
        assert_eq!(log.recovered_bytes(), 0);
    }

    #[test]
    fn torn_tail_is_dropped_and_appends_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let written = [judgment(1), judgment(2)];
        let mut log = ComparisonLog::open(&path).unwrap();
        log.append(&written[0]).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"winner":"a","lo"#).unwrap();
        drop(f);

        let mut log = ComparisonLog::open(&path).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.recovered_bytes(), 17);
        log.append(&written[1]).unwrap();
        drop(log);
        let log = ComparisonLog::open(&path).unwrap();
        assert_eq!(log.entries(), &written[..]);
    }

    #[test]
    fn corrupt_complete_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        match ComparisonLog::open(&path).unwrap_err() {
            Error::Load { record, .. } => assert_eq!(record, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skip_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("skips.jsonl");
        let skip = SkipRecord {
            a: "x".into(),
            b: "y".into(),
            session: "s".into(),
            timestamp: Utc::now(),
        };
        let mut log = SkipLog::open(&path).unwrap();
        log.append(&skip).unwrap();
        drop(log);
        assert_eq!(SkipLog::open(&path).unwrap().entries(), &[skip][..]);
    }
}
