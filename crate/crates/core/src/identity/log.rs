//! Append-only record files with hash-chained entries.
//!
//! Each line of the file is one JSON object
//! `{"seq": n, "prev": hex, "digest": hex, "body": {...}}` where
//! `digest = SHA-256(prev || seq as u64 BE || body JSON)` and `prev` is the
//! previous entry's digest (32 zero bytes for the first entry). Reopening a
//! file re-verifies the whole chain.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed record at line {line}: {source}")]
    Malformed { line: usize, source: serde_json::Error },
    #[error("hash chain broken at entry {seq}")]
    Broken { seq: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry<T> {
    pub seq: u64,
    pub prev: String,
    pub digest: String,
    pub body: T,
}

pub fn entry_digest(prev: &[u8; 32], seq: u64, body_json: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(seq.to_be_bytes());
    h.update(body_json);
    h.finalize().into()
}

#[derive(Debug)]
pub struct RecordLog<T> {
    entries: Vec<Entry<T>>,
    head: [u8; 32],
    sink: Option<(PathBuf, File)>,
}

impl<T: Serialize + DeserializeOwned> RecordLog<T> {
    pub fn in_memory() -> Self {
        RecordLog { entries: Vec::new(), head: [0; 32], sink: None }
    }

    /// Opens (or creates) a record file, verifying every existing entry.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| LogError::Io { path: path.clone(), source };
        let mut log = Self::in_memory();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: Entry<T> =
                    serde_json::from_str(&line).map_err(|source| LogError::Malformed { line: i + 1, source })?;
                log.check_next(&entry)?;
                log.head = decode_digest(&entry.digest).ok_or(LogError::Broken { seq: entry.seq })?;
                log.entries.push(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        log.sink = Some((path, file));
        Ok(log)
    }

    fn check_next(&self, entry: &Entry<T>) -> Result<(), LogError> {
        let broken = LogError::Broken { seq: entry.seq };
        if entry.seq != self.entries.len() as u64 || entry.prev != hex::encode(self.head) {
            return Err(broken);
        }
        let body = serde_json::to_vec(&entry.body).map_err(|_| LogError::Broken { seq: entry.seq })?;
        if hex::encode(entry_digest(&self.head, entry.seq, &body)) != entry.digest {
            return Err(broken);
        }
        Ok(())
    }

    pub fn append(&mut self, body: T) -> Result<&Entry<T>, LogError> {
        let seq = self.entries.len() as u64;
        let body_json = serde_json::to_vec(&body).expect("record bodies serialise");
        let digest = entry_digest(&self.head, seq, &body_json);
        let entry = Entry { seq, prev: hex::encode(self.head), digest: hex::encode(digest), body };
        if let Some((path, file)) = &mut self.sink {
            let mut line = serde_json::to_vec(&entry).expect("record entries serialise");
            line.push(b'\n');
            file.write_all(&line)
                .and_then(|_| file.flush())
                .map_err(|source| LogError::Io { path: path.clone(), source })?;
        }
        self.head = digest;
        self.entries.push(entry);
        Ok(self.entries.last().unwrap())
    }

    pub fn entries(&self) -> &[Entry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Digest of the most recent entry (all zero for an empty log).
    pub fn head(&self) -> [u8; 32] {
        self.head
    }

    pub fn bodies(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|e| &e.body)
    }
}

fn decode_digest(s: &str) -> Option<[u8; 32]> {
    hex::decode(s).ok()?.try_into().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        n: u32,
    }

    #[test]
    fn reopen_verifies_and_continues_the_chain() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.ndjson");
        {
            let mut log = RecordLog::open(&path).unwrap();
            for n in 0..5 {
                log.append(Rec { n }).unwrap();
            }
        }
        let mut log: RecordLog<Rec> = RecordLog::open(&path).unwrap();
        assert_eq!(log.len(), 5);
        let head = log.head();
        log.append(Rec { n: 5 }).unwrap();
        assert_eq!(log.entries()[5].prev, hex::encode(head));

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("{\"n\":2}", "{\"n\":7}", 1)).unwrap();
        assert!(matches!(RecordLog::<Rec>::open(&path), Err(LogError::Broken { seq: 2 })));
    }

    #[test]
    fn memory_log_chains_digests() {
        let mut log = RecordLog::in_memory();
        let first = log.append(Rec { n: 1 }).unwrap().clone();
        assert_eq!(first.prev, hex::encode([0u8; 32]));
        let second = log.append(Rec { n: 2 }).unwrap();
        assert_eq!(second.prev, first.digest);
    }
}
