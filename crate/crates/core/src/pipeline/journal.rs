use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::report::StageSnapshot;
use super::runner::RunConfig;
use super::stages::StageVerdict;
use crate::error::{Error, Result};
use crate::gateway::{CallLog, CallRecord};
use crate::model::VideoRef;

/// One line of the run journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum JournalEntry {
    Start {
        config: RunConfig,
        sequences: Vec<VideoRef>,
    },
    Call {
        #[serde(flatten)]
        record: CallRecord,
    },
    Verdicts {
        stage: String,
        verdicts: Vec<StageVerdict>,
    },
    Commit {
        snapshot: StageSnapshot,
    },
}

/// Append-only JSONL write-ahead log of a pipeline run.
///
/// Gateway calls are buffered and written sorted by request hash when a stage
/// flushes, so the journal bytes do not depend on completion order.
#[derive(Debug)]
pub struct Journal {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    entries: Vec<JournalEntry>,
    pending: Vec<CallRecord>,
    /// Hashes of every call written or pending.
    known: HashSet<String>,
    file: Option<File>,
}

impl Journal {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    /// Opens (or creates) a journal file, loading any entries already in it.
    pub fn open(path: &Path) -> Result<Self> {
        let entries = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str(line) {
                    Ok(e) => out.push(e),
                    // a torn final line from a crash is dropped, anything else is fatal
                    Err(_) if i + 1 == text.lines().count() && !text.ends_with('\n') => {
                        tracing::warn!(path = %path.display(), "dropping torn final journal line");
                    }
                    Err(e) => return Err(Error::Parse(format!("{}:{}: {e}", path.display(), i + 1))),
                }
            }
            out
        } else {
            Vec::new()
        };
        // rewrite so a torn tail never precedes new lines
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        for e in &entries {
            writeln!(file, "{}", serde_json::to_string(e)?).map_err(|err| Error::io(path, err))?;
        }
        file.sync_data().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                known: calls_in(&entries).into_iter().map(|c| c.request_hash).collect(),
                entries,
                pending: Vec::new(),
                file: Some(file),
            }),
        })
    }

    /// Reads a journal without opening it for writing.
    pub fn load(path: &Path) -> Result<Vec<JournalEntry>> {
        crate::io::read_jsonl(path)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> Vec<JournalEntry> {
        self.inner.lock().unwrap().entries.clone()
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        calls_in(&self.entries())
    }

    pub fn append(&self, entry: JournalEntry) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        Self::write(&self.path, &mut inner, &entry)?;
        inner.entries.push(entry);
        Ok(())
    }

    /// Writes buffered call records, ordered by request hash.
    pub fn flush_calls(&self) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let mut pending = std::mem::take(&mut inner.pending);
        pending.sort_by(|a, b| a.request_hash.cmp(&b.request_hash));
        for record in pending {
            let entry = JournalEntry::Call { record };
            Self::write(&self.path, &mut inner, &entry)?;
            inner.entries.push(entry);
        }
        Ok(())
    }

    fn write(path: &Option<PathBuf>, inner: &mut Inner, entry: &JournalEntry) -> Result<()> {
        if let (Some(file), Some(path)) = (inner.file.as_mut(), path) {
            let mut line = serde_json::to_string(entry)?;
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Serialized journal, one entry per line.
    pub fn to_jsonl(&self) -> String {
        self.entries()
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }
}

impl CallLog for Journal {
    /// Each request hash is journaled once.
    fn record(&self, rec: &CallRecord) {
        let mut inner = self.inner.lock().unwrap();
        if inner.known.insert(rec.request_hash.clone()) {
            inner.pending.push(rec.clone());
        }
    }
}

pub fn calls_in(entries: &[JournalEntry]) -> Vec<CallRecord> {
    entries
        .iter()
        .filter_map(|e| match e {
            JournalEntry::Call { record } => Some(record.clone()),
            _ => None,
        })
        .collect()
}

/// Committed snapshots, in commit order.
pub fn history_in(entries: &[JournalEntry]) -> Vec<StageSnapshot> {
    entries
        .iter()
        .filter_map(|e| match e {
            JournalEntry::Commit { snapshot } => Some(snapshot.clone()),
            _ => None,
        })
        .collect()
}
