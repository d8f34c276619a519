//! JSONL persistence for campaign records.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::TrialRecord;
use crate::prompting::PromptStyle;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("campaign file {0} is locked by another run (remove the .lock file if that run is gone)")]
    Locked(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `<work_dir>/campaigns/<scenario>__<style>.jsonl`
pub fn campaign_path(work_dir: &Path, scenario: &str, style: PromptStyle) -> PathBuf {
    work_dir
        .join("campaigns")
        .join(format!("{scenario}__{}.jsonl", style.short()))
}

/// Read every record of a JSONL file. Blank lines are ignored.
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_records(&text, path)
}

pub fn parse_records(text: &str, path: &Path) -> Result<Vec<TrialRecord>, StoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// An open campaign file, held under a lock file for its lifetime.
pub struct CampaignStore {
    path: PathBuf,
    lock: PathBuf,
    existing: BTreeMap<u32, TrialRecord>,
    appender: Mutex<BufWriter<File>>,
}

impl CampaignStore {
    pub fn open(path: PathBuf) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut lock = path.clone().into_os_string();
        lock.push(".lock");
        let lock = PathBuf::from(lock);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Locked(path))
            }
            Err(e) => return Err(io_err(&lock)(e)),
        }
        let opened = Self::open_locked(&path, &lock);
        if opened.is_err() {
            let _ = fs::remove_file(&lock);
        }
        opened
    }

    fn open_locked(path: &Path, lock: &Path) -> Result<Self, StoreError> {
        let existing = if path.exists() {
            read_records(path)?
                .into_iter()
                .map(|r| (r.trial_index, r))
                .collect()
        } else {
            BTreeMap::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(CampaignStore {
            path: path.to_path_buf(),
            lock: lock.to_path_buf(),
            existing,
            appender: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records that were already on disk when the store was opened.
    pub fn existing(&self) -> &BTreeMap<u32, TrialRecord> {
        &self.existing
    }

    pub fn append(&self, record: &TrialRecord) -> Result<(), StoreError> {
        let line = serde_json::to_string(record).expect("records serialize");
        let mut w = self.appender.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(w, "{line}")
            .and_then(|()| w.flush())
            .map_err(io_err(&self.path))
    }

    /// Rewrite the file with one record per index, sorted by index. Later
    /// lines win over earlier ones for the same index.
    pub fn finish(self) -> Result<Vec<TrialRecord>, StoreError> {
        {
            let mut w = self.appender.lock().unwrap_or_else(|e| e.into_inner());
            w.flush().map_err(io_err(&self.path))?;
        }
        let records: BTreeMap<u32, TrialRecord> = read_records(&self.path)?
            .into_iter()
            .map(|r| (r.trial_index, r))
            .collect();
        let records: Vec<TrialRecord> = records.into_values().collect();
        let mut tmp = self.path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut out = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
            for r in &records {
                let line = serde_json::to_string(r).expect("records serialize");
                writeln!(out, "{line}").map_err(io_err(&tmp))?;
            }
            out.flush().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &self.path).map_err(io_err(&self.path))?;
        Ok(records)
    }
}

impl Drop for CampaignStore {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
