use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::InferenceError;

/// One line of the append-only inference log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLogRecord {
    pub item_id: String,
    pub prompt_hash: String,
    pub response_text: String,
    pub latency_ms: u64,
    pub status: String,
}

pub const STATUS_OK: &str = "ok";

/// Append-only request/response log that doubles as a response cache keyed
/// by prompt hash.
#[derive(Debug)]
pub struct RunLog {
    path: PathBuf,
    file: Mutex<File>,
    cache: RwLock<HashMap<String, RunLogRecord>>,
    appended: AtomicUsize,
}

impl RunLog {
    pub fn open(path: &Path) -> Result<Self, InferenceError> {
        let io = |source| InferenceError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut cache = HashMap::new();
        if path.exists() {
            for (i, line) in fs::read_to_string(path).map_err(io)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: RunLogRecord =
                    serde_json::from_str(line).map_err(|e| InferenceError::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                if rec.status == STATUS_OK {
                    cache.insert(rec.prompt_hash.clone(), rec);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(RunLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            cache: RwLock::new(cache),
            appended: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Successful response previously logged for `prompt_hash`.
    pub fn cached(&self, prompt_hash: &str) -> Option<RunLogRecord> {
        self.cache.read().get(prompt_hash).cloned()
    }

    /// Records appended through this handle.
    pub fn appended(&self) -> usize {
        self.appended.load(Ordering::SeqCst)
    }

    pub fn append(&self, record: RunLogRecord) -> Result<(), InferenceError> {
        let mut line = serde_json::to_vec(&record).expect("log record serializes");
        line.push(b'\n');
        let mut file = self.file.lock();
        file.write_all(&line)
            .and_then(|_| file.flush())
            .map_err(|source| InferenceError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.appended.fetch_add(1, Ordering::SeqCst);
        if record.status == STATUS_OK {
            self.cache.write().insert(record.prompt_hash.clone(), record);
        }
        Ok(())
    }
}
