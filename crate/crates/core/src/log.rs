//! Durable event storage.
//!
//! [`FileLog`] is an append-only JSONL file synced to disk before `append`
//! returns. [`MemoryLog`] backs tests and the simulator and can be told to
//! fail its next append.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::event::Event;
use crate::state::State;

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log line {line}: {source}")]
    Corrupt {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("injected storage fault")]
    Injected,
}

pub trait LogStore: Send {
    /// Appends all events or none of them.
    fn append(&mut self, events: &[Event]) -> Result<(), StorageError>;
    fn load(&self) -> Result<Vec<Event>, StorageError>;
}

#[derive(Debug, Default)]
pub struct MemoryLog {
    events: Vec<Event>,
    fail_next: bool,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fail_next_append(&mut self) {
        self.fail_next = true;
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

impl LogStore for MemoryLog {
    fn append(&mut self, events: &[Event]) -> Result<(), StorageError> {
        if std::mem::take(&mut self.fail_next) {
            return Err(StorageError::Injected);
        }
        self.events.extend_from_slice(events);
        Ok(())
    }

    fn load(&self) -> Result<Vec<Event>, StorageError> {
        Ok(self.events.clone())
    }
}

#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    file: File,
}

impl FileLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)?;
        truncate_torn_tail(&file)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogStore for FileLog {
    fn append(&mut self, events: &[Event]) -> Result<(), StorageError> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("event serializes");
            buf.push(b'\n');
        }
        // one write call so a crash leaves at most a torn final line
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        Ok(())
    }

    fn load(&self) -> Result<Vec<Event>, StorageError> {
        let reader = BufReader::new(File::open(&self.path)?);
        let mut out = Vec::new();
        let mut lines = reader.lines().enumerate().peekable();
        while let Some((n, line)) = lines.next() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(e) => out.push(e),
                // a torn tail from an interrupted append is dropped
                Err(_) if lines.peek().is_none() => {
                    tracing::warn!(line = n + 1, "ignoring torn final log line");
                }
                Err(source) => return Err(StorageError::Corrupt { line: n + 1, source }),
            }
        }
        Ok(out)
    }
}

/// Cuts the file back to its last newline so the next append starts on a
/// fresh line.
fn truncate_torn_tail(file: &File) -> std::io::Result<()> {
    use std::io::{Read, Seek, SeekFrom};
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let mut reader = file;
    let mut keep = len;
    let mut byte = [0u8; 1];
    while keep > 0 {
        reader.seek(SeekFrom::Start(keep - 1))?;
        reader.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        keep -= 1;
    }
    if keep != len {
        tracing::warn!(dropped = len - keep, "truncating torn log tail");
        file.set_len(keep)?;
    }
    Ok(())
}

/// Writes the materialized state next to the log, atomically.
pub fn write_snapshot(path: impl AsRef<Path>, state: &State) -> Result<(), StorageError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(state.canonical_json().as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<State, StorageError> {
    let raw = fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|source| StorageError::Corrupt { line: 1, source })
}
