//! Pluggable sinks for the group-commit log.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

/// One materialized write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub key: u64,
    pub tid: u64,
    pub value: Vec<u8>,
}

/// Receives each stable epoch's records, in epoch order.
pub trait LogSink: Send + Sync + fmt::Debug {
    fn write_epoch(&self, epoch: u32, records: &[LogRecord]) -> io::Result<()>;
}

/// Discards records, counting them.
#[derive(Debug, Default)]
pub struct NullSink {
    records: AtomicU64,
}

impl NullSink {
    pub fn records(&self) -> u64 {
        self.records.load(Ordering::Relaxed)
    }
}

impl LogSink for NullSink {
    fn write_epoch(&self, _epoch: u32, records: &[LogRecord]) -> io::Result<()> {
        self.records
            .fetch_add(records.len() as u64, Ordering::Relaxed);
        Ok(())
    }
}

/// Keeps every flushed epoch in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    epochs: Mutex<Vec<(u32, Vec<LogRecord>)>>,
}

impl MemorySink {
    pub fn epochs(&self) -> Vec<(u32, Vec<LogRecord>)> {
        self.epochs.lock().clone()
    }

    pub fn records(&self) -> Vec<LogRecord> {
        self.epochs
            .lock()
            .iter()
            .flat_map(|(_, r)| r.iter().cloned())
            .collect()
    }
}

impl LogSink for MemorySink {
    fn write_epoch(&self, epoch: u32, records: &[LogRecord]) -> io::Result<()> {
        self.epochs.lock().push((epoch, records.to_vec()));
        Ok(())
    }
}

/// Buffered append-only file, flushed once per epoch.
///
/// Each record is `key: u64 | tid: u64 | len: u32 | value`, little-endian.
pub struct FileSink {
    out: Mutex<BufWriter<File>>,
}

impl fmt::Debug for FileSink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FileSink").finish_non_exhaustive()
    }
}

impl FileSink {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(FileSink {
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl LogSink for FileSink {
    fn write_epoch(&self, _epoch: u32, records: &[LogRecord]) -> io::Result<()> {
        let mut out = self.out.lock();
        for r in records {
            out.write_all(&r.key.to_le_bytes())?;
            out.write_all(&r.tid.to_le_bytes())?;
            out.write_all(&(r.value.len() as u32).to_le_bytes())?;
            out.write_all(&r.value)?;
        }
        out.flush()
    }
}

/// Fails every write; used to exercise the read-only error state.
#[derive(Debug, Default)]
pub struct FailingSink;

impl LogSink for FailingSink {
    fn write_epoch(&self, _epoch: u32, _records: &[LogRecord]) -> io::Result<()> {
        Err(io::Error::other("sink unavailable"))
    }
}
