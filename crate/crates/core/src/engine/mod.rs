//! In-memory transactional key-value engine.
//!
//! Transactions run optimistically against single-version records and commit
//! with a Silo-style protocol: lock the write set in key order, draw a commit
//! sequence number (whose high half is the commit epoch), validate the read
//! set, install, unlock. Under [`Protocol::SiloNwr`] a transaction whose
//! writes are all blind first tries to commit without executing them, by
//! placing each write just before the current epoch's pivot version of its
//! record. When that cannot be shown safe the transaction falls through to
//! the baseline commit, which alone may abort it.
//!
//! Safety of an omitted commit rests on three checks. The compressed check
//! over the pivot objects; the baseline read validation, which rules out
//! overwriters; and a sequence-number guard: every version the transaction
//! read, and every reader that saw a version older than a written record's
//! pivot, must precede the earliest pivot the transaction writes under. The
//! guard covers dependencies that the merged summaries do not track.

mod clock;
mod log;
mod record;
mod recorder;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{epoch_of, EpochClock};
pub use log::{FailingSink, FileSink, LogRecord, LogSink, MemorySink, NullSink};
pub use record::{tid, tid_epoch, tid_vn};
pub use recorder::RecordedHistory;

use crate::pivot::{self, CompressedVerdict, Footprint, PivotVersionObject, ReadEntry, WriteEntry};
use record::{is_locked, Index, Record, LOCK};
use recorder::Recorder;

const MAX_WORKERS: usize = 512;
const NWR_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Silo,
    SiloNwr,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Silo => "silo",
            Protocol::SiloNwr => "silo-nwr",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "silo" => Ok(Protocol::Silo),
            "silo-nwr" => Ok(Protocol::SiloNwr),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub protocol: Protocol,
    pub epoch_ms: u64,
    pub value_size: usize,
    pub shards: usize,
    /// Advance epochs on a background ticker. Without it, epochs move only
    /// through [`Engine::advance_epoch`].
    pub ticker: bool,
    /// Record a history of at most this many operations.
    pub record_history: Option<usize>,
    /// Require the sequence-number guard before omitting writes.
    pub dependency_guard: bool,
    pub sink: Option<Arc<dyn LogSink>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            protocol: Protocol::SiloNwr,
            epoch_ms: 40,
            value_size: 8,
            shards: 64,
            ticker: true,
            record_history: None,
            dependency_guard: true,
            sink: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine is shut down")]
    ShutDown,
    #[error("key {0} does not exist")]
    KeyAbsent(u64),
    #[error("engine is read-only after a log sink failure")]
    ReadOnly,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("history recording is not enabled")]
    NotRecording,
    #[error("recorded history exceeds {0} operations")]
    RecorderOverflow(usize),
    #[error("recorded history is malformed: {0}")]
    Recording(String),
    #[error("all {0} worker slots are in use")]
    TooManyWorkers(usize),
}

/// Why the baseline protocol aborted a transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    ReadSetInvalid,
    DuplicateKey,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbortReason::ReadSetInvalid => "read_set_invalid",
            AbortReason::DuplicateKey => "duplicate_key",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitOutcome {
    CommittedBaseline {
        epoch: u32,
    },
    /// Every write was omitted: no record, log entry or index changed.
    CommittedNwr {
        epoch: u32,
    },
    Aborted {
        reason: AbortReason,
    },
}

impl CommitOutcome {
    pub fn is_committed(self) -> bool {
        !matches!(self, CommitOutcome::Aborted { .. })
    }

    pub fn epoch(self) -> Option<u32> {
        match self {
            CommitOutcome::CommittedBaseline { epoch } | CommitOutcome::CommittedNwr { epoch } => {
                Some(epoch)
            }
            CommitOutcome::Aborted { .. } => None,
        }
    }
}

/// Why an omission attempt handed the transaction to the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    NotBlind,
    StFail,
    MaybeCyclic,
    Guard,
    Overwritten,
    Contended,
}

/// Per-worker counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub committed_baseline: u64,
    pub committed_nwr: u64,
    pub aborts: BTreeMap<AbortReason, u64>,
    pub fallbacks: BTreeMap<Fallback, u64>,
}

impl WorkerStats {
    pub fn committed(&self) -> u64 {
        self.committed_baseline + self.committed_nwr
    }

    pub fn aborted(&self) -> u64 {
        self.aborts.values().sum()
    }

    pub fn absorb(&mut self, other: &WorkerStats) {
        self.committed_baseline += other.committed_baseline;
        self.committed_nwr += other.committed_nwr;
        for (k, v) in &other.aborts {
            *self.aborts.entry(*k).or_default() += v;
        }
        for (k, v) in &other.fallbacks {
            *self.fallbacks.entry(*k).or_default() += v;
        }
    }
}

/// Commit-path phases timed on sampled transactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Index,
    Validation,
    NwrOverhead,
    LockWait,
    Logging,
    Other,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Index => "index",
            Phase::Validation => "validation",
            Phase::NwrOverhead => "nwr_overhead",
            Phase::LockWait => "lockwait",
            Phase::Logging => "logging",
            Phase::Other => "other",
        }
    }
}

pub const PHASES: [Phase; 6] = [
    Phase::Index,
    Phase::Validation,
    Phase::NwrOverhead,
    Phase::LockWait,
    Phase::Logging,
    Phase::Other,
];

/// Nanoseconds per phase plus the total they partition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub ns: [u64; 6],
    pub total_ns: u64,
    pub samples: u64,
}

impl PhaseTimes {
    fn add(&mut self, p: Phase, d: Duration) {
        self.ns[p as usize] += d.as_nanos() as u64;
    }

    pub fn get(&self, p: Phase) -> u64 {
        self.ns[p as usize]
    }

    pub fn absorb(&mut self, o: &PhaseTimes) {
        for i in 0..6 {
            self.ns[i] += o.ns[i];
        }
        self.total_ns += o.total_ns;
        self.samples += o.samples;
    }
}

#[derive(Debug, Default)]
struct WorkerSlot {
    in_use: AtomicBool,
    /// Epoch announced by an in-flight commit, 0 when idle.
    local_epoch: AtomicU64,
    log: Mutex<Vec<(u32, LogRecord)>>,
}

struct Shared {
    config: EngineConfig,
    clock: EpochClock,
    index: Index,
    slots: Box<[WorkerSlot]>,
    sink: Arc<dyn LogSink>,
    read_only: AtomicBool,
    shut_down: AtomicBool,
    durable: Mutex<u32>,
    durable_cv: Condvar,
    flush_lock: Mutex<()>,
    recorder: Option<Mutex<Recorder>>,
    next_txn: AtomicU64,
}

impl fmt::Debug for Shared {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.config)
            .field("epoch", &self.clock.current())
            .finish()
    }
}

impl Shared {
    /// Moves the epoch forward, then flushes and acknowledges every epoch no
    /// in-flight commit can still join.
    fn advance_epoch(&self) -> u32 {
        let e = self.clock.advance();
        self.flush();
        e
    }

    fn flush(&self) {
        let _g = self.flush_lock.lock();
        let current = self.clock.current();
        let mut stable = current - 1;
        for s in self.slots.iter() {
            let l = s.local_epoch.load(Ordering::SeqCst) as u32;
            if l != 0 {
                stable = stable.min(l - 1);
            }
        }
        let prev = *self.durable.lock();
        if stable <= prev {
            return;
        }
        let mut batch: BTreeMap<u32, Vec<LogRecord>> = BTreeMap::new();
        for s in self.slots.iter() {
            let mut log = s.log.lock();
            if log.is_empty() {
                continue;
            }
            let mut keep = Vec::new();
            for (e, r) in log.drain(..) {
                if e <= stable {
                    batch.entry(e).or_default().push(r);
                } else {
                    keep.push((e, r));
                }
            }
            *log = keep;
        }
        for (e, records) in &batch {
            if self.sink.write_epoch(*e, records).is_err() {
                self.read_only.store(true, Ordering::SeqCst);
                break;
            }
        }
        if let Some(r) = &self.recorder {
            r.lock().acknowledge(stable);
        }
        *self.durable.lock() = stable;
        self.durable_cv.notify_all();
    }
}

/// Handle to an open engine. Dropping it closes the engine.
#[derive(Debug)]
pub struct Engine {
    shared: Arc<Shared>,
    ticker: Mutex<Option<JoinHandle<()>>>,
}

impl Engine {
    pub fn open(config: EngineConfig) -> Result<Engine, EngineError> {
        if config.epoch_ms == 0 {
            return Err(EngineError::InvalidConfig(
                "epoch_ms must be at least 1".into(),
            ));
        }
        if config.value_size == 0 {
            return Err(EngineError::InvalidConfig(
                "value_size must be at least 1".into(),
            ));
        }
        let sink: Arc<dyn LogSink> = config
            .sink
            .clone()
            .unwrap_or_else(|| Arc::new(NullSink::default()));
        let shared = Arc::new(Shared {
            clock: EpochClock::new(config.epoch_ms),
            index: Index::new(config.shards),
            slots: (0..MAX_WORKERS).map(|_| WorkerSlot::default()).collect(),
            sink,
            read_only: AtomicBool::new(false),
            shut_down: AtomicBool::new(false),
            durable: Mutex::new(0),
            durable_cv: Condvar::new(),
            flush_lock: Mutex::new(()),
            recorder: config.record_history.map(|n| Mutex::new(Recorder::new(n))),
            next_txn: AtomicU64::new(1),
            config,
        });
        let ticker = shared.config.ticker.then(|| {
            let s = Arc::clone(&shared);
            std::thread::Builder::new()
                .name("epoch-ticker".into())
                .spawn(move || {
                    let period = Duration::from_millis(s.config.epoch_ms);
                    let mut next = Instant::now() + period;
                    while !s.shut_down.load(Ordering::SeqCst) {
                        let now = Instant::now();
                        if now < next {
                            std::thread::sleep((next - now).min(Duration::from_millis(5)));
                            continue;
                        }
                        next += period;
                        s.advance_epoch();
                    }
                })
                .expect("spawn epoch ticker")
        });
        Ok(Engine {
            shared,
            ticker: Mutex::new(ticker),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.config
    }

    pub fn current_epoch(&self) -> u32 {
        self.shared.clock.current()
    }

    /// Highest epoch whose commits are acknowledged.
    pub fn durable_epoch(&self) -> u32 {
        *self.shared.durable.lock()
    }

    pub fn advance_epoch(&self) -> u32 {
        self.shared.advance_epoch()
    }

    /// Blocks until `epoch` is acknowledged or `timeout` passes.
    pub fn wait_durable(&self, epoch: u32, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut d = self.shared.durable.lock();
        while *d < epoch {
            if self
                .shared
                .durable_cv
                .wait_until(&mut d, deadline)
                .timed_out()
            {
                return *d >= epoch;
            }
        }
        true
    }

    pub fn is_read_only(&self) -> bool {
        self.shared.read_only.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.shared.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the initial version of `key` on behalf of `t0`.
    pub fn load(&self, key: u64, value: &[u8]) -> bool {
        let rec = Record::new(key, value, self.shared.config.value_size, tid(0, 1));
        self.shared.index.insert(Arc::new(rec))
    }

    pub fn worker(&self) -> Result<Worker, EngineError> {
        for (i, s) in self.shared.slots.iter().enumerate() {
            if s.in_use
                .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
                .is_ok()
            {
                return Ok(Worker {
                    shared: Arc::clone(&self.shared),
                    slot: i,
                    stats: WorkerStats::default(),
                    phases: PhaseTimes::default(),
                    sample_every: 0,
                    counter: 0,
                });
            }
        }
        Err(EngineError::TooManyWorkers(MAX_WORKERS))
    }

    /// Pivot object of `key`, for inspection.
    pub fn pivot(&self, key: u64) -> Option<PivotVersionObject> {
        self.shared.index.get(key).map(|r| r.pivot.load())
    }

    /// Version word of `key`, for inspection.
    pub fn tid_word(&self, key: u64) -> Option<u64> {
        self.shared
            .index
            .get(key)
            .map(|r| r.tid.load(Ordering::SeqCst))
    }

    /// Latest committed value of `key`, outside any transaction.
    pub fn peek(&self, key: u64) -> Option<Vec<u8>> {
        self.shared
            .index
            .get(key)
            .map(|r| r.snapshot(self.shared.config.value_size).value)
    }

    /// The recorded history, after acknowledging everything committed so far.
    pub fn recorded_history(&self) -> Result<RecordedHistory, EngineError> {
        let rec = self
            .shared
            .recorder
            .as_ref()
            .ok_or(EngineError::NotRecording)?;
        self.shared.advance_epoch();
        let h = rec.lock().history();
        h
    }

    /// Stops the ticker and acknowledges every finished commit.
    pub fn close(&self) {
        if self.shared.shut_down.swap(true, Ordering::SeqCst) {
            return;
        }
        if let Some(h) = self.ticker.lock().take() {
            let _ = h.join();
        }
        self.shared.advance_epoch();
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.close();
    }
}

/// A thread's connection to the engine. Transactions borrow it mutably, so
/// a worker runs one transaction at a time.
#[derive(Debug)]
pub struct Worker {
    shared: Arc<Shared>,
    slot: usize,
    stats: WorkerStats,
    phases: PhaseTimes,
    sample_every: u32,
    counter: u32,
}

impl Drop for Worker {
    fn drop(&mut self) {
        let s = &self.shared.slots[self.slot];
        s.local_epoch.store(0, Ordering::SeqCst);
        s.in_use.store(false, Ordering::SeqCst);
    }
}

impl Worker {
    pub fn stats(&self) -> &WorkerStats {
        &self.stats
    }

    pub fn phases(&self) -> &PhaseTimes {
        &self.phases
    }

    /// Time the commit path of every `n`th transaction; 0 disables timing.
    pub fn sample_phases(&mut self, n: u32) {
        self.sample_every = n;
    }

    pub fn begin(&mut self) -> Result<Txn<'_>, EngineError> {
        if self.shared.shut_down.load(Ordering::SeqCst) {
            return Err(EngineError::ShutDown);
        }
        let timer = if self.sample_every != 0 {
            self.counter += 1;
            if self.counter >= self.sample_every {
                self.counter = 0;
                Some((Instant::now(), PhaseTimes::default()))
            } else {
                None
            }
        } else {
            None
        };
        let id = if self.shared.recorder.is_some() {
            self.shared.next_txn.fetch_add(1, Ordering::Relaxed) as u32
        } else {
            0
        };
        let epoch = self.shared.clock.current();
        Ok(Txn {
            worker: self,
            id,
            epoch,
            reads: Vec::new(),
            writes: Vec::new(),
            timer,
            done: false,
        })
    }
}

#[derive(Debug)]
struct ReadItem {
    rec: Arc<Record>,
    tid: u64,
    writer_seq: u64,
}

#[derive(Debug)]
struct WriteItem {
    key: u64,
    rec: Option<Arc<Record>>,
    value: Vec<u8>,
    blind: bool,
}

/// A running transaction, confined to its worker's thread.
#[derive(Debug)]
pub struct Txn<'w> {
    worker: &'w mut Worker,
    id: u32,
    epoch: u32,
    reads: Vec<ReadItem>,
    writes: Vec<WriteItem>,
    timer: Option<(Instant, PhaseTimes)>,
    done: bool,
}

impl Drop for Txn<'_> {
    fn drop(&mut self) {
        if !self.done {
            self.finish_abort();
        }
    }
}

impl<'w> Txn<'w> {
    /// History id in verification mode, 0 otherwise.
    pub fn id(&self) -> u32 {
        self.id
    }

    /// Epoch current when the transaction began.
    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    fn shared(&self) -> &Shared {
        &self.worker.shared
    }

    fn time<T>(&mut self, p: Phase, f: impl FnOnce(&mut Self) -> T) -> T {
        if self.timer.is_none() {
            return f(self);
        }
        let t = Instant::now();
        let out = f(self);
        if let Some((_, ph)) = &mut self.timer {
            ph.add(p, t.elapsed());
        }
        out
    }

    /// Latest committed value, or this transaction's pending write.
    pub fn read(&mut self, key: u64) -> Result<Vec<u8>, EngineError> {
        if let Some(w) = self.writes.iter().find(|w| w.key == key) {
            return Ok(w.value.clone());
        }
        let (rec, snap) = self.time(Phase::Index, |t| {
            let rec = t
                .shared()
                .index
                .get(key)
                .ok_or(EngineError::KeyAbsent(key))?;
            let snap = rec.snapshot(t.shared().config.value_size);
            Ok::<_, EngineError>((rec, snap))
        })?;
        if let Some(r) = &self.shared().recorder {
            r.lock().read(self.id, key, snap.writer_txn);
        }
        self.reads.push(ReadItem {
            rec,
            tid: snap.tid,
            writer_seq: snap.writer_seq,
        });
        Ok(snap.value)
    }

    /// Version word observed by the latest read of `key`.
    pub fn observed_tid(&self, key: u64) -> Option<u64> {
        self.reads
            .iter()
            .rev()
            .find(|r| r.rec.key == key)
            .map(|r| r.tid)
    }

    pub fn write(&mut self, key: u64, value: &[u8]) -> Result<(), EngineError> {
        let value = self.sized(value);
        if let Some(w) = self.writes.iter_mut().find(|w| w.key == key) {
            w.value = value;
            return Ok(());
        }
        let rec = self
            .time(Phase::Index, |t| t.shared().index.get(key))
            .ok_or(EngineError::KeyAbsent(key))?;
        let blind = !self.reads.iter().any(|r| r.rec.key == key);
        self.writes.push(WriteItem {
            key,
            rec: Some(rec),
            value,
            blind,
        });
        Ok(())
    }

    /// Buffers the creation of `key`; a duplicate aborts at commit.
    pub fn insert(&mut self, key: u64, value: &[u8]) {
        let value = self.sized(value);
        if let Some(w) = self.writes.iter_mut().find(|w| w.key == key) {
            w.value = value;
            return;
        }
        self.writes.push(WriteItem {
            key,
            rec: None,
            value,
            blind: true,
        });
    }

    /// Whether the pending write of `key` is blind.
    pub fn is_blind(&self, key: u64) -> Option<bool> {
        self.writes.iter().find(|w| w.key == key).map(|w| w.blind)
    }

    fn sized(&self, value: &[u8]) -> Vec<u8> {
        let mut v = value.to_vec();
        v.resize(self.shared().config.value_size, 0);
        v
    }

    pub fn abort(mut self) {
        self.finish_abort();
    }

    fn finish_abort(&mut self) {
        self.done = true;
        if let Some(r) = &self.worker.shared.recorder {
            r.lock().abort(self.id);
        }
    }

    pub fn commit(mut self) -> Result<CommitOutcome, EngineError> {
        self.done = true;
        let shared = Arc::clone(&self.worker.shared);
        if !self.writes.is_empty() && shared.read_only.load(Ordering::SeqCst) {
            self.finish_abort();
            return Err(EngineError::ReadOnly);
        }
        let slot = &shared.slots[self.worker.slot];
        slot.local_epoch
            .store(u64::from(shared.clock.current()), Ordering::SeqCst);
        let eligible = shared.config.protocol == Protocol::SiloNwr
            && !self.writes.is_empty()
            && self.writes.iter().all(|w| w.blind && w.rec.is_some());
        if shared.config.protocol == Protocol::SiloNwr && !self.writes.is_empty() && !eligible {
            *self
                .worker
                .stats
                .fallbacks
                .entry(Fallback::NotBlind)
                .or_default() += 1;
        }
        let nwr = if eligible {
            self.time(Phase::NwrOverhead, |t| t.commit_nwr())
        } else {
            None
        };
        let outcome = match nwr {
            Some(o) => o,
            None => self.commit_baseline(),
        };
        slot.local_epoch.store(0, Ordering::SeqCst);
        let stats = &mut self.worker.stats;
        match outcome {
            CommitOutcome::CommittedBaseline { .. } => stats.committed_baseline += 1,
            CommitOutcome::CommittedNwr { .. } => stats.committed_nwr += 1,
            CommitOutcome::Aborted { reason } => *stats.aborts.entry(reason).or_default() += 1,
        }
        if let Some((start, mut ph)) = self.timer.take() {
            let total = start.elapsed().as_nanos() as u64;
            let known: u64 = ph.ns.iter().sum();
            ph.ns[Phase::Other as usize] = total.saturating_sub(known);
            ph.total_ns = total.max(known);
            ph.samples = 1;
            self.worker.phases.absorb(&ph);
        }
        Ok(outcome)
    }

    fn read_entries(&self, epoch: u32) -> Vec<ReadEntry> {
        self.reads
            .iter()
            .map(|r| ReadEntry {
                key_hash: r.rec.key,
                rank: pivot::rank(tid_epoch(r.tid), tid_vn(r.tid), epoch),
            })
            .collect()
    }

    fn fallback(&mut self, f: Fallback) -> Option<CommitOutcome> {
        *self.worker.stats.fallbacks.entry(f).or_default() += 1;
        None
    }

    /// Tries to commit with every write omitted. `None` hands the
    /// transaction to the baseline.
    fn commit_nwr(&mut self) -> Option<CommitOutcome> {
        let shared = Arc::clone(&self.worker.shared);
        let now = shared.clock.current();
        if self
            .writes
            .iter()
            .any(|w| w.rec.as_ref().is_some_and(|r| r.pivot.load().epoch != now))
        {
            return self.fallback(Fallback::StFail);
        }
        for _ in 0..NWR_ATTEMPTS {
            let seq = shared.clock.next_seq();
            let e = epoch_of(seq);
            for r in &self.reads {
                r.rec.last_reader.fetch_max(seq, Ordering::SeqCst);
            }
            let mut objects = Vec::with_capacity(self.writes.len());
            let mut floor = u64::MAX;
            let mut pre_reads = 0u64;
            for w in &self.writes {
                let rec = w.rec.as_ref().expect("eligible writes target records");
                let p = rec.pivot.load();
                floor = floor.min(rec.pivot_seq.load(Ordering::SeqCst));
                pre_reads = pre_reads.max(rec.pre_pivot_reads.load(Ordering::SeqCst));
                objects.push((w.key, p));
            }
            let reads = self.read_entries(e);
            match pivot::validate_compressed(&objects, &reads, e) {
                CompressedVerdict::MaybeAcyclic => {}
                CompressedVerdict::StFail => return self.fallback(Fallback::StFail),
                CompressedVerdict::MaybeCyclic => return self.fallback(Fallback::MaybeCyclic),
            }
            if shared.config.dependency_guard
                && (pre_reads >= floor || self.reads.iter().any(|r| r.writer_seq >= floor))
            {
                return self.fallback(Fallback::Guard);
            }
            let valid = self
                .reads
                .iter()
                .all(|r| r.rec.tid.load(Ordering::SeqCst) == r.tid);
            if !valid {
                return self.fallback(Fallback::Overwritten);
            }
            let fp = Footprint {
                reads,
                writes: objects
                    .iter()
                    .map(|(k, p)| WriteEntry {
                        key_hash: *k,
                        rank: p.omitted_rank(),
                        version: 0,
                        blind: true,
                    })
                    .collect(),
            };
            let mut swapped = true;
            for (w, (_, p)) in self.writes.iter().zip(&objects) {
                let rec = w.rec.as_ref().expect("eligible writes target records");
                if rec
                    .pivot
                    .compare_exchange(*p, pivot::merge_footprint(*p, &fp))
                    .is_err()
                {
                    swapped = false;
                    break;
                }
            }
            if !swapped {
                continue;
            }
            for (r, entry) in self.reads.iter().zip(&fp.reads) {
                r.rec.pivot.update(|p| {
                    if p.epoch == e {
                        p.merge_read(entry.key_hash, entry.rank)
                    } else {
                        p
                    }
                });
            }
            if let Some(rec) = &shared.recorder {
                let mut rec = rec.lock();
                for (_, (k, p)) in self.writes.iter().zip(&objects) {
                    rec.omit(self.id, *k, p.epoch, p.pv);
                }
                rec.committed(self.id, seq);
            }
            return Some(CommitOutcome::CommittedNwr { epoch: e });
        }
        self.fallback(Fallback::Contended)
    }

    fn commit_baseline(&mut self) -> CommitOutcome {
        let shared = Arc::clone(&self.worker.shared);
        let nwr = shared.config.protocol == Protocol::SiloNwr;
        self.writes.sort_unstable_by_key(|w| w.key);
        self.time(Phase::LockWait, |t| {
            for w in &t.writes {
                if let Some(rec) = &w.rec {
                    rec.lock();
                }
            }
        });
        let seq = shared.clock.next_seq();
        let e = epoch_of(seq);
        if nwr {
            for r in &self.reads {
                r.rec.last_reader.fetch_max(seq, Ordering::SeqCst);
            }
        }
        let valid = self.time(Phase::Validation, |t| {
            t.reads.iter().all(|r| {
                let cur = r.rec.tid.load(Ordering::SeqCst);
                cur == r.tid
                    || (cur == r.tid | LOCK
                        && t.writes.binary_search_by_key(&r.rec.key, |w| w.key).is_ok())
            })
        });
        if !valid {
            self.unlock_unchanged();
            self.finish_abort();
            return CommitOutcome::Aborted {
                reason: AbortReason::ReadSetInvalid,
            };
        }
        // Inserts go in locked so no reader sees them before the commit ends.
        let mut inserted: Vec<usize> = Vec::new();
        for i in 0..self.writes.len() {
            if self.writes[i].rec.is_some() {
                continue;
            }
            let w = &self.writes[i];
            let rec = Arc::new(Record::new(
                w.key,
                &w.value,
                shared.config.value_size,
                tid(e, 1) | LOCK,
            ));
            if !shared.index.insert(Arc::clone(&rec)) {
                for &j in &inserted {
                    shared.index.remove(self.writes[j].key);
                    self.writes[j].rec = None;
                }
                self.unlock_unchanged();
                self.finish_abort();
                return CommitOutcome::Aborted {
                    reason: AbortReason::DuplicateKey,
                };
            }
            self.writes[i].rec = Some(rec);
            inserted.push(i);
        }
        // New version numbers, then the footprint ranked in the commit epoch.
        let new_tids: Vec<u64> = self
            .writes
            .iter()
            .enumerate()
            .map(|(i, w)| {
                if inserted.contains(&i) {
                    return tid(e, 1);
                }
                let old = w
                    .rec
                    .as_ref()
                    .expect("record present")
                    .tid
                    .load(Ordering::SeqCst)
                    & !LOCK;
                if tid_epoch(old) == e {
                    tid(e, tid_vn(old) + 1)
                } else {
                    tid(e, 1)
                }
            })
            .collect();
        let fp = nwr.then(|| Footprint {
            reads: self.read_entries(e),
            writes: self
                .writes
                .iter()
                .zip(&new_tids)
                .map(|(w, t)| WriteEntry {
                    key_hash: w.key,
                    rank: pivot::rank(e, tid_vn(*t), e),
                    version: tid_vn(*t),
                    blind: w.blind,
                })
                .collect(),
        });
        let mut recorder = shared.recorder.as_ref().map(|r| r.lock());
        for (i, (w, &new)) in self.writes.iter().zip(&new_tids).enumerate() {
            let rec = w.rec.as_ref().expect("record present");
            rec.store_value(&w.value);
            rec.writer_seq.store(seq, Ordering::Relaxed);
            rec.writer_txn.store(self.id, Ordering::Relaxed);
            if let Some(fp) = &fp {
                let fresh = inserted.contains(&i);
                let p = rec.pivot.load();
                if fresh || (p.epoch != e && w.blind) {
                    let before = rec.last_reader.load(Ordering::SeqCst);
                    let pre = if fresh {
                        0
                    } else if before < seq {
                        before
                    } else {
                        seq - 1
                    };
                    rec.pre_pivot_reads.store(pre, Ordering::SeqCst);
                    rec.pivot_seq.store(seq, Ordering::SeqCst);
                    rec.pivot.update(|_| pivot::reset(fp, e, tid_vn(new)));
                } else if p.epoch == e {
                    rec.pivot.update(|p| {
                        if p.epoch == e {
                            pivot::merge_footprint(p, fp)
                        } else {
                            p
                        }
                    });
                }
            }
            if let Some(r) = recorder.as_mut() {
                r.install(self.id, w.key, e, tid_vn(new));
            }
        }
        if let Some(fp) = &fp {
            for (r, entry) in self.reads.iter().zip(&fp.reads) {
                r.rec.pivot.update(|p| {
                    if p.epoch == e {
                        p.merge_read(entry.key_hash, entry.rank)
                    } else {
                        p
                    }
                });
            }
        }
        if let Some(r) = recorder.as_mut() {
            r.committed(self.id, seq);
        }
        drop(recorder);
        for (w, &new) in self.writes.iter().zip(&new_tids) {
            w.rec.as_ref().expect("record present").unlock(new);
        }
        if !self.writes.is_empty() {
            let writes = std::mem::take(&mut self.writes);
            self.time(Phase::Logging, |t| {
                let mut log = t.shared().slots[t.worker.slot].log.lock();
                for (w, new) in writes.into_iter().zip(new_tids) {
                    log.push((
                        e,
                        LogRecord {
                            key: w.key,
                            tid: new,
                            value: w.value,
                        },
                    ));
                }
            });
        }
        CommitOutcome::CommittedBaseline { epoch: e }
    }

    /// Releases write locks without changing the records.
    fn unlock_unchanged(&self) {
        for w in &self.writes {
            if let Some(rec) = &w.rec {
                let cur = rec.tid.load(Ordering::SeqCst);
                if is_locked(cur) {
                    rec.unlock(cur & !LOCK);
                }
            }
        }
    }
}
