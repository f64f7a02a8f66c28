use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;

use crate::pivot::{AtomicPivot, PivotVersionObject};

pub const LOCK: u64 = 1;

/// `{epoch: 32 | version number: 31 | lock: 1}`
pub fn tid(epoch: u32, vn: u32) -> u64 {
    u64::from(epoch) << 32 | u64::from(vn & 0x7FFF_FFFF) << 1
}

pub fn tid_epoch(t: u64) -> u32 {
    (t >> 32) as u32
}

pub fn tid_vn(t: u64) -> u32 {
    ((t >> 1) & 0x7FFF_FFFF) as u32
}

pub fn is_locked(t: u64) -> bool {
    t & LOCK != 0
}

#[derive(Debug)]
pub struct Record {
    pub key: u64,
    pub tid: AtomicU64,
    pub words: Box<[AtomicU64]>,
    /// Commit sequence number of the current version's writer.
    pub writer_seq: AtomicU64,
    /// History id of the current version's writer, kept in verification mode.
    pub writer_txn: AtomicU32,
    pub pivot: AtomicPivot,
    /// Commit sequence number of the pivot writer.
    pub pivot_seq: AtomicU64,
    /// Highest sequence number of a reader that committed before the pivot
    /// was installed.
    pub pre_pivot_reads: AtomicU64,
    /// Highest sequence number of any committing reader.
    pub last_reader: AtomicU64,
}

/// A consistent copy of a record's current version.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub tid: u64,
    pub value: Vec<u8>,
    pub writer_seq: u64,
    pub writer_txn: u32,
}

impl Record {
    pub fn new(key: u64, value: &[u8], value_size: usize, tid_word: u64) -> Self {
        let words: Box<[AtomicU64]> = (0..value_size.div_ceil(8).max(1))
            .map(|_| AtomicU64::new(0))
            .collect();
        let r = Record {
            key,
            tid: AtomicU64::new(tid_word),
            words,
            writer_seq: AtomicU64::new(0),
            writer_txn: AtomicU32::new(0),
            pivot: AtomicPivot::new(PivotVersionObject::default()),
            pivot_seq: AtomicU64::new(0),
            pre_pivot_reads: AtomicU64::new(0),
            last_reader: AtomicU64::new(0),
        };
        r.store_value(value);
        r
    }

    pub fn store_value(&self, value: &[u8]) {
        for (i, w) in self.words.iter().enumerate() {
            let mut buf = [0u8; 8];
            let lo = (i * 8).min(value.len());
            let hi = (i * 8 + 8).min(value.len());
            buf[..hi - lo].copy_from_slice(&value[lo..hi]);
            w.store(u64::from_le_bytes(buf), Ordering::Relaxed);
        }
    }

    /// Optimistic read: retries until the version word is unlocked and
    /// unchanged across the copy.
    pub fn snapshot(&self, value_size: usize) -> Snapshot {
        let mut spins = 0u32;
        loop {
            let t1 = self.tid.load(Ordering::Acquire);
            if is_locked(t1) {
                backoff(&mut spins);
                continue;
            }
            let mut value = Vec::with_capacity(self.words.len() * 8);
            for w in self.words.iter() {
                value.extend_from_slice(&w.load(Ordering::Relaxed).to_le_bytes());
            }
            value.truncate(value_size);
            let writer_seq = self.writer_seq.load(Ordering::Relaxed);
            let writer_txn = self.writer_txn.load(Ordering::Relaxed);
            std::sync::atomic::fence(Ordering::Acquire);
            if self.tid.load(Ordering::Relaxed) == t1 {
                return Snapshot {
                    tid: t1,
                    value,
                    writer_seq,
                    writer_txn,
                };
            }
            backoff(&mut spins);
        }
    }

    pub fn lock(&self) {
        let mut spins = 0u32;
        loop {
            let cur = self.tid.load(Ordering::Relaxed);
            if !is_locked(cur)
                && self
                    .tid
                    .compare_exchange_weak(cur, cur | LOCK, Ordering::Acquire, Ordering::Relaxed)
                    .is_ok()
            {
                return;
            }
            backoff(&mut spins);
        }
    }

    /// Releases the lock, publishing `new_tid`.
    pub fn unlock(&self, new_tid: u64) {
        debug_assert!(!is_locked(new_tid));
        self.tid.store(new_tid, Ordering::Release);
    }
}

pub fn backoff(spins: &mut u32) {
    *spins += 1;
    if *spins < 64 {
        std::hint::spin_loop();
    } else {
        std::thread::yield_now();
    }
}

type Shard = RwLock<HashMap<u64, Arc<Record>>>;

/// Sharded hash index from key to record.
#[derive(Debug)]
pub struct Index {
    shards: Box<[Shard]>,
}

impl Index {
    pub fn new(shards: usize) -> Self {
        Index {
            shards: (0..shards.max(1))
                .map(|_| RwLock::new(HashMap::new()))
                .collect(),
        }
    }

    fn shard(&self, key: u64) -> &RwLock<HashMap<u64, Arc<Record>>> {
        let h = key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 32;
        &self.shards[(h as usize) % self.shards.len()]
    }

    pub fn get(&self, key: u64) -> Option<Arc<Record>> {
        self.shard(key).read().get(&key).cloned()
    }

    /// Inserts unless present; returns whether the record went in.
    pub fn insert(&self, rec: Arc<Record>) -> bool {
        let mut shard = self.shard(rec.key).write();
        if shard.contains_key(&rec.key) {
            return false;
        }
        shard.insert(rec.key, rec);
        true
    }

    pub fn remove(&self, key: u64) {
        self.shard(key).write().remove(&key);
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.read().len()).sum()
    }
}
