//! Epochs and commit sequence numbers.
//!
//! One 64-bit word holds the current epoch in its high half and a sequence
//! counter in its low half. A commit draws its sequence number with a single
//! `fetch_add`, so sequence order and epoch order never disagree.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug)]
pub struct EpochClock {
    word: AtomicU64,
    period_ms: u64,
}

pub fn epoch_of(seq: u64) -> u32 {
    (seq >> 32) as u32
}

impl EpochClock {
    pub fn new(period_ms: u64) -> Self {
        EpochClock {
            word: AtomicU64::new(1 << 32),
            period_ms,
        }
    }

    pub fn period_ms(&self) -> u64 {
        self.period_ms
    }

    pub fn current(&self) -> u32 {
        epoch_of(self.word.load(Ordering::SeqCst))
    }

    /// Draws the next commit sequence number. Its high half is the commit
    /// epoch.
    pub fn next_seq(&self) -> u64 {
        let s = self.word.fetch_add(1, Ordering::SeqCst);
        assert!(s as u32 != u32::MAX, "sequence space of an epoch exhausted");
        s
    }

    /// Moves to the next epoch and returns it.
    pub fn advance(&self) -> u32 {
        let prev = self
            .word
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |w| {
                Some(((w >> 32) + 1) << 32)
            })
            .expect("update closure never fails");
        epoch_of(prev) + 1
    }
}
