//! The 128-bit pivot version object.
//!
//! Every record carries one. It names the pivot version of the current epoch
//! and summarizes, in two 8-slot tables of 4-bit minima, what transactions
//! reachable from the pivot writer read and wrote. A transaction whose writes
//! are all blind may commit without executing them when the summaries show
//! no path back to it.
//!
//! Slot values are version ranks relative to the object's epoch: versions of
//! earlier epochs rank 1, a version numbered `vn` in the epoch ranks `vn + 1`.
//! Rank 0 stays free to mean "empty". An omitted write ranks like the pivot
//! itself, which makes a strict comparison against committed versions exact.

use portable_atomic::{AtomicU128, Ordering};
use serde::{Deserialize, Serialize};

pub const SLOTS: usize = 8;
pub const SATURATED: u32 = 15;

/// A hash-table slot in `[0, 8)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotIndex(u8);

impl SlotIndex {
    pub fn new(i: u8) -> Option<Self> {
        (usize::from(i) < SLOTS).then_some(SlotIndex(i))
    }

    pub fn get(self) -> usize {
        usize::from(self.0)
    }
}

/// Top three bits of a multiplicative hash of the key.
pub fn slot_of(key_hash: u64) -> SlotIndex {
    SlotIndex((key_hash.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 61) as u8)
}

pub fn saturate(v: u32) -> u32 {
    v.min(SATURATED)
}

/// Rank of a version stamped `(version_epoch, vn)` as seen from `epoch`.
pub fn rank(version_epoch: u32, vn: u32, epoch: u32) -> u32 {
    use std::cmp::Ordering::*;
    match version_epoch.cmp(&epoch) {
        Less => 1,
        Equal => saturate(vn.saturating_add(1)),
        Greater => SATURATED,
    }
}

/// Eight 4-bit slots packed into a `u32`; slot `k` is bits `[4k, 4k+4)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct MergedSet(pub u32);

impl MergedSet {
    pub fn slot(self, s: SlotIndex) -> u32 {
        (self.0 >> (4 * s.get())) & 0xF
    }

    /// Keeps the lowest nonzero value, saturating at 15.
    #[must_use]
    pub fn merge(self, s: SlotIndex, value: u32) -> MergedSet {
        debug_assert!(value >= 1);
        let v = saturate(value.max(1));
        let cur = self.slot(s);
        if cur != 0 && cur <= v {
            return self;
        }
        let shift = 4 * s.get();
        MergedSet((self.0 & !(0xF << shift)) | (v << shift))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn occupied(self) -> impl Iterator<Item = (SlotIndex, u32)> {
        (0..SLOTS as u8)
            .map(SlotIndex)
            .map(move |s| (s, self.slot(s)))
            .filter(|(_, v)| *v != 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct PivotVersionObject {
    pub epoch: u32,
    /// Version number of the pivot within `epoch`; 0 means none.
    pub pv: u32,
    pub mrs: MergedSet,
    pub mws: MergedSet,
}

impl PivotVersionObject {
    pub fn encode(self) -> u128 {
        u128::from(self.epoch)
            | u128::from(self.pv) << 32
            | u128::from(self.mrs.0) << 64
            | u128::from(self.mws.0) << 96
    }

    pub fn decode(w: u128) -> Self {
        PivotVersionObject {
            epoch: w as u32,
            pv: (w >> 32) as u32,
            mrs: MergedSet((w >> 64) as u32),
            mws: MergedSet((w >> 96) as u32),
        }
    }

    #[must_use]
    pub fn merge_read(self, key_hash: u64, value: u32) -> Self {
        PivotVersionObject {
            mrs: self.mrs.merge(slot_of(key_hash), value),
            ..self
        }
    }

    #[must_use]
    pub fn merge_write(self, key_hash: u64, value: u32) -> Self {
        PivotVersionObject {
            mws: self.mws.merge(slot_of(key_hash), value),
            ..self
        }
    }

    /// Rank an omitted write placed just before this pivot takes.
    pub fn omitted_rank(self) -> u32 {
        saturate(self.pv.saturating_add(1))
    }
}

/// A read: key hash and the rank of the version read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadEntry {
    pub key_hash: u64,
    pub rank: u32,
}

/// A write: key hash, the rank of the version written, the version number
/// assigned when materialized (0 when omitted) and whether it was blind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteEntry {
    pub key_hash: u64,
    pub rank: u32,
    pub version: u32,
    pub blind: bool,
}

/// What a committing transaction read and wrote, ranked in its epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Footprint {
    pub reads: Vec<ReadEntry>,
    pub writes: Vec<WriteEntry>,
}

impl Footprint {
    fn merged_reads(&self, base: MergedSet) -> MergedSet {
        self.reads
            .iter()
            .fold(base, |m, r| m.merge(slot_of(r.key_hash), r.rank))
    }

    fn merged_writes(&self, base: MergedSet) -> MergedSet {
        self.writes
            .iter()
            .fold(base, |m, w| m.merge(slot_of(w.key_hash), w.rank))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompressedVerdict {
    MaybeAcyclic,
    StFail,
    MaybeCyclic,
}

/// Compressed successor validation.
///
/// `writes` pairs each written key with its pivot object snapshot; `reads`
/// are the transaction's reads ranked in `epoch`. For every object: the
/// epoch must match; no summarized write may rank at or below a colliding
/// read; no summarized read may rank below a colliding omitted write.
/// Saturated ranks compare as unknown and fail.
pub fn validate_compressed(
    writes: &[(u64, PivotVersionObject)],
    reads: &[ReadEntry],
    epoch: u32,
) -> CompressedVerdict {
    for (_, p) in writes {
        if p.epoch != epoch {
            return CompressedVerdict::StFail;
        }
        for (slot, ym) in p.mws.occupied() {
            for z in reads.iter().filter(|z| slot_of(z.key_hash) == slot) {
                if ym <= z.rank || z.rank >= SATURATED {
                    return CompressedVerdict::MaybeCyclic;
                }
            }
        }
        for (slot, yg) in p.mrs.occupied() {
            for (_, zp) in writes.iter().filter(|(k, _)| slot_of(*k) == slot) {
                let zj = zp.omitted_rank();
                if yg < zj || zj >= SATURATED {
                    return CompressedVerdict::MaybeCyclic;
                }
            }
        }
    }
    CompressedVerdict::MaybeAcyclic
}

/// Pivot maintenance after a commit.
///
/// `objects` are snapshots for the keys the transaction touched, keyed by
/// key hash. Reads merge into the read key's `mRS` when its epoch is
/// `epoch_now`. A blind write materialized into a stale object resets it to
/// a new pivot; any other write into a current object merges the whole
/// footprint; writes into stale objects that are not blind leave them alone.
pub fn apply_commit_updates(
    objects: &mut [(u64, PivotVersionObject)],
    fp: &Footprint,
    epoch_now: u32,
) {
    for r in &fp.reads {
        for (k, p) in objects.iter_mut() {
            if *k == r.key_hash && p.epoch == epoch_now {
                *p = p.merge_read(r.key_hash, r.rank);
            }
        }
    }
    for w in &fp.writes {
        for (k, p) in objects.iter_mut() {
            if *k != w.key_hash {
                continue;
            }
            if p.epoch != epoch_now {
                if w.blind && w.version != 0 {
                    *p = reset(fp, epoch_now, w.version);
                }
            } else {
                *p = merge_footprint(*p, fp);
            }
        }
    }
}

/// Merges a whole footprint into a current object.
pub fn merge_footprint(p: PivotVersionObject, fp: &Footprint) -> PivotVersionObject {
    PivotVersionObject {
        mrs: fp.merged_reads(p.mrs),
        mws: fp.merged_writes(p.mws),
        ..p
    }
}

/// A fresh pivot object for a blind write that became the epoch's pivot.
pub fn reset(fp: &Footprint, epoch_now: u32, pv: u32) -> PivotVersionObject {
    PivotVersionObject {
        epoch: epoch_now,
        pv,
        mrs: fp.merged_reads(MergedSet::default()),
        mws: fp.merged_writes(MergedSet::default()),
    }
}

/// A pivot object published through 128-bit compare-and-swap.
#[derive(Debug, Default)]
pub struct AtomicPivot(AtomicU128);

impl AtomicPivot {
    pub fn new(p: PivotVersionObject) -> Self {
        AtomicPivot(AtomicU128::new(p.encode()))
    }

    pub fn load(&self) -> PivotVersionObject {
        PivotVersionObject::decode(self.0.load(Ordering::SeqCst))
    }

    pub fn store(&self, p: PivotVersionObject) {
        self.0.store(p.encode(), Ordering::SeqCst)
    }

    pub fn compare_exchange(
        &self,
        current: PivotVersionObject,
        new: PivotVersionObject,
    ) -> Result<(), PivotVersionObject> {
        self.0
            .compare_exchange(
                current.encode(),
                new.encode(),
                Ordering::SeqCst,
                Ordering::SeqCst,
            )
            .map(|_| ())
            .map_err(PivotVersionObject::decode)
    }

    /// Applies `f` until the swap succeeds, returning the published value.
    pub fn update(
        &self,
        mut f: impl FnMut(PivotVersionObject) -> PivotVersionObject,
    ) -> PivotVersionObject {
        let mut cur = self.load();
        loop {
            let next = f(cur);
            if next == cur {
                return cur;
            }
            match self.compare_exchange(cur, next) {
                Ok(()) => return next,
                Err(seen) => cur = seen,
            }
        }
    }

    pub fn is_lock_free() -> bool {
        AtomicU128::is_lock_free()
    }
}
