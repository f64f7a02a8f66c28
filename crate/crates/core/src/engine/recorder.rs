//! Verification-mode history recording.
//!
//! Reads are logged when they return, materialized writes when they are
//! installed, omitted writes when their transaction commits, and commits when
//! their epoch is acknowledged, ordered by commit sequence number.

use std::collections::HashMap;

use crate::history::{ItemId, Op, Schedule, SerialOrder, TxnId, VersionOrder};

use super::EngineError;

#[derive(Debug)]
pub struct Recorder {
    max_ops: usize,
    ops: Vec<Op>,
    overflow: bool,
    order: VersionOrder,
    /// `(key, epoch, version number)` of a materialized version to its writer.
    installed: HashMap<(u64, u32, u32), u32>,
    pending: Vec<(u32, u64, u32)>,
    serial: Vec<TxnId>,
}

/// A recorded schedule with the engine's version order and commit order.
#[derive(Debug, Clone)]
pub struct RecordedHistory {
    pub schedule: Schedule,
    pub version_order: VersionOrder,
    pub serial_order: SerialOrder,
}

impl Recorder {
    pub fn new(max_ops: usize) -> Self {
        Recorder {
            max_ops,
            ops: Vec::new(),
            overflow: false,
            order: VersionOrder::new(),
            installed: HashMap::new(),
            pending: Vec::new(),
            serial: Vec::new(),
        }
    }

    fn push(&mut self, op: Op) {
        if self.ops.len() >= self.max_ops {
            self.overflow = true;
        } else {
            self.ops.push(op);
        }
    }

    pub fn read(&mut self, txn: u32, key: u64, writer: u32) {
        self.push(Op::Read {
            txn: TxnId(txn),
            item: ItemId::from(key),
            writer: TxnId(writer),
        });
    }

    pub fn install(&mut self, txn: u32, key: u64, epoch: u32, vn: u32) {
        self.push(Op::Write {
            txn: TxnId(txn),
            item: ItemId::from(key),
        });
        self.order.push(ItemId::from(key), TxnId(txn));
        self.installed.insert((key, epoch, vn), txn);
    }

    /// An omitted write, ordered just before the pivot `(epoch, pv)`.
    pub fn omit(&mut self, txn: u32, key: u64, epoch: u32, pv: u32) {
        self.push(Op::Write {
            txn: TxnId(txn),
            item: ItemId::from(key),
        });
        let item = ItemId::from(key);
        match self.installed.get(&(key, epoch, pv)) {
            Some(&pivot) => self.order.insert_before(item, TxnId(txn), TxnId(pivot)),
            None => self.overflow = true,
        }
    }

    pub fn abort(&mut self, txn: u32) {
        self.push(Op::Abort { txn: TxnId(txn) });
    }

    pub fn committed(&mut self, txn: u32, seq: u64) {
        self.pending.push(((seq >> 32) as u32, seq, txn));
    }

    /// Emits commits of every epoch up to `stable`.
    pub fn acknowledge(&mut self, stable: u32) {
        let mut ready: Vec<(u32, u64, u32)> = Vec::new();
        self.pending.retain(|p| {
            if p.0 <= stable {
                ready.push(*p);
                false
            } else {
                true
            }
        });
        ready.sort_unstable_by_key(|p| p.1);
        for (_, _, txn) in ready {
            self.push(Op::Commit { txn: TxnId(txn) });
            self.serial.push(TxnId(txn));
        }
    }

    pub fn history(&self) -> Result<RecordedHistory, EngineError> {
        if self.overflow {
            return Err(EngineError::RecorderOverflow(self.max_ops));
        }
        let schedule =
            Schedule::new(self.ops.clone()).map_err(|e| EngineError::Recording(e.to_string()))?;
        let mut serial = vec![TxnId::INITIAL];
        serial.extend(self.serial.iter().copied());
        Ok(RecordedHistory {
            schedule,
            version_order: self.order.clone(),
            serial_order: SerialOrder(serial),
        })
    }
}
