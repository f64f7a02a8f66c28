//! Multiversion schedules, version orders and the predicates evaluated over
//! them: committed projection, recoverability and strict serializability.
//!
//! A [`Schedule`] stores only the operations that were written down. The
//! initializing transaction `t0` is implicit unless it appears explicitly: it
//! writes the initial version of every item and commits before anything else.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transaction identifier. `0` is reserved for the initializing transaction.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct TxnId(pub u32);

impl TxnId {
    pub const INITIAL: TxnId = TxnId(0);

    pub fn is_initial(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Data item identifier.
///
/// Names that parse as a `u64` hash to that value, so an engine dump keeps
/// the slot assignment the engine used for the key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(name: impl Into<String>) -> Self {
        ItemId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn key_hash(&self) -> u64 {
        if let Ok(k) = self.0.parse::<u64>() {
            return k;
        }
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.0.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_owned())
    }
}

impl From<u64> for ItemId {
    fn from(k: u64) -> Self {
        ItemId(k.to_string())
    }
}

/// A version `x_i`: the value of item `x` written by transaction `t_i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionId {
    pub item: ItemId,
    pub writer: TxnId,
}

impl VersionId {
    pub fn new(item: impl Into<ItemId>, writer: TxnId) -> Self {
        VersionId {
            item: item.into(),
            writer,
        }
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.item, self.writer.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    /// `r_txn(item_writer)`
    Read {
        txn: TxnId,
        item: ItemId,
        writer: TxnId,
    },
    /// `w_txn(item_txn)`
    Write {
        txn: TxnId,
        item: ItemId,
    },
    Commit {
        txn: TxnId,
    },
    Abort {
        txn: TxnId,
    },
}

impl Op {
    pub fn read(txn: u32, item: impl Into<ItemId>, writer: u32) -> Op {
        Op::Read {
            txn: TxnId(txn),
            item: item.into(),
            writer: TxnId(writer),
        }
    }

    pub fn write(txn: u32, item: impl Into<ItemId>) -> Op {
        Op::Write {
            txn: TxnId(txn),
            item: item.into(),
        }
    }

    pub fn commit(txn: u32) -> Op {
        Op::Commit { txn: TxnId(txn) }
    }

    pub fn abort(txn: u32) -> Op {
        Op::Abort { txn: TxnId(txn) }
    }

    pub fn txn(&self) -> TxnId {
        match self {
            Op::Read { txn, .. }
            | Op::Write { txn, .. }
            | Op::Commit { txn }
            | Op::Abort { txn } => *txn,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Op::Commit { .. } | Op::Abort { .. })
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Read { txn, item, writer } => write!(f, "r {} {} {}", txn.0, item, writer.0),
            Op::Write { txn, item } => write!(f, "w {} {}", txn.0, item),
            Op::Commit { txn } => write!(f, "c {}", txn.0),
            Op::Abort { txn } => write!(f, "a {}", txn.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error("version order: {0}")]
    VersionOrder(String),
}

/// Outcome of a transaction within a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnStatus {
    Running,
    Committed,
    Aborted,
}

#[derive(Debug, Clone, Default)]
struct TxnInfo {
    first: usize,
    last: usize,
    terminal: Option<(usize, bool)>,
    reads: Vec<(ItemId, TxnId)>,
    writes: Vec<ItemId>,
}

/// Position of an operation in `<_S`. The implicit initial transaction sits
/// at `-1`, before every explicit operation.
pub type Position = i64;

/// An ordered multiversion operation log.
#[derive(Debug, Clone, Default)]
pub struct Schedule {
    ops: Vec<Op>,
    txns: BTreeMap<TxnId, TxnInfo>,
}

impl PartialEq for Schedule {
    fn eq(&self, other: &Self) -> bool {
        self.ops == other.ops
    }
}

impl Eq for Schedule {}

impl Schedule {
    pub fn new(ops: Vec<Op>) -> Result<Self, HistoryError> {
        let mut s = Schedule::default();
        for (i, op) in ops.into_iter().enumerate() {
            s.push(op).map_err(|e| match e {
                HistoryError::Semantic { message, .. } => HistoryError::Semantic {
                    line: i + 1,
                    message,
                },
                other => other,
            })?;
        }
        Ok(s)
    }

    /// Appends one operation, checking it against the operations so far.
    pub fn push(&mut self, op: Op) -> Result<(), HistoryError> {
        let pos = self.ops.len();
        let line = pos + 1;
        let sem = |message: String| HistoryError::Semantic { line, message };
        let txn = op.txn();
        if let Some(info) = self.txns.get(&txn) {
            if info.terminal.is_some() {
                return Err(sem(format!("{} has an operation after its terminal", txn)));
            }
        }
        match &op {
            Op::Read { item, writer, .. } => {
                if txn.is_initial() {
                    return Err(sem("t0 cannot read".into()));
                }
                if !writer.is_initial() {
                    let written = self
                        .txns
                        .get(writer)
                        .is_some_and(|w| w.writes.iter().any(|x| x == item));
                    if !written {
                        return Err(sem(format!(
                            "read of nonexistent version {}",
                            VersionId::new(item.clone(), *writer)
                        )));
                    }
                }
            }
            Op::Write { item, .. } => {
                if self
                    .txns
                    .get(&txn)
                    .is_some_and(|t| t.writes.iter().any(|x| x == item))
                {
                    return Err(sem(format!("{} writes {} twice", txn, item)));
                }
            }
            Op::Abort { .. } if txn.is_initial() => {
                return Err(sem("t0 cannot abort".into()));
            }
            _ => {}
        }
        self.append(op);
        Ok(())
    }

    fn append(&mut self, op: Op) {
        let pos = self.ops.len();
        let txn = op.txn();
        let info = self.txns.entry(txn).or_insert_with(|| TxnInfo {
            first: pos,
            ..Default::default()
        });
        info.last = pos;
        match &op {
            Op::Read { item, writer, .. } => info.reads.push((item.clone(), *writer)),
            Op::Write { item, .. } => info.writes.push(item.clone()),
            Op::Commit { .. } => info.terminal = Some((pos, true)),
            Op::Abort { .. } => info.terminal = Some((pos, false)),
        }
        self.ops.push(op);
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `trans(S)`: transactions with at least one explicit operation.
    pub fn transactions(&self) -> impl Iterator<Item = TxnId> + '_ {
        self.txns.keys().copied()
    }

    pub fn contains(&self, txn: TxnId) -> bool {
        self.txns.contains_key(&txn)
    }

    pub fn status(&self, txn: TxnId) -> Option<TxnStatus> {
        if txn.is_initial() {
            return Some(TxnStatus::Committed);
        }
        self.txns.get(&txn).map(|i| match i.terminal {
            None => TxnStatus::Running,
            Some((_, true)) => TxnStatus::Committed,
            Some((_, false)) => TxnStatus::Aborted,
        })
    }

    pub fn is_committed(&self, txn: TxnId) -> bool {
        self.status(txn) == Some(TxnStatus::Committed)
    }

    /// Committed transactions, always including `t0`.
    pub fn committed(&self) -> BTreeSet<TxnId> {
        let mut out: BTreeSet<TxnId> = self
            .txns
            .iter()
            .filter(|(_, i)| matches!(i.terminal, Some((_, true))))
            .map(|(t, _)| *t)
            .collect();
        out.insert(TxnId::INITIAL);
        out
    }

    pub fn first_position(&self, txn: TxnId) -> Option<Position> {
        match self.txns.get(&txn) {
            Some(i) => Some(i.first as Position),
            None if txn.is_initial() => Some(-1),
            None => None,
        }
    }

    pub fn last_position(&self, txn: TxnId) -> Option<Position> {
        match self.txns.get(&txn) {
            Some(i) => Some(i.last as Position),
            None if txn.is_initial() => Some(-1),
            None => None,
        }
    }

    /// Position of `c_txn`. An explicit `t0` without a commit op is treated
    /// as committed at `-1`.
    pub fn commit_position(&self, txn: TxnId) -> Option<Position> {
        match self.txns.get(&txn) {
            Some(TxnInfo {
                terminal: Some((p, true)),
                ..
            }) => Some(*p as Position),
            _ if txn.is_initial() => Some(-1),
            _ => None,
        }
    }

    /// Versions read by `txn` from other transactions, in operation order.
    pub fn read_set(&self, txn: TxnId) -> Vec<VersionId> {
        self.txns
            .get(&txn)
            .map(|i| {
                i.reads
                    .iter()
                    .filter(|(_, w)| *w != txn)
                    .map(|(x, w)| VersionId::new(x.clone(), *w))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Versions written by `txn`. For `t0` this is every touched item.
    pub fn write_set(&self, txn: TxnId) -> Vec<VersionId> {
        if txn.is_initial() {
            return self
                .items()
                .into_iter()
                .map(|x| VersionId::new(x, txn))
                .collect();
        }
        self.txns
            .get(&txn)
            .map(|i| {
                i.writes
                    .iter()
                    .map(|x| VersionId::new(x.clone(), txn))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Every item touched by some operation.
    pub fn items(&self) -> BTreeSet<ItemId> {
        let mut out = BTreeSet::new();
        for info in self.txns.values() {
            out.extend(info.writes.iter().cloned());
            out.extend(info.reads.iter().map(|(x, _)| x.clone()));
        }
        out
    }

    /// Returns a copy with `c_txn` appended.
    pub fn with_commit(&self, txn: TxnId) -> Result<Schedule, HistoryError> {
        let mut s = self.clone();
        s.push(Op::Commit { txn })?;
        Ok(s)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_history(self))
    }
}

/// `CP(S)`: the operations of committed transactions in their original order.
/// Keeps the operations of committed transactions. Reads of versions whose
/// writers did not commit stay in place.
pub fn committed_projection(s: &Schedule) -> Schedule {
    let mut out = Schedule::default();
    for op in s.ops.iter().filter(|op| s.is_committed(op.txn())) {
        out.append(op.clone());
    }
    out
}

/// True iff every `r_j(x_i)` with `i != j` in a committed `t_j` has `c_i`
/// before `c_j`.
pub fn check_recoverable(s: &Schedule) -> bool {
    for (txn, info) in &s.txns {
        let Some((cj, true)) = info.terminal else {
            continue;
        };
        for (_, writer) in &info.reads {
            if writer == txn {
                continue;
            }
            match s.commit_position(*writer) {
                Some(ci) if ci < cj as Position => {}
                _ => return false,
            }
        }
    }
    true
}

/// True iff whenever committed `t_i` ends before committed `t_k` begins,
/// `t_i` precedes `t_k` in `m`. Fails if `m` omits a committed transaction.
pub fn check_strictly_serializable(s: &Schedule, m: &SerialOrder) -> bool {
    let rank: HashMap<TxnId, usize> = m.0.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut spans = Vec::new();
    for (txn, info) in &s.txns {
        if !matches!(info.terminal, Some((_, true))) {
            continue;
        }
        let Some(&r) = rank.get(txn) else {
            return false;
        };
        spans.push((info.first, info.last, r));
    }
    // For each t_k, every t_i with last(t_i) < first(t_k) needs a smaller rank.
    let mut by_last: Vec<(usize, usize)> = spans.iter().map(|&(_, l, r)| (l, r)).collect();
    by_last.sort_unstable();
    let mut prefix_max = Vec::with_capacity(by_last.len());
    let mut best: Option<usize> = None;
    for &(_, r) in &by_last {
        best = Some(best.map_or(r, |b| b.max(r)));
        prefix_max.push(best.unwrap());
    }
    spans.iter().all(|&(first, _, r)| {
        let n = by_last.partition_point(|&(l, _)| l < first);
        n == 0 || prefix_max[n - 1] < r
    })
}

/// Per-item total order over versions, ascending in `<_v`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VersionOrder {
    items: BTreeMap<ItemId, Vec<TxnId>>,
}

impl VersionOrder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the order of `item`'s versions by writer, ascending.
    pub fn set(
        &mut self,
        item: impl Into<ItemId>,
        writers: Vec<TxnId>,
    ) -> Result<(), HistoryError> {
        let item = item.into();
        let mut seen = HashSet::new();
        for w in &writers {
            if !seen.insert(*w) {
                return Err(HistoryError::VersionOrder(format!(
                    "{} lists writer {} twice",
                    item, w.0
                )));
            }
        }
        self.items.insert(item, writers);
        Ok(())
    }

    pub fn with(mut self, item: &str, writers: &[u32]) -> Self {
        self.set(item, writers.iter().map(|w| TxnId(*w)).collect())
            .expect("distinct writers");
        self
    }

    pub fn get(&self, item: &ItemId) -> Option<&[TxnId]> {
        self.items.get(item).map(Vec::as_slice)
    }

    pub fn items(&self) -> impl Iterator<Item = (&ItemId, &[TxnId])> {
        self.items.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn position(&self, item: &ItemId, writer: TxnId) -> Option<usize> {
        self.items.get(item)?.iter().position(|w| *w == writer)
    }

    /// `item_a <_v item_b`, if both versions are ordered.
    pub fn precedes(&self, item: &ItemId, a: TxnId, b: TxnId) -> Option<bool> {
        Some(self.position(item, a)? < self.position(item, b)?)
    }

    pub fn push(&mut self, item: impl Into<ItemId>, writer: TxnId) {
        let v = self.items.entry(item.into()).or_default();
        v.retain(|w| *w != writer);
        v.push(writer);
    }

    /// Places `writer`'s version immediately before `anchor`'s, or last when
    /// the anchor is absent.
    pub fn insert_before(&mut self, item: impl Into<ItemId>, writer: TxnId, anchor: TxnId) {
        let v = self.items.entry(item.into()).or_default();
        v.retain(|w| *w != writer);
        match v.iter().position(|w| *w == anchor) {
            Some(p) => v.insert(p, writer),
            None => v.push(writer),
        }
    }

    /// The order with every version of `txn` removed.
    pub fn without_txn(&self, txn: TxnId) -> VersionOrder {
        let items = self
            .items
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().copied().filter(|w| *w != txn).collect()))
            .collect();
        VersionOrder { items }
    }

    /// The order for `item` with the initial version placed first when the
    /// file left it out.
    pub fn with_initial(&self, item: &ItemId) -> Vec<TxnId> {
        let mut v = self.items.get(item).cloned().unwrap_or_default();
        if !v.contains(&TxnId::INITIAL) {
            v.insert(0, TxnId::INITIAL);
        }
        v
    }
}

/// A total order over committed transactions (`M`).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SerialOrder(pub Vec<TxnId>);

impl SerialOrder {
    pub fn from_ids(ids: &[u32]) -> Self {
        SerialOrder(ids.iter().map(|i| TxnId(*i)).collect())
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_txn(tok: &str, line: usize) -> Result<TxnId, HistoryError> {
    u32::from_str(tok)
        .map(TxnId)
        .map_err(|_| HistoryError::Syntax {
            line,
            message: format!("expected a transaction id, found `{}`", tok),
        })
}

/// Parses the line-oriented history format.
pub fn parse_history(text: &str) -> Result<Schedule, HistoryError> {
    let mut s = Schedule::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let syntax = |message: &str| HistoryError::Syntax {
            line,
            message: message.to_owned(),
        };
        let op = match toks.as_slice() {
            ["r", t, x, w] => Op::Read {
                txn: parse_txn(t, line)?,
                item: ItemId::from(*x),
                writer: parse_txn(w, line)?,
            },
            ["w", t, x] => Op::Write {
                txn: parse_txn(t, line)?,
                item: ItemId::from(*x),
            },
            ["c", t] => Op::Commit {
                txn: parse_txn(t, line)?,
            },
            ["a", t] => Op::Abort {
                txn: parse_txn(t, line)?,
            },
            ["r", ..] => return Err(syntax("expected `r <txn> <item> <writer>`")),
            ["w", ..] => return Err(syntax("expected `w <txn> <item>`")),
            ["c", ..] | ["a", ..] => return Err(syntax("expected a single transaction id")),
            [other, ..] => return Err(syntax(&format!("unknown operation `{}`", other))),
            [] => unreachable!(),
        };
        s.push(op).map_err(|e| match e {
            HistoryError::Semantic { message, .. } => HistoryError::Semantic { line, message },
            other => other,
        })?;
    }
    Ok(s)
}

pub fn serialize_history(s: &Schedule) -> String {
    let mut out = String::new();
    for op in &s.ops {
        out.push_str(&op.to_string());
        out.push('\n');
    }
    out
}

/// Parses `vo <item> <writer>...` lines.
pub fn parse_version_order(text: &str) -> Result<VersionOrder, HistoryError> {
    let mut vo = VersionOrder::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            ["vo", item, writers @ ..] => {
                let ws = writers
                    .iter()
                    .map(|w| parse_txn(w, line))
                    .collect::<Result<Vec<_>, _>>()?;
                let item = ItemId::from(*item);
                if vo.items.contains_key(&item) {
                    return Err(HistoryError::Semantic {
                        line,
                        message: format!("{} ordered twice", item),
                    });
                }
                vo.set(item, ws).map_err(|e| HistoryError::Semantic {
                    line,
                    message: e.to_string(),
                })?;
            }
            _ => {
                return Err(HistoryError::Syntax {
                    line,
                    message: "expected `vo <item> <writer>...`".into(),
                })
            }
        }
    }
    Ok(vo)
}

pub fn serialize_version_order(vo: &VersionOrder) -> String {
    let mut out = String::new();
    for (item, ws) in &vo.items {
        out.push_str("vo ");
        out.push_str(item.as_str());
        for w in ws {
            out.push(' ');
            out.push_str(&w.0.to_string());
        }
        out.push('\n');
    }
    out
}

/// Parses `serial <txn>...` lines; multiple lines concatenate.
pub fn parse_serial_order(text: &str) -> Result<SerialOrder, HistoryError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            ["serial", ids @ ..] => {
                for t in ids {
                    out.push(parse_txn(t, line)?);
                }
            }
            _ => {
                return Err(HistoryError::Syntax {
                    line,
                    message: "expected `serial <txn>...`".into(),
                })
            }
        }
    }
    Ok(SerialOrder(out))
}

pub fn serialize_serial_order(m: &SerialOrder) -> String {
    let mut out = String::from("serial");
    for t in &m.0 {
        out.push(' ');
        out.push_str(&t.0.to_string());
    }
    out.push('\n');
    out
}
