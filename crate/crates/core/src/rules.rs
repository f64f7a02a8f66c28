//! Reference semantics of the non-visible write rule.
//!
//! An [`NwrInstance`] is a schedule with one running transaction `t_j`, the
//! version order the schedule already satisfies, and a candidate order that
//! places `t_j`'s versions somewhere. The five rules decide whether `t_j` may
//! commit under the candidate order without executing its writes.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::history::{
    check_recoverable, ItemId, Schedule, TxnId, TxnStatus, VersionId, VersionOrder,
};
use crate::mvsg::{build_mvsg, is_acyclic, reachable_set, EdgeKind, Mvsg, MvsgError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("{0} is not a running transaction of the schedule")]
    NotRunning(TxnId),
    #[error("the schedule is not recoverable")]
    NotRecoverable,
    #[error("the base version order yields a cyclic graph")]
    CyclicBase,
    #[error(transparent)]
    Graph(#[from] MvsgError),
}

#[derive(Debug, Clone)]
pub struct NwrInstance {
    schedule: Schedule,
    committed: Schedule,
    base: VersionOrder,
    candidate: VersionOrder,
    txn: TxnId,
    graph: Mvsg,
}

impl NwrInstance {
    pub fn new(
        schedule: Schedule,
        base: VersionOrder,
        candidate: VersionOrder,
        txn: TxnId,
    ) -> Result<Self, RuleError> {
        if schedule.status(txn) != Some(TxnStatus::Running) || txn.is_initial() {
            return Err(RuleError::NotRunning(txn));
        }
        if !check_recoverable(&schedule) {
            return Err(RuleError::NotRecoverable);
        }
        if !is_acyclic(&build_mvsg(&schedule, &base)?) {
            return Err(RuleError::CyclicBase);
        }
        let committed = schedule
            .with_commit(txn)
            .expect("running transaction can commit");
        let graph = build_mvsg(&committed, &candidate)?;
        Ok(NwrInstance {
            schedule,
            committed,
            base,
            candidate,
            txn,
            graph,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// The schedule with `c_j` appended.
    pub fn committed_schedule(&self) -> &Schedule {
        &self.committed
    }

    pub fn base(&self) -> &VersionOrder {
        &self.base
    }

    pub fn candidate(&self) -> &VersionOrder {
        &self.candidate
    }

    pub fn txn(&self) -> TxnId {
        self.txn
    }

    /// `MVSG(CP(S ∪ {c_j}), ≪')`.
    pub fn candidate_graph(&self) -> &Mvsg {
        &self.graph
    }

    /// `RN(t_j)` in the candidate graph.
    pub fn reachable(&self) -> BTreeSet<TxnId> {
        reachable_set(&self.graph, self.txn).expect("t_j is a node once c_j is appended")
    }

    fn out_neighbors(&self, kind: EdgeKind) -> BTreeSet<TxnId> {
        self.graph
            .out_edges(self.txn)
            .filter(|e| e.kind == kind)
            .map(|e| e.to)
            .collect()
    }

    fn cmp_candidate(&self, item: &ItemId, a: TxnId, b: TxnId) -> bool {
        let order = self.candidate.with_initial(item);
        let pa = order.iter().position(|w| *w == a);
        let pb = order.iter().position(|w| *w == b);
        matches!((pa, pb), (Some(pa), Some(pb)) if pa < pb)
    }
}

/// Per-rule outcome with a reason for each failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleVerdict {
    pub nv: bool,
    pub pv: bool,
    pub sr: bool,
    pub st: bool,
    pub rc: bool,
    pub failures: Vec<String>,
}

impl RuleVerdict {
    pub fn all(&self) -> bool {
        self.nv && self.pv && self.sr && self.st && self.rc
    }
}

impl fmt::Display for RuleVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "pass" } else { "fail" };
        writeln!(f, "NV-Rule: {}", mark(self.nv))?;
        writeln!(f, "PV-Rule: {}", mark(self.pv))?;
        writeln!(f, "SR-Rule: {}", mark(self.sr))?;
        writeln!(f, "ST-Rule: {}", mark(self.st))?;
        writeln!(f, "RC-Rule: {}", mark(self.rc))?;
        for r in &self.failures {
            writeln!(f, "  {}", r)?;
        }
        Ok(())
    }
}

/// Every version `t_j` writes has a later version in the candidate order.
pub fn check_nv_rule(inst: &NwrInstance) -> bool {
    nv_failure(inst).is_none()
}

fn nv_failure(inst: &NwrInstance) -> Option<String> {
    for v in inst.schedule.write_set(inst.txn) {
        let order = inst.candidate.with_initial(&v.item);
        match order.iter().position(|w| *w == inst.txn) {
            Some(p) if p + 1 < order.len() => {}
            Some(_) => return Some(format!("{} is the latest version", v)),
            None => return Some(format!("{} is not placed by the candidate order", v)),
        }
    }
    None
}

/// The candidate order agrees with the base order on every pair of versions
/// not written by `t_j`.
pub fn check_pv_rule(inst: &NwrInstance) -> bool {
    pv_failure(inst).is_none()
}

fn pv_failure(inst: &NwrInstance) -> Option<String> {
    let mut items: BTreeSet<ItemId> = inst.base.items().map(|(k, _)| k.clone()).collect();
    items.extend(inst.candidate.items().map(|(k, _)| k.clone()));
    for item in items {
        let base: Vec<TxnId> = inst
            .base
            .with_initial(&item)
            .into_iter()
            .filter(|w| *w != inst.txn)
            .collect();
        let cand: Vec<TxnId> = inst
            .candidate
            .with_initial(&item)
            .into_iter()
            .filter(|w| *w != inst.txn)
            .collect();
        let projected: Vec<TxnId> = cand.iter().copied().filter(|w| base.contains(w)).collect();
        if projected != base {
            return Some(format!(
                "order of {} changes for versions not written by {}",
                item, inst.txn
            ));
        }
    }
    None
}

/// `t_j ∉ RN(t_j)` in the candidate graph.
pub fn check_sr_rule(inst: &NwrInstance) -> bool {
    !inst.reachable().contains(&inst.txn)
}

/// Every transaction reachable from `t_j` commits after `t_j`'s first op.
pub fn check_st_rule(inst: &NwrInstance) -> bool {
    st_failure(inst).is_none()
}

fn st_failure(inst: &NwrInstance) -> Option<String> {
    let pj = inst
        .committed
        .first_position(inst.txn)
        .expect("t_j has operations");
    for tk in inst.reachable() {
        let ck = inst
            .committed
            .commit_position(tk)
            .expect("graph nodes are committed");
        if ck <= pj {
            return Some(format!("{} committed before {} began", tk, inst.txn));
        }
    }
    None
}

/// Every version `t_j` read was written by a committed transaction.
pub fn check_rc_rule(inst: &NwrInstance) -> bool {
    rc_failure(inst).is_none()
}

fn rc_failure(inst: &NwrInstance) -> Option<String> {
    inst.schedule
        .read_set(inst.txn)
        .into_iter()
        .find(|v| !inst.schedule.is_committed(v.writer))
        .map(|v| format!("{} reads uncommitted {}", inst.txn, v))
}

pub fn check_rules(inst: &NwrInstance) -> RuleVerdict {
    let nv = nv_failure(inst);
    let pv = pv_failure(inst);
    let sr = check_sr_rule(inst);
    let st = st_failure(inst);
    let rc = rc_failure(inst);
    let mut failures = Vec::new();
    failures.extend(nv.clone());
    failures.extend(pv.clone());
    if !sr {
        failures.push(format!("{} reaches itself", inst.txn));
    }
    failures.extend(st.clone());
    failures.extend(rc.clone());
    RuleVerdict {
        nv: nv.is_none(),
        pv: pv.is_none(),
        sr,
        st: st.is_none(),
        rc: rc.is_none(),
        failures,
    }
}

/// rw out-neighbors of `t_j` in the candidate graph.
pub fn overwriters(inst: &NwrInstance) -> BTreeSet<TxnId> {
    inst.out_neighbors(EdgeKind::Rw)
}

/// ww out-neighbors of `t_j` in the candidate graph.
pub fn successors(inst: &NwrInstance) -> BTreeSet<TxnId> {
    inst.out_neighbors(EdgeKind::Ww)
}

/// Every out-edge of `t_j` is rw or ww.
pub fn theorem2_holds(inst: &NwrInstance) -> bool {
    inst.graph
        .out_edges(inst.txn)
        .all(|e| e.kind != EdgeKind::Wr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceVerdict {
    Acyclic,
    Cyclic,
    StViolation,
}

/// Exact validation of `t_j`'s successors.
///
/// Collects `T`, the successors and everything reachable from them, then for
/// each member `t_m` in ascending id order: (B) `t_m` committed before `t_j`
/// began; (C) `t_m` wrote a version of an item `t_j` read that is not older
/// than the read version; (D) `t_m` read a version older than one `t_j`
/// writes.
pub fn validate_successors_reference(inst: &NwrInstance) -> ReferenceVerdict {
    let mut t: BTreeSet<TxnId> = BTreeSet::new();
    for tk in successors(inst) {
        t.insert(tk);
        t.extend(reachable_set(&inst.graph, tk).expect("successor is a node"));
    }
    let s = &inst.committed;
    let pj = s.first_position(inst.txn).expect("t_j has operations");
    let rs_j = s.read_set(inst.txn);
    let ws_j = s.write_set(inst.txn);
    for &tm in &t {
        if tm != inst.txn && s.commit_position(tm).is_some_and(|c| c < pj) {
            return ReferenceVerdict::StViolation;
        }
        for y in s.write_set(tm) {
            if rs_j.iter().any(|r| {
                r.item == y.item && (r.writer == tm || inst.cmp_candidate(&y.item, tm, r.writer))
            }) {
                return ReferenceVerdict::Cyclic;
            }
        }
        for VersionId { item, writer: g } in s.read_set(tm) {
            if ws_j
                .iter()
                .any(|w| w.item == item && inst.cmp_candidate(&item, g, inst.txn))
            {
                return ReferenceVerdict::Cyclic;
            }
        }
    }
    ReferenceVerdict::Acyclic
}
