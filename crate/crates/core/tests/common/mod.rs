#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use nwr::history::{
    check_recoverable, check_strictly_serializable, parse_history, parse_version_order, ItemId, Op,
    Schedule, TxnId, VersionOrder,
};
use nwr::mvsg::{build_mvsg, is_acyclic, reachable_set, serial_order};
use nwr::pivot::{rank, PivotVersionObject, ReadEntry};
use nwr::rules::{overwriters, NwrInstance};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn testdata(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("testdata")
        .join(name)
}

pub fn golden_history(name: &str) -> Schedule {
    parse_history(&std::fs::read_to_string(testdata(&format!("golden/{name}.history"))).unwrap())
        .unwrap()
}

pub fn golden_vo(name: &str) -> VersionOrder {
    parse_version_order(&std::fs::read_to_string(testdata(&format!("golden/{name}.vo"))).unwrap())
        .unwrap()
}

const ITEMS: [&str; 4] = ["x", "y", "z", "w"];

/// A random schedule with one running transaction, the highest id.
///
/// Up to five transactions over up to four items, at most three explicit
/// versions per item. Committed transactions read committed versions only;
/// the running one may also read a version whose writer is still active.
pub fn random_schedule(rng: &mut impl Rng, blind_j: bool) -> (Schedule, TxnId) {
    let n = rng.gen_range(2..=5u32);
    let items = &ITEMS[..rng.gen_range(1..=4)];
    let j = n;
    let mut writers: BTreeMap<&str, u32> = BTreeMap::new();
    let mut plans: Vec<Vec<(bool, &str)>> = Vec::new();
    for t in 1..=n {
        let mut plan = Vec::new();
        let mut written = BTreeSet::new();
        let mut read = BTreeSet::new();
        for _ in 0..rng.gen_range(1..=3) {
            let item = *items.choose(rng).unwrap();
            let write = rng.gen_bool(0.5);
            if write {
                if written.contains(item) || *writers.get(item).unwrap_or(&0) >= 3 {
                    continue;
                }
                if t == j && blind_j && read.contains(item) {
                    continue;
                }
                written.insert(item);
                *writers.entry(item).or_default() += 1;
            } else {
                if written.contains(item) {
                    continue;
                }
                read.insert(item);
            }
            plan.push((write, item));
        }
        if t == j && written.is_empty() {
            let free: Vec<&str> = items
                .iter()
                .copied()
                .filter(|x| *writers.get(x).unwrap_or(&0) < 3 && !read.contains(x))
                .collect();
            if let Some(x) = free.choose(rng) {
                *writers.entry(x).or_default() += 1;
                plan.push((true, x));
            }
        }
        plans.push(plan);
    }
    let abort: Vec<bool> = (1..=n).map(|t| t != j && rng.gen_bool(0.15)).collect();
    let mut next = vec![0usize; n as usize];
    let mut done = vec![false; n as usize];
    let mut committed: BTreeSet<u32> = BTreeSet::new();
    let mut wrote: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    let mut s = Schedule::default();
    loop {
        let live: Vec<usize> = (0..n as usize).filter(|i| !done[*i]).collect();
        let Some(&i) = live.choose(rng) else { break };
        let t = i as u32 + 1;
        if next[i] == plans[i].len() {
            done[i] = true;
            if t != j {
                let op = if abort[i] {
                    Op::abort(t)
                } else {
                    Op::commit(t)
                };
                s.push(op).unwrap();
                if !abort[i] {
                    committed.insert(t);
                }
            }
            continue;
        }
        let (write, item) = plans[i][next[i]];
        next[i] += 1;
        if write {
            s.push(Op::write(t, item)).unwrap();
            wrote.entry(item).or_default().push(t);
        } else {
            let mut choices = vec![0u32];
            for &w in wrote.get(item).into_iter().flatten() {
                if w != t && (committed.contains(&w) || (t == j && rng.gen_bool(0.3))) {
                    choices.push(w);
                }
            }
            s.push(Op::read(t, item, *choices.choose(rng).unwrap()))
                .unwrap();
        }
    }
    (s, TxnId(j))
}

/// A random base order over the committed versions of `s`.
pub fn random_base(rng: &mut impl Rng, s: &Schedule, j: TxnId) -> VersionOrder {
    let mut vo = VersionOrder::new();
    for item in s.items() {
        let mut ws: Vec<TxnId> = s
            .committed()
            .into_iter()
            .filter(|t| {
                *t != j && !t.is_initial() && s.write_set(*t).iter().any(|v| v.item == item)
            })
            .collect();
        ws.shuffle(rng);
        let mut full = vec![TxnId::INITIAL];
        full.extend(ws);
        vo.set(item, full).unwrap();
    }
    vo
}

fn written_items(s: &Schedule, t: TxnId) -> Vec<ItemId> {
    s.write_set(t).into_iter().map(|v| v.item).collect()
}

/// True when the schedule's committed part is serializable under `vo` and
/// strictly so under a commit-order-first sort.
pub fn strict_under(s: &Schedule, vo: &VersionOrder) -> bool {
    let Ok(g) = build_mvsg(s, vo) else {
        return false;
    };
    is_acyclic(&g) && serial_order(s, &g, None).is_some_and(|m| check_strictly_serializable(s, &m))
}

/// The hypothesis on the schedule: committing `t_j` normally, with its
/// versions last, would be strictly serializable.
pub fn baseline_commit_is_strict(s: &Schedule, base: &VersionOrder, j: TxnId) -> bool {
    let Ok(cs) = s.with_commit(j) else {
        return false;
    };
    let mut vo = base.clone();
    for item in written_items(s, j) {
        let mut order = base.with_initial(&item);
        order.push(j);
        vo.set(item, order).unwrap();
    }
    strict_under(&cs, &vo)
}

/// A random instance for the rules: `t_j`'s versions inserted anywhere
/// after `x0`, occasionally with the rest of the order disturbed. The
/// schedule is recoverable and strictly serializable under the base order;
/// `baseline` also demands [`baseline_commit_is_strict`].
pub fn random_instance(rng: &mut impl Rng, baseline: bool) -> Option<NwrInstance> {
    let (s, j) = random_schedule(rng, false);
    let base = random_base(rng, &s, j);
    if !check_recoverable(&s)
        || !strict_under(&s, &base)
        || (baseline && !baseline_commit_is_strict(&s, &base, j))
    {
        return None;
    }
    let mut cand = base.clone();
    for item in written_items(&s, j) {
        let mut order = base.with_initial(&item);
        let at = rng.gen_range(1..=order.len());
        order.insert(at, j);
        if rng.gen_bool(0.1) && order.len() > 2 {
            order[1..].shuffle(rng);
        }
        cand.set(item, order).unwrap();
    }
    NwrInstance::new(s, base, cand, j).ok()
}

/// Acyclic, recoverable and strict after committing `t_j`.
pub fn commit_is_safe(inst: &NwrInstance) -> (bool, bool, bool) {
    let cs = inst.committed_schedule();
    let g = inst.candidate_graph();
    let acyclic = is_acyclic(g);
    let strict =
        acyclic && serial_order(cs, g, None).is_some_and(|m| check_strictly_serializable(cs, &m));
    (acyclic, check_recoverable(cs), strict)
}

/// An instance fit for pivot objects: `t_j` writes blind, reads committed
/// versions, has no overwriters, and each of its versions sits just before
/// an explicit version (the pivot).
pub fn random_pivot_instance(rng: &mut impl Rng) -> Option<(NwrInstance, BTreeMap<ItemId, TxnId>)> {
    let (s, j) = random_schedule(rng, true);
    let base = random_base(rng, &s, j);
    if !check_recoverable(&s)
        || !strict_under(&s, &base)
        || !baseline_commit_is_strict(&s, &base, j)
    {
        return None;
    }
    if s.read_set(j).iter().any(|v| !s.is_committed(v.writer)) {
        return None;
    }
    let mut cand = base.clone();
    let mut pivots = BTreeMap::new();
    for item in written_items(&s, j) {
        let mut order = base.with_initial(&item);
        if order.len() < 2 {
            return None;
        }
        let at = rng.gen_range(1..order.len());
        pivots.insert(item.clone(), order[at]);
        order.insert(at, j);
        cand.set(item, order).unwrap();
    }
    let inst = NwrInstance::new(s, base, cand, j).ok()?;
    overwriters(&inst).is_empty().then_some((inst, pivots))
}

/// Pivot objects for `t_j`'s written items and its ranked reads.
///
/// Versions other than `x0` belong to the current epoch (1) with version
/// numbers increasing along the order, shifted by random order-preserving
/// gaps so that some saturate. Each object summarizes the writers of the
/// pivot and every later version of its item, plus everything reachable
/// from them in the base graph, and is current only if all of those commit
/// after `t_j` begins. Item hashes are drawn from a
/// small range so slots collide.
pub fn pivot_mapping(
    rng: &mut impl Rng,
    inst: &NwrInstance,
    pivots: &BTreeMap<ItemId, TxnId>,
) -> (Vec<(u64, PivotVersionObject)>, Vec<ReadEntry>) {
    let s = inst.schedule();
    let j = inst.txn();
    let hash: BTreeMap<ItemId, u64> = s
        .items()
        .into_iter()
        .map(|x| (x, rng.gen_range(0..24u64)))
        .collect();
    let mut vn: BTreeMap<(ItemId, TxnId), u32> = BTreeMap::new();
    for item in s.items() {
        let mut n = 0u32;
        for w in inst.base().with_initial(&item) {
            if w.is_initial() {
                continue;
            }
            n += if rng.gen_bool(0.2) {
                rng.gen_range(2..8)
            } else {
                1
            };
            vn.insert((item.clone(), w), n);
        }
    }
    let rank_of = |item: &ItemId, w: TxnId| -> u32 {
        if w.is_initial() {
            rank(0, 0, 1)
        } else {
            rank(1, vn[&(item.clone(), w)], 1)
        }
    };
    let base_graph = build_mvsg(s, inst.base()).unwrap();
    let pj = s.first_position(j).unwrap();
    let mut objects = Vec::new();
    for (item, &pv_writer) in pivots {
        let order = inst.base().with_initial(item);
        let at = order.iter().position(|w| *w == pv_writer).unwrap();
        let mut members = BTreeSet::new();
        for &w in &order[at..] {
            members.insert(w);
            members.extend(reachable_set(&base_graph, w).unwrap());
        }
        let current = members
            .iter()
            .all(|t| s.commit_position(*t).is_some_and(|c| c > pj));
        let mut p = PivotVersionObject {
            epoch: if current { 1 } else { 0 },
            pv: vn[&(item.clone(), pv_writer)],
            ..Default::default()
        };
        for &t in &members {
            for r in s.read_set(t) {
                p = p.merge_read(hash[&r.item], rank_of(&r.item, r.writer));
            }
            for w in s.write_set(t) {
                p = p.merge_write(hash[&w.item], rank_of(&w.item, t));
            }
        }
        objects.push((hash[item], p));
    }
    let reads = s
        .read_set(j)
        .into_iter()
        .map(|r| ReadEntry {
            key_hash: hash[&r.item],
            rank: rank_of(&r.item, r.writer),
        })
        .collect();
    (objects, reads)
}
