//! Multiversion serialization graphs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::history::{
    committed_projection, ItemId, Position, Schedule, SerialOrder, TxnId, VersionOrder,
};

/// Upper bound on the number of version orders [`enumerate_version_orders`]
/// will walk.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MvsgError {
    #[error("version order does not place version {item}{writer} of a committed writer")]
    MissingVersion { item: ItemId, writer: u32 },
    #[error("{0} is not a node of the graph")]
    UnknownNode(TxnId),
    #[error("{count} version orders exceed the enumeration limit of {limit}")]
    TooManyOrders { count: u128, limit: u128 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Wr,
    Rw,
    Ww,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Wr => "wr",
            EdgeKind::Rw => "rw",
            EdgeKind::Ww => "ww",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: TxnId,
    pub to: TxnId,
    pub kind: EdgeKind,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.from, self.kind, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mvsg {
    nodes: Vec<TxnId>,
    index: HashMap<TxnId, usize>,
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Mvsg {
    fn from_parts(nodes: BTreeSet<TxnId>, mut edges: Vec<Edge>) -> Mvsg {
        let nodes: Vec<TxnId> = nodes.into_iter().collect();
        let index: HashMap<TxnId, usize> = nodes.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        edges.sort_unstable();
        edges.dedup();
        let mut adj = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adj[index[&e.from]].push(index[&e.to]);
        }
        for a in &mut adj {
            a.dedup();
        }
        Mvsg {
            nodes,
            index,
            edges,
            adj,
        }
    }

    pub fn nodes(&self) -> &[TxnId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, t: TxnId) -> bool {
        self.index.contains_key(&t)
    }

    pub fn out_edges(&self, t: TxnId) -> impl Iterator<Item = &Edge> {
        let lo = self.edges.partition_point(|e| e.from < t);
        self.edges[lo..].iter().take_while(move |e| e.from == t)
    }
}

/// Builds `MVSG(CP(s), vo)`.
///
/// Reads of uncommitted versions contribute nothing: their writers are not
/// nodes. A `vo` entry that leaves out `x0` places it first.
pub fn build_mvsg(s: &Schedule, vo: &VersionOrder) -> Result<Mvsg, MvsgError> {
    let cp = committed_projection(s);
    let nodes = cp.committed();
    let mut versions: BTreeMap<ItemId, BTreeSet<TxnId>> = BTreeMap::new();
    for item in s.items() {
        versions.entry(item).or_default().insert(TxnId::INITIAL);
    }
    for &t in &nodes {
        for v in cp.write_set(t) {
            versions.entry(v.item).or_default().insert(t);
        }
    }
    // Rank of each committed version in the order for its item.
    let mut order: HashMap<ItemId, Vec<(TxnId, usize)>> = HashMap::new();
    for (item, vs) in &versions {
        let listed = vo.with_initial(item);
        let mut ranked = Vec::with_capacity(vs.len());
        for &w in vs {
            match listed.iter().position(|x| *x == w) {
                Some(p) => ranked.push((w, p)),
                None => {
                    return Err(MvsgError::MissingVersion {
                        item: item.clone(),
                        writer: w.0,
                    })
                }
            }
        }
        order.insert(item.clone(), ranked);
    }
    let mut edges = Vec::new();
    for &ti in &nodes {
        for read in cp.read_set(ti) {
            let tj = read.writer;
            if !nodes.contains(&tj) {
                continue;
            }
            let ranked = &order[&read.item];
            let pj = ranked
                .iter()
                .find(|(w, _)| *w == tj)
                .expect("committed version is ranked")
                .1;
            edges.push(Edge {
                from: tj,
                to: ti,
                kind: EdgeKind::Wr,
            });
            for &(tk, pk) in ranked {
                if tk == ti || tk == tj {
                    continue;
                }
                if pj < pk {
                    edges.push(Edge {
                        from: ti,
                        to: tk,
                        kind: EdgeKind::Rw,
                    });
                } else {
                    edges.push(Edge {
                        from: tk,
                        to: tj,
                        kind: EdgeKind::Ww,
                    });
                }
            }
        }
    }
    Ok(Mvsg::from_parts(nodes, edges))
}

pub fn is_acyclic(g: &Mvsg) -> bool {
    // 0 unvisited, 1 on stack, 2 done
    let mut color = vec![0u8; g.nodes.len()];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..g.nodes.len() {
        if color[root] != 0 {
            continue;
        }
        color[root] = 1;
        stack.push((root, 0));
        while let Some(&mut (n, ref mut next)) = stack.last_mut() {
            if let Some(&m) = g.adj[n].get(*next) {
                *next += 1;
                match color[m] {
                    0 => {
                        color[m] = 1;
                        stack.push((m, 0));
                    }
                    1 => return false,
                    _ => {}
                }
            } else {
                color[n] = 2;
                stack.pop();
            }
        }
    }
    true
}

/// `RN(t)`: nodes reachable from `t` by at least one edge.
pub fn reachable_set(g: &Mvsg, t: TxnId) -> Result<BTreeSet<TxnId>, MvsgError> {
    let &start = g.index.get(&t).ok_or(MvsgError::UnknownNode(t))?;
    let mut seen = vec![false; g.nodes.len()];
    let mut stack: Vec<usize> = g.adj[start].clone();
    let mut out = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if seen[n] {
            continue;
        }
        seen[n] = true;
        out.insert(g.nodes[n]);
        stack.extend(g.adj[n].iter().copied().filter(|m| !seen[*m]));
    }
    Ok(out)
}

/// Commit-order-first topological sort.
///
/// Kahn's algorithm over the graph's edges plus real-time precedence
/// (`t_i -> t_k` whenever `t_i` commits before `t_k`'s first operation),
/// always taking the available transaction that comes first in `priority`
/// (commit position in `s` when `None`). Returns `None` when the combined
/// relation has a cycle, in which case no serial order consistent with both
/// exists.
pub fn serial_order(s: &Schedule, g: &Mvsg, priority: Option<&SerialOrder>) -> Option<SerialOrder> {
    let n = g.nodes.len();
    let key: Vec<i64> = match priority {
        Some(m) => {
            let pos: HashMap<TxnId, usize> = m.0.iter().enumerate().map(|(i, t)| (*t, i)).collect();
            g.nodes
                .iter()
                .map(|t| pos.get(t).map_or(i64::MAX, |p| *p as i64))
                .collect()
        }
        None => g
            .nodes
            .iter()
            .map(|t| s.commit_position(*t).unwrap_or(Position::MAX))
            .collect(),
    };
    let mut indeg = vec![0usize; n];
    let mut extra: Vec<Vec<usize>> = vec![Vec::new(); n];
    for a in &g.adj {
        for &m in a {
            indeg[m] += 1;
        }
    }
    // Precedence: by commit position, every node whose commit precedes
    // first(t_k) gets an edge into t_k.
    let mut by_commit: Vec<(Position, usize)> = (0..n)
        .filter_map(|i| s.commit_position(g.nodes[i]).map(|c| (c, i)))
        .collect();
    by_commit.sort_unstable();
    for (k, t) in g.nodes.iter().enumerate() {
        let Some(first) = s.first_position(*t) else {
            continue;
        };
        for &(_, i) in by_commit.iter().take_while(|(c, _)| *c < first) {
            if i != k {
                extra[i].push(k);
                indeg[k] += 1;
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(i64, usize)>> = (0..n)
        .filter(|i| indeg[*i] == 0)
        .map(|i| Reverse((key[i], i)))
        .collect();
    let mut out = Vec::with_capacity(n);
    while let Some(Reverse((_, i))) = heap.pop() {
        out.push(g.nodes[i]);
        for &m in g.adj[i].iter().chain(extra[i].iter()) {
            indeg[m] -= 1;
            if indeg[m] == 0 {
                heap.push(Reverse((key[m], m)));
            }
        }
    }
    (out.len() == n).then_some(SerialOrder(out))
}

/// Per-item permutations of the committed versions of `s`, `x0` included.
pub struct VersionOrderIter {
    items: Vec<(ItemId, Vec<TxnId>)>,
    done: bool,
}

fn next_permutation(v: &mut [TxnId]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

impl Iterator for VersionOrderIter {
    type Item = VersionOrder;

    fn next(&mut self) -> Option<VersionOrder> {
        if self.done {
            return None;
        }
        let mut vo = VersionOrder::new();
        for (item, ws) in &self.items {
            vo.set(item.clone(), ws.clone()).expect("distinct writers");
        }
        // Odometer: the last item varies fastest.
        self.done = true;
        for (_, ws) in self.items.iter_mut().rev() {
            if next_permutation(ws) {
                self.done = false;
                break;
            }
        }
        Some(vo)
    }
}

fn committed_versions(s: &Schedule) -> Vec<(ItemId, Vec<TxnId>)> {
    let cp = committed_projection(s);
    let mut versions: BTreeMap<ItemId, BTreeSet<TxnId>> = BTreeMap::new();
    for item in s.items() {
        versions.entry(item).or_default().insert(TxnId::INITIAL);
    }
    for t in cp.committed() {
        for v in cp.write_set(t) {
            versions.entry(v.item).or_default().insert(t);
        }
    }
    versions
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().collect()))
        .collect()
}

pub fn count_version_orders(s: &Schedule) -> u128 {
    committed_versions(s)
        .iter()
        .map(|(_, ws)| (1..=ws.len() as u128).product::<u128>())
        .fold(1u128, |a, b| a.saturating_mul(b))
}

/// Every version order of `CP(s)` in lexicographic order.
pub fn enumerate_version_orders(s: &Schedule) -> Result<VersionOrderIter, MvsgError> {
    let count = count_version_orders(s);
    if count > ENUMERATION_LIMIT {
        return Err(MvsgError::TooManyOrders {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(VersionOrderIter {
        items: committed_versions(s),
        done: false,
    })
}

/// Brute-force multiversion view serializability: the first version order
/// whose MVSG is acyclic, if any.
pub fn is_mvsr(s: &Schedule) -> Result<(bool, Option<VersionOrder>), MvsgError> {
    for vo in enumerate_version_orders(s)? {
        if is_acyclic(&build_mvsg(s, &vo)?) {
            return Ok((true, Some(vo)));
        }
    }
    Ok((false, None))
}
