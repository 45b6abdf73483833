// SPDX-License-Identifier: Apache-2.0

//! Subgraph monomorphism search for primitive representation graphs.
//!
//! Matching is non-induced: a primitive matches when every representation
//! edge has an image in the host. Extra host edges among the mapped vertices
//! are allowed and are left uncovered. The search is a VF2-style state-space
//! backtrack: pattern vertices are visited in a connectivity-first order and
//! candidates are drawn from the neighbourhood of already-mapped vertices.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::graph::{Acg, EdgeKey, EdgeSet, NodeId};
use crate::library::{CommPrimitive, PrimitiveId};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// A primitive placed onto host vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Match {
    pub primitive_id: PrimitiveId,
    /// `mapping[v - 1]` is the host node for primitive vertex `v`.
    pub mapping: Vec<NodeId>,
    /// Host edges that are images of representation edges.
    pub covered: EdgeSet,
}

impl Match {
    /// Host node for primitive vertex `v` (1-based).
    pub fn host(&self, v: usize) -> NodeId {
        self.mapping[v - 1]
    }

    /// Builds a match from a mapping, computing the covered set.
    pub fn from_mapping(p: &CommPrimitive, mapping: Vec<NodeId>) -> Match {
        let covered = p
            .representation
            .iter()
            .map(|&(a, b)| (mapping[a - 1], mapping[b - 1]))
            .collect();
        Match {
            primitive_id: p.id,
            mapping,
            covered,
        }
    }
}

/// Matches of one primitive in one host.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MatchList {
    pub matches: Vec<Match>,
    /// The timeout fired before the search space was exhausted.
    pub truncated: bool,
}

struct HostIndex {
    ids: Vec<NodeId>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    adj: Vec<Vec<bool>>,
}

impl HostIndex {
    fn new(host: &Acg) -> Self {
        let ids: Vec<NodeId> = host.node_ids().collect();
        let pos: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let n = ids.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        let mut adj = vec![vec![false; n]; n];
        for ((s, d), _) in host.edges() {
            let (a, b) = (pos[&s], pos[&d]);
            out[a].push(b);
            inc[b].push(a);
            adj[a][b] = true;
        }
        HostIndex { ids, out, inc, adj }
    }
}

struct Plan {
    /// Pattern vertices (0-based) in visiting order.
    order: Vec<usize>,
    /// For each position: `(earlier position, pattern edge points from earlier)`.
    constraints: Vec<Vec<(usize, bool)>>,
    out_deg: Vec<usize>,
    in_deg: Vec<usize>,
}

impl Plan {
    fn new(p: &CommPrimitive) -> Self {
        let k = p.k;
        let mut out_deg = vec![0; k];
        let mut in_deg = vec![0; k];
        let mut nbrs = vec![Vec::new(); k];
        for &(a, b) in &p.representation {
            out_deg[a - 1] += 1;
            in_deg[b - 1] += 1;
            nbrs[a - 1].push(b - 1);
            nbrs[b - 1].push(a - 1);
        }
        let mut order = Vec::with_capacity(k);
        let mut placed = vec![false; k];
        while order.len() < k {
            let next = (0..k)
                .filter(|&v| !placed[v])
                .max_by_key(|&v| {
                    let links = nbrs[v].iter().filter(|&&u| placed[u]).count();
                    (links, out_deg[v] + in_deg[v], std::cmp::Reverse(v))
                })
                .unwrap();
            placed[next] = true;
            order.push(next);
        }
        let at: Vec<usize> = {
            let mut at = vec![0; k];
            for (i, &v) in order.iter().enumerate() {
                at[v] = i;
            }
            at
        };
        let mut constraints = vec![Vec::new(); k];
        for &(a, b) in &p.representation {
            let (pa, pb) = (at[a - 1], at[b - 1]);
            if pa < pb {
                constraints[pb].push((pa, true));
            } else {
                constraints[pa].push((pb, false));
            }
        }
        Plan {
            order,
            constraints,
            out_deg,
            in_deg,
        }
    }
}

/// Calls `visit` with every injective mapping (host node ids, indexed by
/// primitive vertex) under which all representation edges exist in the host.
/// Returns `false` if `deadline` passed before the search completed.
pub(crate) fn for_each_mapping(
    host: &Acg,
    p: &CommPrimitive,
    deadline: Option<Instant>,
    mut visit: impl FnMut(&[NodeId]),
) -> bool {
    if p.k == 0 || p.k > host.node_count() {
        return true;
    }
    let index = HostIndex::new(host);
    let plan = Plan::new(p);
    let mut state = Search {
        index: &index,
        plan: &plan,
        assigned: vec![usize::MAX; p.k],
        used: vec![false; index.ids.len()],
        steps: 0,
        deadline,
        timed_out: false,
    };
    let mut ids = vec![0; p.k];
    state.extend(0, &mut |assigned: &[usize]| {
        for (v, &h) in assigned.iter().enumerate() {
            ids[v] = index.ids[h];
        }
        visit(&ids);
    });
    !state.timed_out
}

struct Search<'a> {
    index: &'a HostIndex,
    plan: &'a Plan,
    /// Host index per pattern vertex.
    assigned: Vec<usize>,
    used: Vec<bool>,
    steps: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl Search<'_> {
    fn extend(&mut self, depth: usize, emit: &mut dyn FnMut(&[usize])) {
        if self.timed_out {
            return;
        }
        self.steps += 1;
        if self.steps.is_multiple_of(1024) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.timed_out = true;
                    return;
                }
            }
        }
        if depth == self.plan.order.len() {
            emit(&self.assigned);
            return;
        }
        let v = self.plan.order[depth];
        let cons = &self.plan.constraints[depth];
        let all: Vec<usize>;
        let candidates: &[usize] = match cons.first() {
            Some(&(earlier, from_earlier)) => {
                let h = self.assigned[self.plan.order[earlier]];
                if from_earlier {
                    &self.index.out[h]
                } else {
                    &self.index.inc[h]
                }
            }
            None => {
                all = (0..self.index.ids.len()).collect();
                &all
            }
        };
        for &c in candidates {
            if self.used[c]
                || self.index.out[c].len() < self.plan.out_deg[v]
                || self.index.inc[c].len() < self.plan.in_deg[v]
            {
                continue;
            }
            let ok = cons.iter().all(|&(earlier, from_earlier)| {
                let h = self.assigned[self.plan.order[earlier]];
                if from_earlier {
                    self.index.adj[h][c]
                } else {
                    self.index.adj[c][h]
                }
            });
            if !ok {
                continue;
            }
            self.used[c] = true;
            self.assigned[v] = c;
            self.extend(depth + 1, emit);
            self.assigned[v] = usize::MAX;
            self.used[c] = false;
            if self.timed_out {
                return;
            }
        }
    }
}

fn covered_key(p: &CommPrimitive, mapping: &[NodeId]) -> Vec<EdgeKey> {
    let mut cov: Vec<EdgeKey> = p
        .representation
        .iter()
        .map(|&(a, b)| (mapping[a - 1], mapping[b - 1]))
        .collect();
    cov.sort_unstable();
    cov
}

/// All matches of `p` in `host`, one per distinct covered edge set (keeping
/// the lexicographically smallest mapping), in canonical order: by covered
/// set, then mapping.
pub fn enumerate_matches(host: &Acg, p: &CommPrimitive, timeout: Duration) -> MatchList {
    enumerate_matches_by(host, p, timeout, |_, _| std::cmp::Ordering::Equal)
}

/// Like [`enumerate_matches`], but among mappings with the same covered set
/// keeps the one `prefer` orders first; ties fall back to the lexicographic
/// order of mappings.
pub fn enumerate_matches_by(
    host: &Acg,
    p: &CommPrimitive,
    timeout: Duration,
    mut prefer: impl FnMut(&[NodeId], &[NodeId]) -> std::cmp::Ordering,
) -> MatchList {
    let deadline = Instant::now().checked_add(timeout);
    let mut best: BTreeMap<Vec<EdgeKey>, Vec<NodeId>> = BTreeMap::new();
    let complete = for_each_mapping(host, p, deadline, |mapping| {
        let key = covered_key(p, mapping);
        match best.get_mut(&key) {
            Some(cur) => {
                let ord = prefer(mapping, cur).then_with(|| mapping.cmp(cur.as_slice()));
                if ord == std::cmp::Ordering::Less {
                    cur.clear();
                    cur.extend_from_slice(mapping);
                }
            }
            None => {
                best.insert(key, mapping.to_vec());
            }
        }
    });
    let matches = best
        .into_iter()
        .map(|(cov, mapping)| Match {
            primitive_id: p.id,
            mapping,
            covered: cov.into_iter().collect(),
        })
        .collect();
    MatchList {
        matches,
        truncated: !complete,
    }
}

/// Independent check of the match invariants against a host.
pub fn verify_match(host: &Acg, p: &CommPrimitive, m: &Match) -> bool {
    if m.primitive_id != p.id || m.mapping.len() != p.k {
        return false;
    }
    if !m.mapping.iter().all(|&n| host.contains_node(n)) {
        return false;
    }
    let mut seen = m.mapping.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != m.mapping.len() {
        return false;
    }
    let mut image = EdgeSet::new();
    for &(a, b) in &p.representation {
        let e = (m.mapping[a - 1], m.mapping[b - 1]);
        if !host.has_edge(e.0, e.1) {
            return false;
        }
        image.insert(e);
    }
    image == m.covered
}
