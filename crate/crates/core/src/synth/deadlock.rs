// SPDX-License-Identifier: Apache-2.0

//! Channel dependency analysis.
//!
//! A channel is one direction of a link. Whenever a route holds channel
//! `u->v` and next requests `v->w`, the dependency graph gets an edge
//! `(u,v) -> (v,w)`. An acyclic dependency graph means the tables cannot
//! deadlock under wormhole or cut-through switching.
//!
//! When cycles exist, the depth-first back edges form a feedback set. A packet
//! moves up one virtual-channel layer each time it crosses one of them; every
//! layer then only uses forward dependencies, so the layered graph is acyclic.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Architecture, RoutingTables, SynthError};
use crate::graph::NodeId;

/// Directed use of a link: `(from, to)`.
pub type Channel = (NodeId, NodeId);

pub const DEFAULT_CYCLE_LIMIT: usize = 10_000;

#[derive(Clone, Debug, Default)]
pub struct ChannelDependencyGraph {
    channels: Vec<Channel>,
    index: BTreeMap<Channel, usize>,
    succ: Vec<BTreeSet<usize>>,
}

impl ChannelDependencyGraph {
    fn intern(&mut self, c: Channel) -> usize {
        if let Some(&i) = self.index.get(&c) {
            return i;
        }
        let i = self.channels.len();
        self.channels.push(c);
        self.index.insert(c, i);
        self.succ.push(BTreeSet::new());
        i
    }

    /// Adds the dependencies of one routed path (a node sequence).
    pub fn add_path(&mut self, path: &[NodeId]) {
        let chans: Vec<usize> = path.windows(2).map(|w| self.intern((w[0], w[1]))).collect();
        for w in chans.windows(2) {
            self.succ[w[0]].insert(w[1]);
        }
    }

    /// Dependencies implied by walking every table entry to its destination.
    pub fn from_tables(a: &Architecture, t: &RoutingTables) -> Result<Self, SynthError> {
        let mut cdg = ChannelDependencyGraph::default();
        for path in table_paths(a, t)? {
            cdg.add_path(&path);
        }
        Ok(cdg)
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn dependency_count(&self) -> usize {
        self.succ.iter().map(BTreeSet::len).sum()
    }

    /// Every dependency as a channel pair, in canonical order.
    pub fn dependencies(&self) -> Vec<(Channel, Channel)> {
        let mut out: Vec<_> = self
            .succ
            .iter()
            .enumerate()
            .flat_map(|(u, s)| s.iter().map(move |&v| (u, v)))
            .map(|(u, v)| (self.channels[u], self.channels[v]))
            .collect();
        out.sort_unstable();
        out
    }

    /// Elementary cycles (Johnson's algorithm), each rotated to start at its
    /// smallest channel, sorted. Stops after `limit` cycles; the flag reports
    /// whether it stopped early.
    pub fn elementary_cycles(&self, limit: usize) -> (Vec<Vec<Channel>>, bool) {
        // Work in channel order so the rotation is canonical.
        let n = self.channels.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| self.channels[i]);
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let adj: Vec<Vec<usize>> = order
            .iter()
            .map(|&i| {
                let mut s: Vec<usize> = self.succ[i].iter().map(|&j| rank[j]).collect();
                s.sort_unstable();
                s
            })
            .collect();

        let mut cycles = Vec::new();
        let mut truncated = false;
        for start in 0..n {
            let comp = component_of(&adj, start);
            if comp.is_empty() {
                continue;
            }
            let mut j = Johnson {
                adj: &adj,
                allowed: comp,
                blocked: vec![false; n],
                bset: vec![BTreeSet::new(); n],
                stack: Vec::new(),
                found: Vec::new(),
                limit: limit.saturating_sub(cycles.len()),
            };
            j.circuit(start, start);
            for c in j.found {
                cycles.push(c.into_iter().map(|r| self.channels[order[r]]).collect());
            }
            if cycles.len() >= limit {
                truncated = true;
                break;
            }
        }
        cycles.sort();
        (cycles, truncated)
    }

    /// Dependencies whose removal leaves the graph acyclic (DFS back edges).
    pub fn feedback_set(&self) -> BTreeSet<(Channel, Channel)> {
        let n = self.channels.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| self.channels[i]);
        // 0 = new, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut back = BTreeSet::new();
        for &root in &order {
            if state[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
            state[root] = 1;
            stack.push((root, self.sorted_succ(root)));
            while let Some((u, pending)) = stack.last_mut() {
                let u = *u;
                match pending.pop() {
                    Some(v) => match state[v] {
                        0 => {
                            state[v] = 1;
                            let s = self.sorted_succ(v);
                            stack.push((v, s));
                        }
                        1 => {
                            back.insert((self.channels[u], self.channels[v]));
                        }
                        _ => {}
                    },
                    None => {
                        state[u] = 2;
                        stack.pop();
                    }
                }
            }
        }
        back
    }

    /// Successors sorted so that `pop` yields them in ascending channel order.
    fn sorted_succ(&self, u: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.succ[u].iter().copied().collect();
        s.sort_by_key(|&i| std::cmp::Reverse(self.channels[i]));
        s
    }
}

/// Nodes of the strongly connected component of `start` within the subgraph
/// of nodes `>= start`, or empty if that component has no cycle through
/// `start`.
fn component_of(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let n = adj.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            let nexts: Box<dyn Iterator<Item = usize>> = if forward {
                Box::new(adj[u].iter().copied())
            } else {
                Box::new((start..n).filter(move |&w| adj[w].binary_search(&u).is_ok()))
            };
            for v in nexts {
                if v >= start && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    let comp: Vec<bool> = (0..n).map(|i| fwd[i] && bwd[i]).collect();
    let self_loop = adj[start].binary_search(&start).is_ok();
    if comp.iter().filter(|&&b| b).count() > 1 || self_loop {
        comp
    } else {
        Vec::new()
    }
}

struct Johnson<'a> {
    adj: &'a [Vec<usize>],
    allowed: Vec<bool>,
    blocked: Vec<bool>,
    bset: Vec<BTreeSet<usize>>,
    stack: Vec<usize>,
    found: Vec<Vec<usize>>,
    limit: usize,
}

impl Johnson<'_> {
    fn unblock(&mut self, u: usize) {
        self.blocked[u] = false;
        let pending = std::mem::take(&mut self.bset[u]);
        for w in pending {
            if self.blocked[w] {
                self.unblock(w);
            }
        }
    }

    fn circuit(&mut self, v: usize, start: usize) -> bool {
        if self.found.len() >= self.limit {
            return true;
        }
        let mut closed = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.adj[v] {
            if !self.allowed.get(w).copied().unwrap_or(false) {
                continue;
            }
            if w == start {
                self.found.push(self.stack.clone());
                closed = true;
                if self.found.len() >= self.limit {
                    break;
                }
            } else if !self.blocked[w] && self.circuit(w, start) {
                closed = true;
            }
        }
        if closed {
            self.unblock(v);
        } else {
            for &w in &self.adj[v] {
                if self.allowed.get(w).copied().unwrap_or(false) {
                    self.bset[w].insert(v);
                }
            }
        }
        self.stack.pop();
        closed
    }
}

/// Path from every table entry's node to its destination.
pub fn table_paths(a: &Architecture, t: &RoutingTables) -> Result<Vec<Vec<NodeId>>, SynthError> {
    t.entries()
        .map(|(n, d, _)| {
            let p = t.walk(n, d)?;
            for w in p.windows(2) {
                if !a.has_link(w[0], w[1]) {
                    return Err(SynthError::MissingLink {
                        src: n,
                        dst: d,
                        a: w[0],
                        b: w[1],
                    });
                }
            }
            Ok(p)
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DeadlockReport {
    pub channels: usize,
    pub dependencies: usize,
    pub cycles: Vec<Vec<Channel>>,
    /// Cycle enumeration hit its limit.
    pub truncated: bool,
    /// Dependencies at which a packet moves up one virtual-channel layer.
    pub escalations: BTreeSet<(Channel, Channel)>,
    /// Virtual channels needed for deadlock freedom with layered escalation.
    pub vc_required: usize,
}

impl DeadlockReport {
    pub fn deadlock_free(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Virtual-channel layer used on each hop of `path`.
    pub fn vc_layers(&self, path: &[NodeId]) -> Vec<usize> {
        let mut layer = 0;
        let mut out = Vec::with_capacity(path.len().saturating_sub(1));
        for (i, w) in path.windows(2).enumerate() {
            if i > 0 {
                let prev = (path[i - 1], path[i]);
                if self.escalations.contains(&(prev, (w[0], w[1]))) {
                    layer += 1;
                }
            }
            out.push(layer);
        }
        out
    }
}

/// Full analysis: cycles (up to `limit`), escalation points and VC count.
pub fn analyze(a: &Architecture, t: &RoutingTables, limit: usize) -> Result<DeadlockReport, SynthError> {
    let cdg = ChannelDependencyGraph::from_tables(a, t)?;
    let (cycles, truncated) = cdg.elementary_cycles(limit);
    let escalations = if cycles.is_empty() {
        BTreeSet::new()
    } else {
        cdg.feedback_set()
    };
    let mut report = DeadlockReport {
        channels: cdg.channel_count(),
        dependencies: cdg.dependency_count(),
        cycles,
        truncated,
        escalations,
        vc_required: 1,
    };
    for p in table_paths(a, t)? {
        let top = report.vc_layers(&p).into_iter().max().unwrap_or(0);
        report.vc_required = report.vc_required.max(top + 1);
    }
    Ok(report)
}

/// Elementary cycles of the channel dependency graph; empty means the tables
/// are deadlock-free.
pub fn detect_deadlock(a: &Architecture, t: &RoutingTables) -> Result<Vec<Vec<Channel>>, SynthError> {
    Ok(analyze(a, t, DEFAULT_CYCLE_LIMIT)?.cycles)
}
