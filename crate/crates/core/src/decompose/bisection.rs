// SPDX-License-Identifier: Apache-2.0

//! Minimum balanced cut of a link graph.
//!
//! Exact for up to [`EXACT_LIMIT`] nodes by enumerating every balanced
//! bipartition; larger graphs use Kernighan-Lin refinement from a few
//! deterministic starts, and the result is flagged as heuristic.

use serde::Serialize;

use crate::graph::NodeId;
use crate::synth::Architecture;

pub const EXACT_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bisection {
    /// Total capacity of links crossing the cut (bits/s).
    pub bandwidth: f64,
    /// Nodes on one side of the best cut found.
    pub side: Vec<NodeId>,
    pub heuristic: bool,
}

/// Minimum, over node bipartitions with sizes `floor(n/2)` and `ceil(n/2)`,
/// of the capacity crossing the cut. Returns `None` for fewer than 2 nodes.
pub fn bisection_bandwidth(arch: &Architecture) -> Option<Bisection> {
    let ids: Vec<NodeId> = arch.node_ids().collect();
    let index = |n: NodeId| ids.binary_search(&n).unwrap();
    let edges: Vec<(usize, usize, f64)> = arch
        .links()
        .map(|l| (index(l.a), index(l.b), l.capacity))
        .collect();
    let (bandwidth, side, heuristic) = min_bisection(ids.len(), &edges)?;
    Some(Bisection {
        bandwidth,
        side: side
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| ids[i])
            .collect(),
        heuristic,
    })
}

fn cut_weight(edges: &[(usize, usize, f64)], side: &[bool]) -> f64 {
    edges
        .iter()
        .filter(|&&(a, b, _)| side[a] != side[b])
        .map(|&(_, _, w)| w)
        .sum()
}

pub(crate) fn min_bisection(n: usize, edges: &[(usize, usize, f64)]) -> Option<(f64, Vec<bool>, bool)> {
    if n < 2 {
        return None;
    }
    if n <= EXACT_LIMIT {
        let (w, side) = exact(n, edges);
        Some((w, side, false))
    } else {
        let (w, side) = kernighan_lin(n, edges);
        Some((w, side, true))
    }
}

fn exact(n: usize, edges: &[(usize, usize, f64)]) -> (f64, Vec<bool>) {
    // Node 0 is always on the marked side; that side holds floor(n/2) or
    // ceil(n/2) nodes, which covers every balanced cut exactly once.
    let sizes = [n / 2, n.div_ceil(2)];
    let masks: Vec<(u32, u32, f64)> = edges
        .iter()
        .map(|&(a, b, w)| (1u32 << a, 1u32 << b, w))
        .collect();
    let mut best = (f64::INFINITY, 0u32);
    for rest in 0u32..(1 << (n - 1)) {
        let mask = (rest << 1) | 1;
        let size = mask.count_ones() as usize;
        if size != sizes[0] && size != sizes[1] {
            continue;
        }
        let w: f64 = masks
            .iter()
            .filter(|&&(a, b, _)| (mask & a != 0) != (mask & b != 0))
            .map(|&(_, _, w)| w)
            .sum();
        if w < best.0 {
            best = (w, mask);
        }
    }
    let side = (0..n).map(|i| best.1 & (1 << i) != 0).collect();
    (best.0, side)
}

fn kernighan_lin(n: usize, edges: &[(usize, usize, f64)]) -> (f64, Vec<bool>) {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    // Starts: index order, interleaved, and BFS order from node 0.
    let mut bfs = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut q = std::collections::VecDeque::from([root]);
        while let Some(u) = q.pop_front() {
            bfs.push(u);
            let mut nb: Vec<usize> = adj[u].iter().map(|&(v, _)| v).collect();
            nb.sort_unstable();
            for v in nb {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    let starts: Vec<Vec<bool>> = vec![
        (0..n).map(|i| i < n / 2).collect(),
        (0..n).map(|i| i % 2 == 0 && i / 2 < n / 2).collect::<Vec<_>>(),
        {
            let mut s = vec![false; n];
            for &u in bfs.iter().take(n / 2) {
                s[u] = true;
            }
            s
        },
    ];
    let mut best: Option<(f64, Vec<bool>)> = None;
    for mut side in starts {
        fix_balance(&mut side);
        refine(&mut side, &adj);
        let w = cut_weight(edges, &side);
        if best.as_ref().is_none_or(|(bw, _)| w < *bw) {
            best = Some((w, side));
        }
    }
    best.unwrap()
}

fn fix_balance(side: &mut [bool]) {
    let target = side.len() / 2;
    let mut count = side.iter().filter(|&&s| s).count();
    for s in side.iter_mut() {
        if count < target && !*s {
            *s = true;
            count += 1;
        }
    }
    for s in side.iter_mut().rev() {
        if count > target && *s {
            *s = false;
            count -= 1;
        }
    }
}

/// Classic KL passes: tentatively swap the best-gain unlocked pair until all
/// nodes are locked, then keep the best prefix of swaps.
fn refine(side: &mut [bool], adj: &[Vec<(usize, f64)>]) {
    let n = side.len();
    loop {
        let mut work = side.to_vec();
        let mut locked = vec![false; n];
        let gain = |s: &[bool], u: usize| -> f64 {
            adj[u]
                .iter()
                .map(|&(v, w)| if s[v] != s[u] { w } else { -w })
                .sum()
        };
        let mut swaps = Vec::new();
        let mut total = 0.0;
        let mut best = (0.0, 0usize);
        loop {
            let mut pick: Option<(f64, usize, usize)> = None;
            for a in (0..n).filter(|&a| !locked[a] && work[a]) {
                let ga = gain(&work, a);
                for b in (0..n).filter(|&b| !locked[b] && !work[b]) {
                    let w_ab: f64 = adj[a].iter().filter(|&&(v, _)| v == b).map(|&(_, w)| w).sum();
                    let g = ga + gain(&work, b) - 2.0 * w_ab;
                    if pick.is_none_or(|(pg, _, _)| g > pg + 1e-12) {
                        pick = Some((g, a, b));
                    }
                }
            }
            let Some((g, a, b)) = pick else { break };
            work[a] = false;
            work[b] = true;
            locked[a] = true;
            locked[b] = true;
            total += g;
            swaps.push((a, b));
            if total > best.0 + 1e-12 {
                best = (total, swaps.len());
            }
        }
        if best.1 == 0 {
            return;
        }
        for &(a, b) in &swaps[..best.1] {
            side[a] = false;
            side[b] = true;
        }
    }
}
