// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference implementations used to check the library.
//!
//! Nothing here calls the search, matcher or cost code under test; only
//! graph accessors, primitive definitions and the energy model's length
//! function are shared.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nocsynth::{
    Acg, CommPrimitive, Decomposition, EdgeSet, EnergyModel, Library, Match, NodeId, Position, RoutingTables,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Edge = (NodeId, NodeId);
pub type Channel = (NodeId, NodeId);

#[derive(Clone, Debug)]
pub struct OracleMatch {
    pub primitive_id: u32,
    pub mapping: Vec<NodeId>,
    pub covered: BTreeSet<Edge>,
    pub cost: f64,
}

fn e_bit(em: &EnergyModel, g: &Acg, a: NodeId, b: NodeId) -> f64 {
    let len = em.link_length(g, a, b).unwrap_or(em.default_link_mm);
    em.e_router + em.e_wire * len
}

/// Energy of placing `p` with vertex `i` on `mapping[i - 1]`: per
/// implementation link, the largest volume routed across it times the
/// per-bit energy of that link.
pub fn placement_cost(p: &CommPrimitive, g: &Acg, em: &EnergyModel, mapping: &[NodeId]) -> f64 {
    let host = |v: usize| mapping[v - 1];
    let mut total = 0.0;
    for &(a, b) in &p.implementation {
        let mut carried: f64 = 0.0;
        for (&(s, d), route) in &p.routes {
            let crosses = route
                .windows(2)
                .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a));
            if crosses {
                let vol = g.edge(host(s), host(d)).map_or(0.0, |w| w.volume);
                carried = carried.max(vol);
            }
        }
        total += e_bit(em, g, host(a), host(b)) * carried;
    }
    total
}

pub fn remainder_edge_cost(g: &Acg, em: &EnergyModel, (s, d): Edge) -> f64 {
    em.lambda * e_bit(em, g, s, d) * g.edge(s, d).expect("edge in graph").volume
}

/// Every injective placement of every primitive whose representation edges
/// all exist in `g`. One entry per (primitive, covered set), with the
/// cheapest placement's cost.
pub fn brute_matches(g: &Acg, lib: &Library, em: &EnergyModel) -> Vec<OracleMatch> {
    let nodes: Vec<NodeId> = g.node_ids().collect();
    let mut out = Vec::new();
    for p in lib.iter() {
        let mut best: BTreeMap<BTreeSet<Edge>, OracleMatch> = BTreeMap::new();
        let mut mapping = Vec::with_capacity(p.k);
        let mut used = vec![false; nodes.len()];
        place(p, g, em, &nodes, &mut mapping, &mut used, &mut best);
        out.extend(best.into_values());
    }
    out
}

fn place(
    p: &CommPrimitive,
    g: &Acg,
    em: &EnergyModel,
    nodes: &[NodeId],
    mapping: &mut Vec<NodeId>,
    used: &mut Vec<bool>,
    best: &mut BTreeMap<BTreeSet<Edge>, OracleMatch>,
) {
    if mapping.len() == p.k {
        let covered: Option<BTreeSet<Edge>> = p
            .representation
            .iter()
            .map(|&(a, b)| {
                let e = (mapping[a - 1], mapping[b - 1]);
                g.has_edge(e.0, e.1).then_some(e)
            })
            .collect();
        let Some(covered) = covered else { return };
        let cost = placement_cost(p, g, em, mapping);
        let keep = best.get(&covered).is_none_or(|m| cost < m.cost);
        if keep {
            best.insert(
                covered.clone(),
                OracleMatch {
                    primitive_id: p.id,
                    mapping: mapping.clone(),
                    covered,
                    cost,
                },
            );
        }
        return;
    }
    for i in 0..nodes.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        mapping.push(nodes[i]);
        place(p, g, em, nodes, mapping, used, best);
        mapping.pop();
        used[i] = false;
    }
}

/// Minimum cost over every edge-disjoint subset of `matches`, with all
/// uncovered edges paid as remainder. Requires at most 64 edges.
pub fn exhaustive_optimum(g: &Acg, em: &EnergyModel, matches: &[OracleMatch]) -> f64 {
    let edges: Vec<Edge> = g.edges().map(|(e, _)| e).collect();
    assert!(edges.len() <= 64, "oracle handles at most 64 edges");
    let bit = |e: &Edge| 1u64 << edges.iter().position(|x| x == e).unwrap();
    let masks: Vec<u64> = matches.iter().map(|m| m.covered.iter().map(bit).fold(0, |a, b| a | b)).collect();
    let rem: Vec<f64> = edges.iter().map(|&e| remainder_edge_cost(g, em, e)).collect();
    let mut best = f64::INFINITY;
    subsets(0, 0, 0.0, &masks, matches, &rem, &mut best);
    best
}

fn subsets(i: usize, used: u64, cost: f64, masks: &[u64], matches: &[OracleMatch], rem: &[f64], best: &mut f64) {
    if i == masks.len() {
        let left: f64 = (0..rem.len()).filter(|&e| used >> e & 1 == 0).map(|e| rem[e]).sum();
        *best = best.min(cost + left);
        return;
    }
    subsets(i + 1, used, cost, masks, matches, rem, best);
    if used & masks[i] == 0 {
        subsets(i + 1, used | masks[i], cost + matches[i].cost, masks, matches, rem, best);
    }
}

/// Like [`exhaustive_optimum`], restricted to subsets whose link demand
/// stays within `cap`; `None` when no subset qualifies.
pub fn exhaustive_optimum_capped(g: &Acg, lib: &Library, em: &EnergyModel, matches: &[OracleMatch], cap: f64) -> Option<f64> {
    let edges: Vec<Edge> = g.edges().map(|(e, _)| e).collect();
    assert!(edges.len() <= 64, "oracle handles at most 64 edges");
    let mut best: Option<f64> = None;
    let mut chosen: Vec<usize> = Vec::new();
    capped(0, &mut chosen, g, lib, em, matches, cap, &edges, &mut best);
    best
}

#[allow(clippy::too_many_arguments)]
fn capped(
    i: usize,
    chosen: &mut Vec<usize>,
    g: &Acg,
    lib: &Library,
    em: &EnergyModel,
    matches: &[OracleMatch],
    cap: f64,
    edges: &[Edge],
    best: &mut Option<f64>,
) {
    if i == matches.len() {
        let covered: BTreeSet<Edge> = chosen.iter().flat_map(|&c| matches[c].covered.iter().copied()).collect();
        let rem: Vec<Edge> = edges.iter().copied().filter(|e| !covered.contains(e)).collect();
        let d = to_decomposition(chosen.iter().map(|&c| &matches[c]), &rem);
        if link_demand(&d, g, lib).values().all(|&v| v <= cap) {
            let cost = chosen.iter().map(|&c| matches[c].cost).sum::<f64>()
                + rem.iter().map(|&e| remainder_edge_cost(g, em, e)).sum::<f64>();
            if best.is_none_or(|b| cost < b) {
                *best = Some(cost);
            }
        }
        return;
    }
    capped(i + 1, chosen, g, lib, em, matches, cap, edges, best);
    let free = chosen.iter().all(|&c| matches[c].covered.is_disjoint(&matches[i].covered));
    if free {
        chosen.push(i);
        capped(i + 1, chosen, g, lib, em, matches, cap, edges, best);
        chosen.pop();
    }
}

/// Assembles a library decomposition from oracle matches and remainder edges.
pub fn to_decomposition<'a>(matches: impl Iterator<Item = &'a OracleMatch>, remainder: &[Edge]) -> Decomposition {
    let mut d = Decomposition::default();
    for m in matches {
        let mut covered = EdgeSet::new();
        for &e in &m.covered {
            covered.insert(e);
        }
        d.matches.push(Match {
            primitive_id: m.primitive_id,
            mapping: m.mapping.clone(),
            covered,
        });
    }
    for &e in remainder {
        d.remainder.insert(e);
    }
    d
}

/// Recomputes a decomposition's cost from scratch.
pub fn decomposition_cost(d: &Decomposition, g: &Acg, lib: &Library, em: &EnergyModel) -> f64 {
    let matched: f64 = d
        .matches
        .iter()
        .map(|m| placement_cost(lib.get(m.primitive_id).unwrap(), g, em, &m.mapping))
        .sum();
    let rest: f64 = d.remainder.iter().map(|&e| remainder_edge_cost(g, em, e)).sum();
    matched + rest
}

/// Checks that the matches are valid placements, pairwise edge-disjoint,
/// and together with the remainder partition the edge set of `g`.
pub fn check_partition(d: &Decomposition, g: &Acg, lib: &Library) -> Result<(), String> {
    let mut seen: BTreeSet<Edge> = BTreeSet::new();
    for m in &d.matches {
        let p = lib.get(m.primitive_id).map_err(|e| e.to_string())?;
        if m.mapping.len() != p.k {
            return Err(format!("{}: mapping has {} vertices", p.name, m.mapping.len()));
        }
        let distinct: BTreeSet<NodeId> = m.mapping.iter().copied().collect();
        if distinct.len() != p.k || !distinct.iter().all(|&v| g.contains_node(v)) {
            return Err(format!("{}: mapping {:?} is not injective into the graph", p.name, m.mapping));
        }
        let mapped: BTreeSet<Edge> = p
            .representation
            .iter()
            .map(|&(a, b)| (m.mapping[a - 1], m.mapping[b - 1]))
            .collect();
        let covered: BTreeSet<Edge> = m.covered.iter().copied().collect();
        if mapped != covered {
            return Err(format!("{}: covered set differs from the mapped representation", p.name));
        }
        for &e in &covered {
            if !g.has_edge(e.0, e.1) {
                return Err(format!("{}: edge {e:?} not in graph", p.name));
            }
            if !seen.insert(e) {
                return Err(format!("edge {e:?} covered twice"));
            }
        }
    }
    for &e in d.remainder.iter() {
        if !g.has_edge(e.0, e.1) {
            return Err(format!("remainder edge {e:?} not in graph"));
        }
        if !seen.insert(e) {
            return Err(format!("remainder edge {e:?} also covered"));
        }
    }
    let all: BTreeSet<Edge> = g.edges().map(|(e, _)| e).collect();
    if seen != all {
        return Err(format!("{} of {} edges accounted for", seen.len(), all.len()));
    }
    Ok(())
}

/// Bandwidth per undirected host link: each ACG edge's bandwidth along its
/// primitive route, or along the direct link when in the remainder.
pub fn link_demand(d: &Decomposition, g: &Acg, lib: &Library) -> BTreeMap<Edge, f64> {
    let mut demand: BTreeMap<Edge, f64> = BTreeMap::new();
    let mut add = |path: &[NodeId], bw: f64| {
        for w in path.windows(2) {
            *demand.entry((w[0].min(w[1]), w[0].max(w[1]))).or_default() += bw;
        }
    };
    for m in &d.matches {
        let p = lib.get(m.primitive_id).unwrap();
        for (&(s, t), route) in &p.routes {
            let bw = g.edge(m.mapping[s - 1], m.mapping[t - 1]).unwrap().bandwidth;
            let path: Vec<NodeId> = route.iter().map(|&v| m.mapping[v - 1]).collect();
            add(&path, bw);
        }
    }
    for &(s, t) in d.remainder.iter() {
        add(&[s, t], g.edge(s, t).unwrap().bandwidth);
    }
    demand
}

/// A small random ACG on `3..=max_nodes` nodes: up to two planted primitive
/// copies plus random extra edges, at most `max_edges` edges in total,
/// integer volumes in `1..=3`, and grid positions.
pub fn random_host(seed: u64, max_nodes: usize, max_edges: usize, lib: &Library) -> Acg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=max_nodes);
    let mut g = Acg::new();
    for i in 0..n {
        let pos = Position::new((i % 4) as f64, (i / 4) as f64);
        g.add_node(i as NodeId + 1, Some(pos)).unwrap();
    }
    let nodes: Vec<NodeId> = (1..=n as NodeId).collect();
    let mut wanted: BTreeSet<Edge> = BTreeSet::new();
    let fitting: Vec<&CommPrimitive> = lib.iter().filter(|p| p.k <= n).collect();
    for _ in 0..rng.gen_range(0..=2) {
        let p = fitting[rng.gen_range(0..fitting.len())];
        let at: Vec<NodeId> = nodes.choose_multiple(&mut rng, p.k).copied().collect();
        let extra: BTreeSet<Edge> = p.representation.iter().map(|&(a, b)| (at[a - 1], at[b - 1])).collect();
        if wanted.len() + extra.len() <= max_edges {
            wanted.extend(extra);
        }
    }
    let noise = rng.gen_range(0..=max_edges.saturating_sub(wanted.len()).min(n));
    for _ in 0..noise {
        let a = *nodes.choose(&mut rng).unwrap();
        let b = *nodes.choose(&mut rng).unwrap();
        if a != b {
            wanted.insert((a, b));
        }
    }
    for (a, b) in wanted {
        g.add_edge(a, b, rng.gen_range(1..=3) as f64, rng.gen_range(1..=4) as f64).unwrap();
    }
    g
}

/// Host path from `src` to `dst` by repeated table lookups.
pub fn table_walk(t: &RoutingTables, src: NodeId, dst: NodeId, limit: usize) -> Option<Vec<NodeId>> {
    let mut path = vec![src];
    let mut cur = src;
    while cur != dst {
        cur = t.next_hop(cur, dst)?;
        path.push(cur);
        if path.len() > limit + 1 {
            return None;
        }
    }
    Some(path)
}

/// Channel dependencies induced by walking every table destination from
/// every node that has an entry for it.
pub fn brute_dependencies(t: &RoutingTables) -> BTreeSet<(Channel, Channel)> {
    let pairs: BTreeSet<(NodeId, NodeId)> = t.entries().map(|(n, d, _)| (n, d)).collect();
    let limit = t.len() + 1;
    let mut deps = BTreeSet::new();
    for (s, d) in pairs {
        let path = table_walk(t, s, d, limit).expect("tables deliver");
        for w in path.windows(3) {
            deps.insert(((w[0], w[1]), (w[1], w[2])));
        }
    }
    deps
}

/// Every simple cycle of a directed graph, rotated to start at its smallest
/// vertex. Exponential; for small graphs only.
pub fn brute_cycles<T: Ord + Copy>(arcs: &BTreeSet<(T, T)>) -> BTreeSet<Vec<T>> {
    let mut succ: BTreeMap<T, Vec<T>> = BTreeMap::new();
    for &(a, b) in arcs {
        succ.entry(a).or_default().push(b);
    }
    let mut cycles = BTreeSet::new();
    let starts: Vec<T> = succ.keys().copied().collect();
    for &s in &starts {
        let mut path = vec![s];
        extend(s, &succ, &mut path, &mut cycles);
    }
    cycles
}

fn extend<T: Ord + Copy>(s: T, succ: &BTreeMap<T, Vec<T>>, path: &mut Vec<T>, cycles: &mut BTreeSet<Vec<T>>) {
    let last = *path.last().unwrap();
    for &n in succ.get(&last).map(Vec::as_slice).unwrap_or(&[]) {
        if n == s {
            cycles.insert(path.clone());
        } else if n > s && !path.contains(&n) {
            path.push(n);
            extend(s, succ, path, cycles);
            path.pop();
        }
    }
}

/// Rotates a cycle so that it starts at its smallest element.
pub fn normalize<T: Ord + Copy>(cycle: &[T]) -> Vec<T> {
    let i = (0..cycle.len()).min_by_key(|&i| cycle[i]).unwrap_or(0);
    cycle[i..].iter().chain(&cycle[..i]).copied().collect()
}
