// SPDX-License-Identifier: Apache-2.0

//! Energy cost of matches and of the remainder graph.

use std::collections::BTreeMap;

use super::DecomposeError;
use crate::energy::EnergyModel;
use crate::graph::{Acg, EdgeKey, EdgeSet, NodeId};
use crate::iso::{verify_match, Match};
use crate::library::{CommPrimitive, Library};

/// Per-link volume carried by a match: for each implementation link, the
/// largest volume among the covered ACG edges whose internal route crosses
/// it (zero for links no route uses).
pub(crate) fn link_volumes(
    p: &CommPrimitive,
    g: &Acg,
    mapping: &[NodeId],
) -> BTreeMap<(usize, usize), f64> {
    let mut vols: BTreeMap<(usize, usize), f64> =
        p.implementation.iter().map(|&l| (l, 0.0)).collect();
    for (&(s, d), route) in &p.routes {
        let Some(w) = g.edge(mapping[s - 1], mapping[d - 1]) else {
            continue;
        };
        for hop in route.windows(2) {
            let key = (hop[0].min(hop[1]), hop[0].max(hop[1]));
            if let Some(v) = vols.get_mut(&key) {
                *v = v.max(w.volume);
            }
        }
    }
    vols
}

/// Cost of a mapping without validity checks; shared by [`match_cost`] and
/// the search's preference between automorphic mappings.
pub(crate) fn mapping_cost(p: &CommPrimitive, g: &Acg, em: &EnergyModel, mapping: &[NodeId]) -> f64 {
    link_volumes(p, g, mapping)
        .into_iter()
        .map(|((a, b), vol)| {
            let len = em
                .link_length(g, mapping[a - 1], mapping[b - 1])
                .unwrap_or(em.default_link_mm);
            em.e_bit_unchecked(len) * vol
        })
        .sum()
}

/// Energy of one match: each implementation link of the primitive, placed
/// between the mapped host nodes, costs `E_bit(length) * v` where `v` is the
/// volume the link carries.
pub fn match_cost(m: &Match, g: &Acg, lib: &Library, em: &EnergyModel) -> Result<f64, DecomposeError> {
    let p = lib.get(m.primitive_id)?;
    if !verify_match(g, p, m) {
        return Err(DecomposeError::InvalidMatch(m.primitive_id));
    }
    Ok(mapping_cost(p, g, em, &m.mapping))
}

/// Cost of realizing one edge as a dedicated point-to-point link.
pub(crate) fn remainder_edge_cost(g: &Acg, em: &EnergyModel, (s, d): EdgeKey) -> f64 {
    let vol = g.edge(s, d).map_or(0.0, |w| w.volume);
    let len = em.link_length(g, s, d).unwrap_or(em.default_link_mm);
    em.lambda * em.e_bit_unchecked(len) * vol
}

/// `sum over r of lambda * E_bit(distance) * volume`.
pub fn remainder_cost(r: &EdgeSet, g: &Acg, em: &EnergyModel) -> Result<f64, DecomposeError> {
    if let Some(&(a, b)) = r.iter().find(|(a, b)| !g.has_edge(*a, *b)) {
        return Err(DecomposeError::EdgeNotInGraph(a, b));
    }
    Ok(r.iter().map(|&e| remainder_edge_cost(g, em, e)).sum())
}

/// Cheapest way each edge could possibly be paid for: either as a remainder
/// link or as an equal share of some match that covers it.
pub(crate) fn edge_floors(g: &Acg, em: &EnergyModel, candidates: &[(EdgeSet, f64)]) -> BTreeMap<EdgeKey, f64> {
    let mut floor: BTreeMap<EdgeKey, f64> = g
        .edges()
        .map(|(e, _)| (e, remainder_edge_cost(g, em, e)))
        .collect();
    for (covered, cost) in candidates {
        let share = cost / covered.len().max(1) as f64;
        for e in covered.iter() {
            if let Some(f) = floor.get_mut(e) {
                *f = f.min(share);
            }
        }
    }
    floor
}

/// Admissible lower bound on the cost of completing a decomposition whose
/// uncovered edges are `r`, given the matches still on offer.
///
/// Every completion pays for each edge either as remainder or as part of one
/// match; splitting each match's cost evenly over the edges it covers and
/// taking the cheapest option per edge never overestimates.
pub fn lower_bound(
    r: &EdgeSet,
    g: &Acg,
    lib: &Library,
    em: &EnergyModel,
    matches: &[Match],
) -> Result<f64, DecomposeError> {
    let mut cands = Vec::with_capacity(matches.len());
    for m in matches {
        cands.push((m.covered.clone(), match_cost(m, g, lib, em)?));
    }
    let floor = edge_floors(g, em, &cands);
    r.iter()
        .map(|e| floor.get(e).copied().ok_or(DecomposeError::EdgeNotInGraph(e.0, e.1)))
        .sum()
}
