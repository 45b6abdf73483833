// SPDX-License-Identifier: Apache-2.0

//! Architecture synthesis from a decomposition.
//!
//! Every match instantiates its primitive's implementation links on the mapped
//! host nodes, every remainder edge becomes a dedicated link, and identical
//! links merge. Routing tables fall out of the primitives' internal routes.

mod archfile;
pub mod deadlock;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::decompose::{check_reconstruction, Decomposition};
use crate::energy::{EnergyError, EnergyModel};
use crate::graph::{Acg, EdgeKey, NodeId, Position};
use crate::library::{Library, LibraryError};

pub use archfile::{parse_arch_file, write_arch_file};
pub use deadlock::{detect_deadlock, Channel, DeadlockReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("decomposition does not match the ACG: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("route {src}->{dst} uses missing link {a}-{b}")]
    MissingLink {
        src: NodeId,
        dst: NodeId,
        a: NodeId,
        b: NodeId,
    },
    #[error("node {node} has no route towards {dst}")]
    NoRoute { node: NodeId, dst: NodeId },
    #[error("routing loop from {src} towards {dst}")]
    RoutingLoop { src: NodeId, dst: NodeId },
}

/// What caused a link to be built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum LinkSource {
    /// Index into `Decomposition::matches`.
    Match(usize),
    Remainder,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    /// bits/s
    pub capacity: f64,
    pub length_mm: f64,
    /// Aggregated bandwidth requirement of all ACG edges routed over the link.
    pub demand: f64,
    pub origin: Vec<LinkSource>,
}

/// Physical network: nodes plus undirected links keyed by `(min, max)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Architecture {
    nodes: BTreeMap<NodeId, Option<Position>>,
    links: BTreeMap<(NodeId, NodeId), Link>,
}

fn norm(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl Architecture {
    pub fn new() -> Self {
        Architecture::default()
    }

    pub fn add_node(&mut self, id: NodeId, pos: Option<Position>) {
        self.nodes.insert(id, pos);
    }

    /// Adds a link, or merges into an existing one between the same nodes.
    pub fn add_link(&mut self, a: NodeId, b: NodeId, capacity: f64, length_mm: f64) -> &mut Link {
        let key = norm(a, b);
        let link = self.links.entry(key).or_insert_with(|| Link {
            a: key.0,
            b: key.1,
            capacity: 0.0,
            length_mm,
            demand: 0.0,
            origin: Vec::new(),
        });
        link.capacity = link.capacity.max(capacity);
        link
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Option<Position>)> + '_ {
        self.nodes.iter().map(|(&n, &p)| (n, p))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> + '_ {
        self.links.values()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.links.get(&norm(a, b))
    }

    pub fn has_link(&self, a: NodeId, b: NodeId) -> bool {
        self.links.contains_key(&norm(a, b))
    }

    /// Neighbors in ascending order.
    pub fn neighbors(&self, n: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .links
            .keys()
            .filter_map(|&(a, b)| {
                if a == n {
                    Some(b)
                } else if b == n {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Hop diameter of the link graph, `None` if disconnected.
    pub fn diameter(&self) -> Option<u32> {
        let index: BTreeMap<NodeId, usize> =
            self.nodes.keys().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in self.links.keys() {
            adj[index[&a]].push(index[&b]);
            adj[index[&b]].push(index[&a]);
        }
        crate::graph::hop_diameter(&adj)
    }

    pub fn total_wire_mm(&self) -> f64 {
        self.links.values().map(|l| l.length_mm).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SynthOptions {
    /// Capacity given to every link before demand is aggregated.
    pub default_link_capacity: f64,
}

/// One ACG edge and the host path its traffic takes.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutedEdge {
    pub edge: EdgeKey,
    pub path: Vec<NodeId>,
    pub source: LinkSource,
}

/// Host paths for every ACG edge: covered edges follow their primitive's
/// internal route, remainder edges go direct. Matches come first, in order.
pub fn routed_edges(d: &Decomposition, lib: &Library) -> Result<Vec<RoutedEdge>, SynthError> {
    let mut out = Vec::new();
    for (i, m) in d.matches.iter().enumerate() {
        let p = lib.get(m.primitive_id)?;
        for &(a, b) in &p.representation {
            let route = p.route_lookup(a, b)?;
            out.push(RoutedEdge {
                edge: (m.host(a), m.host(b)),
                path: route.iter().map(|&v| m.host(v)).collect(),
                source: LinkSource::Match(i),
            });
        }
    }
    for &(s, t) in d.remainder.iter() {
        out.push(RoutedEdge {
            edge: (s, t),
            path: vec![s, t],
            source: LinkSource::Remainder,
        });
    }
    Ok(out)
}

/// Mapped bandwidth demand per undirected host link.
pub fn link_demands(
    d: &Decomposition,
    g: &Acg,
    lib: &Library,
) -> Result<BTreeMap<(NodeId, NodeId), f64>, SynthError> {
    let mut demand = BTreeMap::new();
    for r in routed_edges(d, lib)? {
        let bw = g
            .edge(r.edge.0, r.edge.1)
            .ok_or_else(|| SynthError::Inconsistent(format!("edge {:?} not in ACG", r.edge)))?
            .bandwidth;
        for w in r.path.windows(2) {
            *demand.entry(norm(w[0], w[1])).or_insert(0.0) += bw;
        }
    }
    Ok(demand)
}

/// Builds the architecture for a decomposition of `g`.
pub fn glue(
    d: &Decomposition,
    g: &Acg,
    lib: &Library,
    em: &EnergyModel,
    opts: &SynthOptions,
) -> Result<Architecture, SynthError> {
    check_reconstruction(d, g, lib).map_err(SynthError::Inconsistent)?;
    let mut arch = Architecture::new();
    for (id, pos) in g.nodes() {
        arch.add_node(id, pos);
    }
    let mut add = |a: NodeId, b: NodeId, src: LinkSource| -> Result<(), SynthError> {
        let len = em.link_length(g, a, b)?;
        let link = arch.add_link(a, b, opts.default_link_capacity, len);
        if !link.origin.contains(&src) {
            link.origin.push(src);
        }
        Ok(())
    };
    for (i, m) in d.matches.iter().enumerate() {
        let p = lib.get(m.primitive_id)?;
        for &(a, b) in &p.implementation {
            add(m.host(a), m.host(b), LinkSource::Match(i))?;
        }
    }
    for &(s, t) in d.remainder.iter() {
        add(s, t, LinkSource::Remainder)?;
    }
    for (key, demand) in link_demands(d, g, lib)? {
        if let Some(link) = arch.links.get_mut(&key) {
            link.demand = demand;
            link.capacity = link.capacity.max(demand);
        }
    }
    Ok(arch)
}

/// Destination-based next-hop tables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RoutingTables {
    tables: BTreeMap<NodeId, BTreeMap<NodeId, NodeId>>,
    /// Entries that a later route wanted to set differently and were kept.
    pub conflicts: usize,
}

impl RoutingTables {
    pub fn new() -> Self {
        RoutingTables::default()
    }

    /// Sets an entry unless one already exists. Returns `false` on conflict.
    pub fn insert(&mut self, node: NodeId, dst: NodeId, next: NodeId) -> bool {
        let entry = self.tables.entry(node).or_default();
        match entry.get(&dst) {
            Some(&cur) if cur != next => {
                self.conflicts += 1;
                false
            }
            Some(_) => true,
            None => {
                entry.insert(dst, next);
                true
            }
        }
    }

    pub fn next_hop(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.tables.get(&node).and_then(|t| t.get(&dst)).copied()
    }

    /// All `(node, dst, next_hop)` entries in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, NodeId, NodeId)> + '_ {
        self.tables
            .iter()
            .flat_map(|(&n, t)| t.iter().map(move |(&d, &h)| (n, d, h)))
    }

    pub fn len(&self) -> usize {
        self.tables.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Follows next hops from `src` to `dst`; the returned path includes both
    /// endpoints.
    pub fn walk(&self, src: NodeId, dst: NodeId) -> Result<Vec<NodeId>, SynthError> {
        let mut path = vec![src];
        let mut cur = src;
        while cur != dst {
            let next = self
                .next_hop(cur, dst)
                .ok_or(SynthError::NoRoute { node: cur, dst })?;
            if path.contains(&next) {
                return Err(SynthError::RoutingLoop { src, dst });
            }
            path.push(next);
            cur = next;
        }
        Ok(path)
    }
}

/// Next-hop tables for every ACG edge of a decomposition.
///
/// Paths are written back to front with first-writer-wins, so every entry
/// points at a node that already reaches the destination and the tables stay
/// loop-free even when routes disagree. Primitive routes are written before
/// remainder links, so they win conflicts.
pub fn build_routing_tables(
    a: &Architecture,
    d: &Decomposition,
    lib: &Library,
) -> Result<RoutingTables, SynthError> {
    let mut t = RoutingTables::new();
    for r in routed_edges(d, lib)? {
        let dst = r.edge.1;
        for w in r.path.windows(2).rev() {
            if !a.has_link(w[0], w[1]) {
                return Err(SynthError::MissingLink {
                    src: r.edge.0,
                    dst,
                    a: w[0],
                    b: w[1],
                });
            }
            t.insert(w[0], dst, w[1]);
        }
    }
    Ok(t)
}
