// SPDX-License-Identifier: Apache-2.0

//! The communication library.
//!
//! Each primitive has a *representation* graph (the directed edge pattern
//! searched for in an ACG), an *implementation* graph (the undirected links
//! actually built when the primitive is used), a round schedule, and a fixed
//! internal route for every representation edge. Vertices are numbered
//! `1..=k`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{hop_diameter, parse_usize, ParseError};

pub type PrimitiveId = u32;

/// Structural class of a primitive, inferred from its representation graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PrimitiveKind {
    /// All ordered pairs: every vertex sends to every other.
    Gossip,
    /// A single root sends to every other vertex.
    Broadcast { root: usize },
    /// A directed cycle through all vertices.
    Loop,
    /// A directed Hamiltonian path.
    Path,
    Generic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommPrimitive {
    pub id: PrimitiveId,
    pub name: String,
    /// Vertex count; vertices are `1..=k`.
    pub k: usize,
    /// Directed edges, sorted.
    pub representation: Vec<(usize, usize)>,
    /// Undirected links stored as `(min, max)`, sorted.
    pub implementation: Vec<(usize, usize)>,
    /// Rounds of pairwise exchanges.
    pub schedule: Vec<Vec<(usize, usize)>>,
    /// Route for every representation edge, as a vertex path.
    pub routes: BTreeMap<(usize, usize), Vec<usize>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LibraryError {
    #[error("primitive {name}: ({src}, {dst}) is not a representation edge")]
    NotARepresentationEdge { name: String, src: usize, dst: usize },
    #[error("library ids must run 1..=n in listing order; position {position} has id {id}")]
    NonContiguousIds { position: usize, id: PrimitiveId },
    #[error("duplicate primitive name `{0}`")]
    DuplicateName(String),
    #[error("unknown primitive id {0}")]
    UnknownPrimitive(PrimitiveId),
}

/// A broken primitive invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    VertexOutOfRange { vertex: usize },
    RouteMissing { src: usize, dst: usize },
    RouteEndpoints { src: usize, dst: usize },
    RouteNotAdjacent { src: usize, dst: usize, hop: (usize, usize) },
    RouteNotSimple { src: usize, dst: usize },
    RouteTooLong { src: usize, dst: usize, hops: usize, diameter: u32 },
    ImplementationDisconnected,
    ScheduledPairNotLinked { round: usize, pair: (usize, usize) },
    DoubleBooked { round: usize, vertex: usize },
    GossipIncomplete,
    BroadcastIncomplete,
    EdgeNeverExchanged { src: usize, dst: usize },
    ScheduleLength { expected: usize, actual: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            VertexOutOfRange { vertex } => write!(f, "vertex {vertex} out of range"),
            RouteMissing { src, dst } => write!(f, "no route for {src}->{dst}"),
            RouteEndpoints { src, dst } => {
                write!(f, "route for {src}->{dst} has wrong endpoints")
            }
            RouteNotAdjacent { src, dst, hop } => write!(
                f,
                "route for {src}->{dst} uses {}-{} which is not a link",
                hop.0, hop.1
            ),
            RouteNotSimple { src, dst } => write!(f, "route for {src}->{dst} revisits a vertex"),
            RouteTooLong {
                src,
                dst,
                hops,
                diameter,
            } => write!(
                f,
                "route for {src}->{dst} takes {hops} hops, implementation diameter is {diameter}"
            ),
            ImplementationDisconnected => write!(f, "implementation graph is disconnected"),
            ScheduledPairNotLinked { round, pair } => write!(
                f,
                "round {round}: ({}, {}) exchange without a link",
                pair.0, pair.1
            ),
            DoubleBooked { round, vertex } => write!(
                f,
                "round {round}: vertex {vertex} is in more than one transaction"
            ),
            GossipIncomplete => write!(f, "schedule does not complete gossip"),
            BroadcastIncomplete => write!(f, "schedule does not complete broadcast"),
            EdgeNeverExchanged { src, dst } => {
                write!(f, "representation edge {src}->{dst} is never exchanged")
            }
            ScheduleLength { expected, actual } => write!(
                f,
                "schedule has {actual} rounds, optimal is {expected}"
            ),
        }
    }
}

fn norm(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn ceil_log2(k: usize) -> usize {
    let mut rounds = 0;
    while (1usize << rounds) < k {
        rounds += 1;
    }
    rounds
}

impl CommPrimitive {
    /// Assembles a primitive. Representation edges without an explicit route
    /// get the shortest implementation path (lowest-numbered neighbor first).
    pub fn new(
        id: PrimitiveId,
        name: impl Into<String>,
        k: usize,
        representation: impl IntoIterator<Item = (usize, usize)>,
        implementation: impl IntoIterator<Item = (usize, usize)>,
        schedule: Vec<Vec<(usize, usize)>>,
        explicit_routes: impl IntoIterator<Item = Vec<usize>>,
    ) -> Self {
        let representation: Vec<_> = representation
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let implementation: Vec<_> = implementation
            .into_iter()
            .map(|(a, b)| norm(a, b))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut p = CommPrimitive {
            id,
            name: name.into(),
            k,
            representation,
            implementation,
            schedule,
            routes: BTreeMap::new(),
        };
        for r in explicit_routes {
            if let (Some(&s), Some(&d)) = (r.first(), r.last()) {
                p.routes.insert((s, d), r);
            }
        }
        let missing: Vec<_> = p
            .representation
            .iter()
            .filter(|e| !p.routes.contains_key(e))
            .copied()
            .collect();
        for (s, d) in missing {
            if let Some(path) = p.shortest_path(s, d) {
                p.routes.insert((s, d), path);
            }
        }
        p
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.k + 1];
        for &(a, b) in &self.implementation {
            if a <= self.k && b <= self.k {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for n in &mut adj {
            n.sort_unstable();
        }
        adj
    }

    fn shortest_path(&self, s: usize, d: usize) -> Option<Vec<usize>> {
        if s == 0 || d == 0 || s > self.k || d > self.k {
            return None;
        }
        let adj = self.adjacency();
        let mut prev = vec![usize::MAX; self.k + 1];
        prev[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if u == d {
                break;
            }
            for &v in &adj[u] {
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        if prev[d] == usize::MAX {
            return None;
        }
        let mut path = vec![d];
        let mut cur = d;
        while cur != s {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    pub fn kind(&self) -> PrimitiveKind {
        let k = self.k;
        let rep: BTreeSet<_> = self.representation.iter().copied().collect();
        if k >= 2 && rep.len() == k * (k - 1) {
            return PrimitiveKind::Gossip;
        }
        if k >= 2 && rep.len() == k - 1 {
            let root = self.representation[0].0;
            if (1..=k).filter(|&v| v != root).all(|v| rep.contains(&(root, v))) {
                return PrimitiveKind::Broadcast { root };
            }
        }
        let mut out = vec![0usize; k + 1];
        let mut inc = vec![0usize; k + 1];
        let mut next = vec![0usize; k + 1];
        for &(a, b) in &rep {
            if a > k || b > k || a == 0 || b == 0 {
                return PrimitiveKind::Generic;
            }
            out[a] += 1;
            inc[b] += 1;
            next[a] = b;
        }
        let walk_len = |start: usize| {
            let mut seen = vec![false; k + 1];
            let mut cur = start;
            let mut n = 0;
            while cur != 0 && !seen[cur] {
                seen[cur] = true;
                n += 1;
                cur = if out[cur] == 1 { next[cur] } else { 0 };
            }
            (n, cur)
        };
        if k >= 2 && rep.len() == k && (1..=k).all(|v| out[v] == 1 && inc[v] == 1) {
            let (n, _) = walk_len(1);
            if n == k {
                return PrimitiveKind::Loop;
            }
        }
        if k >= 2 && rep.len() == k - 1 {
            let starts: Vec<_> = (1..=k).filter(|&v| inc[v] == 0).collect();
            if starts.len() == 1 && (1..=k).all(|v| out[v] <= 1 && inc[v] <= 1) {
                let (n, _) = walk_len(starts[0]);
                if n == k {
                    return PrimitiveKind::Path;
                }
            }
        }
        PrimitiveKind::Generic
    }

    /// The stored internal route for a representation edge.
    pub fn route_lookup(&self, src: usize, dst: usize) -> Result<&[usize], LibraryError> {
        if self.representation.binary_search(&(src, dst)).is_err() {
            return Err(LibraryError::NotARepresentationEdge {
                name: self.name.clone(),
                src,
                dst,
            });
        }
        self.routes
            .get(&(src, dst))
            .map(Vec::as_slice)
            .ok_or_else(|| LibraryError::NotARepresentationEdge {
                name: self.name.clone(),
                src,
                dst,
            })
    }

    /// Hop diameter of the implementation graph, `None` if disconnected.
    pub fn implementation_diameter(&self) -> Option<u32> {
        let adj: Vec<Vec<usize>> = self
            .adjacency()
            .into_iter()
            .skip(1)
            .map(|n| n.into_iter().map(|v| v - 1).collect())
            .collect();
        hop_diameter(&adj)
    }

    pub fn has_link(&self, a: usize, b: usize) -> bool {
        self.implementation.binary_search(&norm(a, b)).is_ok()
    }

    /// Every broken invariant; empty when the primitive is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let k = self.k;
        let in_range = |x: usize| (1..=k).contains(&x);
        let mut flagged = BTreeSet::new();
        let edges = self
            .representation
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .chain(self.implementation.iter().flat_map(|&(a, b)| [a, b]));
        for x in edges {
            if !in_range(x) && flagged.insert(x) {
                v.push(Violation::VertexOutOfRange { vertex: x });
            }
        }

        let diameter = self.implementation_diameter();
        if diameter.is_none() {
            v.push(Violation::ImplementationDisconnected);
        }
        for &(s, d) in &self.representation {
            let Some(route) = self.routes.get(&(s, d)) else {
                v.push(Violation::RouteMissing { src: s, dst: d });
                continue;
            };
            if route.first() != Some(&s) || route.last() != Some(&d) {
                v.push(Violation::RouteEndpoints { src: s, dst: d });
            }
            if let Some(hop) = route
                .windows(2)
                .map(|w| (w[0], w[1]))
                .find(|&(a, b)| !self.has_link(a, b))
            {
                v.push(Violation::RouteNotAdjacent { src: s, dst: d, hop });
            }
            let distinct: BTreeSet<_> = route.iter().collect();
            if distinct.len() != route.len() {
                v.push(Violation::RouteNotSimple { src: s, dst: d });
            }
            let hops = route.len().saturating_sub(1);
            if let Some(diameter) = diameter {
                if hops > diameter as usize {
                    v.push(Violation::RouteTooLong {
                        src: s,
                        dst: d,
                        hops,
                        diameter,
                    });
                }
            }
        }

        for (i, round) in self.schedule.iter().enumerate() {
            let round_no = i + 1;
            let mut busy = BTreeSet::new();
            for &(a, b) in round {
                if !self.has_link(a, b) {
                    v.push(Violation::ScheduledPairNotLinked {
                        round: round_no,
                        pair: (a, b),
                    });
                }
                for x in [a, b] {
                    if !busy.insert(x) {
                        v.push(Violation::DoubleBooked {
                            round: round_no,
                            vertex: x,
                        });
                    }
                }
            }
        }

        match self.kind() {
            PrimitiveKind::Gossip => {
                if !gossip_completes(k, &self.schedule) {
                    v.push(Violation::GossipIncomplete);
                }
                self.check_schedule_length(&mut v);
            }
            PrimitiveKind::Broadcast { root } => {
                if !broadcast_completes(k, root, &self.schedule) {
                    v.push(Violation::BroadcastIncomplete);
                }
                self.check_schedule_length(&mut v);
            }
            _ => {
                let exchanged: BTreeSet<_> = self
                    .schedule
                    .iter()
                    .flatten()
                    .map(|&(a, b)| norm(a, b))
                    .collect();
                for &(s, d) in &self.representation {
                    if !exchanged.contains(&norm(s, d)) {
                        v.push(Violation::EdgeNeverExchanged { src: s, dst: d });
                    }
                }
            }
        }
        v
    }

    fn check_schedule_length(&self, v: &mut Vec<Violation>) {
        let expected = ceil_log2(self.k);
        if self.schedule.len() != expected {
            v.push(Violation::ScheduleLength {
                expected,
                actual: self.schedule.len(),
            });
        }
    }
}

/// Replays a schedule from singleton knowledge sets; returns each vertex's
/// knowledge after every round (index 0 is the initial state).
pub fn replay_knowledge(k: usize, schedule: &[Vec<(usize, usize)>]) -> Vec<Vec<BTreeSet<usize>>> {
    let mut know: Vec<BTreeSet<usize>> = (0..=k).map(|v| BTreeSet::from([v])).collect();
    know[0].clear();
    let mut history = vec![know.clone()];
    for round in schedule {
        let before = know.clone();
        for &(a, b) in round {
            if a > k || b > k {
                continue;
            }
            let merged: BTreeSet<usize> = before[a].union(&before[b]).copied().collect();
            know[a].extend(merged.iter().copied());
            know[b].extend(merged);
        }
        history.push(know.clone());
    }
    history
}

fn gossip_completes(k: usize, schedule: &[Vec<(usize, usize)>]) -> bool {
    let last = replay_knowledge(k, schedule).pop().unwrap_or_default();
    (1..=k).all(|v| last[v].len() == k)
}

fn broadcast_completes(k: usize, root: usize, schedule: &[Vec<(usize, usize)>]) -> bool {
    let last = replay_knowledge(k, schedule).pop().unwrap_or_default();
    (1..=k).all(|v| last[v].contains(&root))
}

/// Greedy round assignment for direct-delivery primitives: each
/// representation edge's link is exchanged once, no vertex twice per round.
fn direct_schedule(edges: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut rounds: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut seen = BTreeSet::new();
    for &(a, b) in edges {
        if !seen.insert(norm(a, b)) {
            continue;
        }
        let slot = rounds
            .iter()
            .position(|r| r.iter().all(|&(x, y)| x != a && x != b && y != a && y != b));
        match slot {
            Some(i) => rounds[i].push((a, b)),
            None => rounds.push(vec![(a, b)]),
        }
    }
    rounds
}

fn loop_primitive(id: PrimitiveId, k: usize) -> CommPrimitive {
    let rep: Vec<_> = (1..=k).map(|i| (i, i % k + 1)).collect();
    let schedule = direct_schedule(&rep);
    CommPrimitive::new(id, format!("L{k}"), k, rep.clone(), rep, schedule, [])
}

fn path_primitive(id: PrimitiveId, k: usize) -> CommPrimitive {
    let rep: Vec<_> = (1..k).map(|i| (i, i + 1)).collect();
    let schedule = direct_schedule(&rep);
    CommPrimitive::new(id, format!("P{k}"), k, rep.clone(), rep, schedule, [])
}

/// An ordered set of primitives with ids `1..=n` in listing order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Library {
    primitives: Vec<CommPrimitive>,
}

impl Library {
    pub fn new(primitives: Vec<CommPrimitive>) -> Result<Self, LibraryError> {
        let mut names = BTreeSet::new();
        for (i, p) in primitives.iter().enumerate() {
            if p.id as usize != i + 1 {
                return Err(LibraryError::NonContiguousIds {
                    position: i + 1,
                    id: p.id,
                });
            }
            if !names.insert(p.name.clone()) {
                return Err(LibraryError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Library { primitives })
    }

    /// The built-in library: gossip and broadcast graphs plus small loops
    /// and paths.
    pub fn builtin() -> Self {
        let c4 = [(1, 2), (2, 4), (4, 3), (3, 1)];
        let all_pairs_4: Vec<_> = (1..=4)
            .flat_map(|a| (1..=4).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect();
        let mgg4 = CommPrimitive::new(
            1,
            "MGG4",
            4,
            all_pairs_4,
            c4,
            vec![vec![(1, 3), (2, 4)], vec![(1, 2), (3, 4)]],
            [
                vec![1, 3, 4],
                vec![4, 3, 1],
                vec![2, 4, 3],
                vec![3, 4, 2],
            ],
        );
        let g123 = CommPrimitive::new(
            2,
            "G123",
            4,
            [(1, 2), (1, 3), (1, 4)],
            c4,
            vec![vec![(1, 3)], vec![(1, 2), (3, 4)]],
            [vec![1, 3, 4]],
        );
        let g124 = CommPrimitive::new(
            3,
            "G124",
            5,
            [(1, 2), (1, 3), (1, 4), (1, 5)],
            [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1)],
            vec![vec![(1, 2)], vec![(1, 5), (2, 3)], vec![(3, 4)]],
            [],
        );
        Library {
            primitives: vec![
                mgg4,
                g123,
                g124,
                loop_primitive(4, 3),
                loop_primitive(5, 4),
                loop_primitive(6, 5),
                path_primitive(7, 3),
                path_primitive(8, 4),
            ],
        }
    }

    pub fn get(&self, id: PrimitiveId) -> Result<&CommPrimitive, LibraryError> {
        id.checked_sub(1)
            .and_then(|i| self.primitives.get(i as usize))
            .ok_or(LibraryError::UnknownPrimitive(id))
    }

    pub fn by_name(&self, name: &str) -> Option<&CommPrimitive> {
        self.primitives.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CommPrimitive> + '_ {
        self.primitives.iter()
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Largest implementation diameter in the library.
    pub fn max_diameter(&self) -> Option<u32> {
        self.primitives
            .iter()
            .map(|p| p.implementation_diameter())
            .try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }

    /// Violations per primitive, only for primitives that have any.
    pub fn validate(&self) -> Vec<(PrimitiveId, Vec<Violation>)> {
        self.primitives
            .iter()
            .map(|p| (p.id, p.validate()))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }

    /// Parses a library file:
    /// `prim <id> <name> <k>`, `rep <s> <d>`, `impl <a> <b>`,
    /// `round <i> <a> <b>`, `route <s> <d> <v1> ... <vn>`.
    ///
    /// Adjacent representation edges may omit their `route` line.
    pub fn parse(text: &str) -> Result<Library, ParseError> {
        struct Draft {
            id: PrimitiveId,
            name: String,
            k: usize,
            rep: Vec<(usize, usize)>,
            imp: Vec<(usize, usize)>,
            rounds: BTreeMap<usize, Vec<(usize, usize)>>,
            routes: Vec<Vec<usize>>,
        }
        let mut drafts: Vec<Draft> = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let nums = |from: usize| -> Result<Vec<usize>, ParseError> {
                tok[from..].iter().map(|t| parse_usize(t, line_no)).collect()
            };
            if tok[0] == "prim" {
                if tok.len() != 4 {
                    return Err(ParseError::syntax(line_no, "expected `prim <id> <name> <k>`"));
                }
                let id = parse_usize(tok[1], line_no)? as PrimitiveId;
                drafts.push(Draft {
                    id,
                    name: tok[2].to_string(),
                    k: parse_usize(tok[3], line_no)?,
                    rep: Vec::new(),
                    imp: Vec::new(),
                    rounds: BTreeMap::new(),
                    routes: Vec::new(),
                });
                continue;
            }
            let Some(cur) = drafts.last_mut() else {
                return Err(ParseError::syntax(line_no, "expected `prim` before primitive data"));
            };
            match tok[0] {
                "rep" | "impl" => {
                    let v = nums(1)?;
                    if v.len() != 2 {
                        return Err(ParseError::syntax(line_no, format!("expected `{} <a> <b>`", tok[0])));
                    }
                    if tok[0] == "rep" {
                        cur.rep.push((v[0], v[1]));
                    } else {
                        cur.imp.push((v[0], v[1]));
                    }
                }
                "round" => {
                    let v = nums(1)?;
                    if v.len() != 3 || v[0] == 0 {
                        return Err(ParseError::syntax(line_no, "expected `round <i> <a> <b>` with i >= 1"));
                    }
                    cur.rounds.entry(v[0]).or_default().push((v[1], v[2]));
                }
                "route" => {
                    let v = nums(1)?;
                    if v.len() < 4 {
                        return Err(ParseError::syntax(line_no, "expected `route <s> <d> <v1> ... <vn>`"));
                    }
                    if v[2] != v[0] || v[v.len() - 1] != v[1] {
                        return Err(ParseError::syntax(line_no, "route path must start at <s> and end at <d>"));
                    }
                    cur.routes.push(v[2..].to_vec());
                }
                other => {
                    return Err(ParseError::syntax(line_no, format!("unknown keyword `{other}`")))
                }
            }
        }
        let prims = drafts
            .into_iter()
            .map(|d| {
                let rounds = match d.rounds.keys().next_back() {
                    Some(&max) => (1..=max)
                        .map(|i| d.rounds.get(&i).cloned().unwrap_or_default())
                        .collect(),
                    None => Vec::new(),
                };
                CommPrimitive::new(d.id, d.name, d.k, d.rep, d.imp, rounds, d.routes)
            })
            .collect();
        Library::new(prims).map_err(|e| ParseError::syntax(last_line, e.to_string()))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for p in &self.primitives {
            writeln!(out, "prim {} {} {}", p.id, p.name, p.k).unwrap();
            for (s, d) in &p.representation {
                writeln!(out, "rep {s} {d}").unwrap();
            }
            for (a, b) in &p.implementation {
                writeln!(out, "impl {a} {b}").unwrap();
            }
            for (i, round) in p.schedule.iter().enumerate() {
                for (a, b) in round {
                    writeln!(out, "round {} {a} {b}", i + 1).unwrap();
                }
            }
            for ((s, d), path) in &p.routes {
                let path: Vec<String> = path.iter().map(|v| v.to_string()).collect();
                writeln!(out, "route {s} {d} {}", path.join(" ")).unwrap();
            }
        }
        out
    }
}
