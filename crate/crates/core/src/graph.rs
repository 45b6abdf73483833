// SPDX-License-Identifier: Apache-2.0

//! Directed weighted application graphs (ACGs).
//!
//! Nodes are cores identified by positive integers with an optional floorplan
//! position; edges are directed and carry a communication volume (bits) and a
//! bandwidth requirement (bits/s). Bidirectional traffic is two edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

pub type NodeId = u32;

/// An ordered `(src, dst)` pair.
pub type EdgeKey = (NodeId, NodeId);

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EdgeWeight {
    /// Bits exchanged per communication instance.
    pub volume: f64,
    /// Required bandwidth in bits/s.
    pub bandwidth: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node id must be >= 1, got {0}")]
    InvalidNodeId(i64),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge {src} -> {dst}: {what} must be finite and non-negative, got {value}")]
    InvalidWeight {
        src: NodeId,
        dst: NodeId,
        what: &'static str,
        value: f64,
    },
    #[error("position of node {0} is not finite")]
    InvalidPosition(NodeId),
    #[error("edge {0} -> {1} is not in the graph")]
    MissingEdge(NodeId, NodeId),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl ParseError {
    pub(crate) fn syntax(line: usize, msg: impl Into<String>) -> Self {
        ParseError {
            line,
            kind: ParseErrorKind::Syntax(msg.into()),
        }
    }

    pub(crate) fn graph(line: usize, err: GraphError) -> Self {
        ParseError {
            line,
            kind: ParseErrorKind::Graph(err),
        }
    }
}

/// A canonically sorted set of directed edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EdgeSet(BTreeSet<EdgeKey>);

impl EdgeSet {
    pub fn new() -> Self {
        EdgeSet(BTreeSet::new())
    }

    /// Returns `false` if the edge was already present.
    pub fn insert(&mut self, e: EdgeKey) -> bool {
        self.0.insert(e)
    }

    pub fn contains(&self, e: &EdgeKey) -> bool {
        self.0.contains(e)
    }

    pub fn remove(&mut self, e: &EdgeKey) -> bool {
        self.0.remove(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &EdgeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn difference(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet(self.0.union(&other.0).copied().collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &EdgeKey> + '_ {
        self.0.iter()
    }

    /// Edges in canonical (lexicographic) order.
    pub fn to_vec(&self) -> Vec<EdgeKey> {
        self.0.iter().copied().collect()
    }
}

impl FromIterator<EdgeKey> for EdgeSet {
    fn from_iter<I: IntoIterator<Item = EdgeKey>>(iter: I) -> Self {
        EdgeSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a EdgeSet {
    type Item = &'a EdgeKey;
    type IntoIter = std::collections::btree_set::Iter<'a, EdgeKey>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Application characterization graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Acg {
    nodes: BTreeMap<NodeId, Option<Position>>,
    edges: BTreeMap<EdgeKey, EdgeWeight>,
}

impl Acg {
    pub fn new() -> Self {
        Acg::default()
    }

    pub fn add_node(&mut self, id: NodeId, pos: Option<Position>) -> Result<(), GraphError> {
        if id == 0 {
            return Err(GraphError::InvalidNodeId(0));
        }
        if let Some(p) = pos {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(GraphError::InvalidPosition(id));
            }
        }
        if self.nodes.insert(id, pos).is_some() {
            return Err(GraphError::DuplicateNode(id));
        }
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        src: NodeId,
        dst: NodeId,
        volume: f64,
        bandwidth: f64,
    ) -> Result<(), GraphError> {
        for n in [src, dst] {
            if !self.nodes.contains_key(&n) {
                return Err(GraphError::UnknownNode(n));
            }
        }
        if src == dst {
            return Err(GraphError::SelfLoop(src));
        }
        for (what, value) in [("volume", volume), ("bandwidth", bandwidth)] {
            if !value.is_finite() || value < 0.0 {
                return Err(GraphError::InvalidWeight {
                    src,
                    dst,
                    what,
                    value,
                });
            }
        }
        if self.edges.contains_key(&(src, dst)) {
            return Err(GraphError::DuplicateEdge(src, dst));
        }
        self.edges
            .insert((src, dst), EdgeWeight { volume, bandwidth });
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Option<Position>)> + '_ {
        self.nodes.iter().map(|(&id, &p)| (id, p))
    }

    pub fn position(&self, id: NodeId) -> Option<Position> {
        self.nodes.get(&id).copied().flatten()
    }

    /// Edges in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = (EdgeKey, EdgeWeight)> + '_ {
        self.edges.iter().map(|(&k, &w)| (k, w))
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeWeight> {
        self.edges.get(&(src, dst)).copied()
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.edges.contains_key(&(src, dst))
    }

    pub fn edge_set(&self) -> EdgeSet {
        self.edges.keys().copied().collect()
    }

    /// True when every node carries a floorplan position.
    pub fn fully_placed(&self) -> bool {
        self.nodes.values().all(Option::is_some)
    }

    /// Same nodes, with the edges in `s` taken out. Isolated nodes stay.
    pub fn remove_edges(&self, s: &EdgeSet) -> Result<Acg, GraphError> {
        if let Some(&(a, b)) = s.iter().find(|e| !self.edges.contains_key(e)) {
            return Err(GraphError::MissingEdge(a, b));
        }
        let edges = self
            .edges
            .iter()
            .filter(|(k, _)| !s.contains(k))
            .map(|(&k, &w)| (k, w))
            .collect();
        Ok(Acg {
            nodes: self.nodes.clone(),
            edges,
        })
    }

    /// Longest shortest-path hop count over all ordered node pairs, or `None`
    /// (infinite) when some pair is unreachable.
    pub fn diameter(&self, treat_as_undirected: bool) -> Option<u32> {
        let index: BTreeMap<NodeId, usize> =
            self.nodes.keys().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in self.edges.keys() {
            adj[index[&a]].push(index[&b]);
            if treat_as_undirected {
                adj[index[&b]].push(index[&a]);
            }
        }
        hop_diameter(&adj)
    }

    /// Parses the line-oriented ACG text format.
    pub fn parse(text: &str) -> Result<Acg, ParseError> {
        let mut declared: Option<(usize, usize)> = None;
        let mut g = Acg::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok[0] {
                "acg" => {
                    if declared.is_some() {
                        return Err(ParseError::syntax(line_no, "repeated `acg` header"));
                    }
                    if tok.len() != 2 {
                        return Err(ParseError::syntax(line_no, "expected `acg <node_count>`"));
                    }
                    declared = Some((parse_usize(tok[1], line_no)?, line_no));
                }
                kw if declared.is_none() => {
                    return Err(ParseError::syntax(
                        line_no,
                        format!("expected `acg` header before `{kw}`"),
                    ));
                }
                "node" => {
                    if tok.len() != 4 {
                        return Err(ParseError::syntax(line_no, "expected `node <id> <x> <y>`"));
                    }
                    let id = parse_node_id(tok[1], line_no)?;
                    let pos = match (tok[2], tok[3]) {
                        ("-", "-") => None,
                        (x, y) => Some(Position::new(
                            parse_f64(x, line_no)?,
                            parse_f64(y, line_no)?,
                        )),
                    };
                    g.add_node(id, pos)
                        .map_err(|e| ParseError::graph(line_no, e))?;
                }
                "edge" => {
                    if tok.len() != 5 {
                        return Err(ParseError::syntax(
                            line_no,
                            "expected `edge <src> <dst> <volume> <bandwidth>`",
                        ));
                    }
                    let src = parse_node_id(tok[1], line_no)?;
                    let dst = parse_node_id(tok[2], line_no)?;
                    let vol = parse_f64(tok[3], line_no)?;
                    let bw = parse_f64(tok[4], line_no)?;
                    g.add_edge(src, dst, vol, bw)
                        .map_err(|e| ParseError::graph(line_no, e))?;
                }
                other => {
                    return Err(ParseError::syntax(line_no, format!("unknown keyword `{other}`")))
                }
            }
        }
        match declared {
            None => Err(ParseError::syntax(1, "missing `acg <node_count>` header")),
            Some((n, line)) if n != g.node_count() => Err(ParseError::syntax(
                line,
                format!("header declares {n} nodes but {} were given", g.node_count()),
            )),
            Some(_) => Ok(g),
        }
    }

    /// Canonical text form: nodes ascending, edges lexicographic.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(out, "acg {}", self.nodes.len()).unwrap();
        for (id, pos) in self.nodes() {
            match pos {
                Some(p) => writeln!(out, "node {id} {} {}", p.x, p.y).unwrap(),
                None => writeln!(out, "node {id} - -").unwrap(),
            }
        }
        for ((s, d), w) in self.edges() {
            writeln!(out, "edge {s} {d} {} {}", w.volume, w.bandwidth).unwrap();
        }
        out
    }
}

impl fmt::Display for Acg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// BFS diameter over an adjacency list. `None` when some ordered pair is
/// unreachable.
pub(crate) fn hop_diameter(adj: &[Vec<usize>]) -> Option<u32> {
    let n = adj.len();
    let mut best = 0;
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for &d in &dist {
            if d == u32::MAX {
                return None;
            }
            best = best.max(d);
        }
    }
    Some(best)
}

pub(crate) fn parse_usize(tok: &str, line: usize) -> Result<usize, ParseError> {
    tok.parse()
        .map_err(|_| ParseError::syntax(line, format!("expected a non-negative integer, got `{tok}`")))
}

pub(crate) fn parse_node_id(tok: &str, line: usize) -> Result<NodeId, ParseError> {
    let v: i64 = tok
        .parse()
        .map_err(|_| ParseError::syntax(line, format!("expected a node id, got `{tok}`")))?;
    if v < 1 || v > NodeId::MAX as i64 {
        return Err(ParseError::graph(line, GraphError::InvalidNodeId(v)));
    }
    Ok(v as NodeId)
}

pub(crate) fn parse_f64(tok: &str, line: usize) -> Result<f64, ParseError> {
    tok.parse()
        .map_err(|_| ParseError::syntax(line, format!("expected a number, got `{tok}`")))
}
