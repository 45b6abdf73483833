// SPDX-License-Identifier: Apache-2.0

//! Text format for a synthesized architecture and its routing tables:
//!
//! ```text
//! arch <n>
//! node <id> <x> <y>            # `- -` when unplaced
//! link <a> <b> <capacity> <length_mm>
//! route <node> <dst> <next_hop>
//! ```

use std::fmt::Write as _;

use super::{Architecture, RoutingTables};
use crate::graph::{parse_f64, parse_node_id, parse_usize, ParseError, Position};

pub fn write_arch_file(a: &Architecture, t: &RoutingTables) -> String {
    let mut out = String::new();
    writeln!(out, "arch {}", a.node_count()).unwrap();
    for (id, pos) in a.nodes() {
        match pos {
            Some(p) => writeln!(out, "node {id} {} {}", p.x, p.y).unwrap(),
            None => writeln!(out, "node {id} - -").unwrap(),
        }
    }
    for l in a.links() {
        writeln!(out, "link {} {} {} {}", l.a, l.b, l.capacity, l.length_mm).unwrap();
    }
    for (n, d, h) in t.entries() {
        writeln!(out, "route {n} {d} {h}").unwrap();
    }
    out
}

/// Parses an architecture file. Link origins and demands are not stored in
/// the file and come back empty.
pub fn parse_arch_file(text: &str) -> Result<(Architecture, RoutingTables), ParseError> {
    let mut arch = Architecture::new();
    let mut tables = RoutingTables::new();
    let mut declared = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let want = |n: usize, form: &str| {
            if tok.len() == n {
                Ok(())
            } else {
                Err(ParseError::syntax(line_no, format!("expected `{form}`")))
            }
        };
        match tok[0] {
            "arch" => {
                want(2, "arch <n>")?;
                declared = Some((parse_usize(tok[1], line_no)?, line_no));
            }
            _ if declared.is_none() => {
                return Err(ParseError::syntax(line_no, "expected `arch` header"));
            }
            "node" => {
                want(4, "node <id> <x> <y>")?;
                let id = parse_node_id(tok[1], line_no)?;
                if arch.contains_node(id) {
                    return Err(ParseError::syntax(line_no, format!("duplicate node {id}")));
                }
                let pos = match (tok[2], tok[3]) {
                    ("-", "-") => None,
                    (x, y) => Some(Position::new(parse_f64(x, line_no)?, parse_f64(y, line_no)?)),
                };
                arch.add_node(id, pos);
            }
            "link" => {
                want(5, "link <a> <b> <capacity> <length_mm>")?;
                let a = parse_node_id(tok[1], line_no)?;
                let b = parse_node_id(tok[2], line_no)?;
                for n in [a, b] {
                    if !arch.contains_node(n) {
                        return Err(ParseError::syntax(line_no, format!("unknown node {n}")));
                    }
                }
                let cap = parse_f64(tok[3], line_no)?;
                let len = parse_f64(tok[4], line_no)?;
                arch.add_link(a, b, cap, len);
            }
            "route" => {
                want(4, "route <node> <dst> <next_hop>")?;
                let n = parse_node_id(tok[1], line_no)?;
                let d = parse_node_id(tok[2], line_no)?;
                let h = parse_node_id(tok[3], line_no)?;
                if !arch.has_link(n, h) {
                    return Err(ParseError::syntax(line_no, format!("no link {n}-{h}")));
                }
                if !tables.insert(n, d, h) {
                    return Err(ParseError::syntax(line_no, format!("conflicting route {n}->{d}")));
                }
            }
            other => {
                return Err(ParseError::syntax(line_no, format!("unknown keyword `{other}`")))
            }
        }
    }
    match declared {
        None => Err(ParseError::syntax(1, "missing `arch` header")),
        Some((n, line)) if n != arch.node_count() => Err(ParseError::syntax(
            line,
            format!("header declares {n} nodes, found {}", arch.node_count()),
        )),
        Some(_) => Ok((arch, tables)),
    }
}
