// SPDX-License-Identifier: Apache-2.0

//! Branch-and-bound covering of an ACG by library primitives.
//!
//! A decomposition is a set of edge-disjoint matches plus a remainder graph
//! that together reproduce the ACG edge set exactly. Its cost is the sum of
//! the match costs plus the remainder cost, and the search returns the
//! cheapest decomposition that satisfies the bandwidth and bisection
//! constraints.
//!
//! Matches in a shrinking graph are exactly the matches of the original graph
//! whose covered edges are all still uncovered (matching is non-induced), so
//! candidates are enumerated once up front and filtered during the search.
//!
//! Both searches branch on the first undecided edge in sorted edge order:
//! one of the still-compatible matches covering it, or the remainder. The
//! bound charges every undecided edge the cheapest of its remainder cost and
//! its portion of any match still available to it.
//!
//! Without constraints the cheapest completion depends only on the set of
//! undecided edges. That search memoizes by this set and solves groups of
//! edges that no available match links together separately. Portions come
//! from two splits of each match cost: even shares, and a split optimized
//! once for the whole graph by a linear program. The larger sum is used.
//! Large undecided sets first solve the covering relaxation; an integral
//! answer that partitions the set is taken as is, otherwise the search
//! branches on the most fractional edge. Once the optimum is known, the
//! winning decomposition is rebuilt edge by edge.
//!
//! With constraints the search is a plain depth-first branch and bound
//! seeded by a greedy cover, and every improving leaf is checked against the
//! glued architecture.
//!
//! Among equal-cost optima the one first in branch order wins: compare the
//! per-edge choice in sorted edge order, matches before the remainder. This
//! is independent of thread count.

mod bisection;
mod cost;

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering as AtomicOrdering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::energy::{EnergyError, EnergyModel};
use crate::graph::{Acg, EdgeKey, EdgeSet, NodeId};
use crate::iso::{enumerate_matches_by, verify_match, Match, DEFAULT_TIMEOUT};
use crate::library::{Library, LibraryError, PrimitiveId};
use crate::synth::{glue, link_demands, SynthError, SynthOptions};

pub use bisection::{bisection_bandwidth, Bisection, EXACT_LIMIT};
pub use cost::{lower_bound, match_cost, remainder_cost};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("match of primitive {0} does not fit the graph")]
    InvalidMatch(PrimitiveId),
    #[error("edge {0} -> {1} is not in the graph")]
    EdgeNotInGraph(NodeId, NodeId),
    #[error("no feasible decomposition: {}", list_violations(.violations))]
    Infeasible { violations: Vec<ConstraintViolation> },
    #[error("search timed out before any feasible decomposition was found")]
    Timeout,
    #[error("architecture synthesis failed: {0}")]
    Synth(String),
}

fn list_violations(v: &[ConstraintViolation]) -> String {
    if v.is_empty() {
        return "no leaf satisfied the constraints".into();
    }
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl From<SynthError> for DecomposeError {
    fn from(e: SynthError) -> Self {
        DecomposeError::Synth(e.to_string())
    }
}

/// Technology limits. `None` means unlimited.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Constraints {
    /// bits/s per physical link.
    pub max_link_bandwidth: Option<f64>,
    /// bits/s across the minimum balanced cut of the architecture.
    pub max_bisection_bandwidth: Option<f64>,
}

impl Constraints {
    pub fn unlimited() -> Self {
        Constraints::default()
    }

    pub fn is_unlimited(&self) -> bool {
        self.max_link_bandwidth.is_none() && self.max_bisection_bandwidth.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ConstraintViolation {
    LinkBandwidth {
        a: NodeId,
        b: NodeId,
        demand: f64,
        limit: f64,
    },
    Bisection {
        bandwidth: f64,
        limit: f64,
        /// One side of the minimum balanced cut.
        side: Vec<NodeId>,
    },
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintViolation::LinkBandwidth { a, b, demand, limit } => write!(
                f,
                "link {a}-{b} needs {demand} bits/s, limit is {limit}"
            ),
            ConstraintViolation::Bisection {
                bandwidth,
                limit,
                side,
            } => {
                let side: Vec<String> = side.iter().map(|n| n.to_string()).collect();
                write!(
                    f,
                    "bisection bandwidth {bandwidth} exceeds limit {limit} (cut side {{{}}})",
                    side.join(",")
                )
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub candidates: usize,
    pub nodes: u64,
    pub leaves: u64,
    pub pruned: u64,
    pub constraint_checks: u64,
    pub rejected: u64,
    /// Leaves whose matches and remainder did not partition the edge set.
    /// Only counted when invariant checking is on; always zero in practice.
    pub reconstruction_failures: u64,
}

impl SearchStats {
    fn absorb(&mut self, o: &SearchStats) {
        self.nodes += o.nodes;
        self.leaves += o.leaves;
        self.pruned += o.pruned;
        self.constraint_checks += o.constraint_checks;
        self.rejected += o.rejected;
        self.reconstruction_failures += o.reconstruction_failures;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Decomposition {
    /// Matches in canonical order: by primitive id, then covered set.
    pub matches: Vec<Match>,
    pub remainder: EdgeSet,
    pub cost: f64,
    /// A matcher or search timeout fired, so optimality is not guaranteed.
    pub truncated: bool,
    pub stats: SearchStats,
}

/// Formats a cost the way listings print it: integral values without a
/// fractional part.
pub fn format_cost(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

impl Decomposition {
    /// Union of all covered sets.
    pub fn covered(&self) -> EdgeSet {
        self.matches
            .iter()
            .fold(EdgeSet::new(), |acc, m| acc.union(&m.covered))
    }

    /// The textual listing:
    ///
    /// ```text
    /// COST: <value>
    /// <primitive_id>: <NAME>, Mapping: (1 <v1>), (2 <v2>), ...
    /// 0: Remaining Graph:
    /// edge <s> <d>
    /// ```
    pub fn listing(&self, lib: &Library, with_cost: bool) -> Result<String, LibraryError> {
        let mut out = String::new();
        if with_cost {
            writeln!(out, "COST: {}", format_cost(self.cost)).unwrap();
        }
        for m in &self.matches {
            let p = lib.get(m.primitive_id)?;
            let pairs: Vec<String> = m
                .mapping
                .iter()
                .enumerate()
                .map(|(i, h)| format!("({} {h})", i + 1))
                .collect();
            writeln!(out, "{}: {}, Mapping: {}", p.id, p.name, pairs.join(", ")).unwrap();
        }
        writeln!(out, "0: Remaining Graph:").unwrap();
        for (s, d) in self.remainder.iter() {
            writeln!(out, "edge {s} {d}").unwrap();
        }
        Ok(out)
    }
}

/// Checks the reconstruction identity: every match fits the graph, covered
/// sets are pairwise disjoint, and together with the remainder they are
/// exactly the ACG edge set.
pub fn check_reconstruction(d: &Decomposition, g: &Acg, lib: &Library) -> Result<(), String> {
    let mut seen = EdgeSet::new();
    for (i, m) in d.matches.iter().enumerate() {
        let p = lib.get(m.primitive_id).map_err(|e| e.to_string())?;
        if !verify_match(g, p, m) {
            return Err(format!("match {i} ({}) does not fit the graph", p.name));
        }
        for e in m.covered.iter() {
            if !seen.insert(*e) {
                return Err(format!("edge {} -> {} covered twice", e.0, e.1));
            }
        }
    }
    for e in d.remainder.iter() {
        if !seen.insert(*e) {
            return Err(format!("remainder edge {} -> {} is also covered", e.0, e.1));
        }
    }
    if seen != g.edge_set() {
        let missing = g.edge_set().difference(&seen);
        let extra = seen.difference(&g.edge_set());
        return Err(format!(
            "edge sets differ: {} missing, {} not in graph",
            missing.len(),
            extra.len()
        ));
    }
    Ok(())
}

/// Links whose aggregated mapped bandwidth exceeds the per-link limit.
pub fn check_bandwidth(
    d: &Decomposition,
    g: &Acg,
    lib: &Library,
    c: &Constraints,
) -> Result<Vec<ConstraintViolation>, DecomposeError> {
    let Some(limit) = c.max_link_bandwidth else {
        return Ok(Vec::new());
    };
    Ok(link_demands(d, g, lib)?
        .into_iter()
        .filter(|&(_, demand)| demand > limit)
        .map(|((a, b), demand)| ConstraintViolation::LinkBandwidth { a, b, demand, limit })
        .collect())
}

/// Link bandwidth plus bisection check on the glued architecture.
pub fn check_constraints(
    d: &Decomposition,
    g: &Acg,
    lib: &Library,
    em: &EnergyModel,
    c: &Constraints,
    synth: &SynthOptions,
) -> Result<Vec<ConstraintViolation>, DecomposeError> {
    let mut v = check_bandwidth(d, g, lib, c)?;
    if let Some(limit) = c.max_bisection_bandwidth {
        let arch = glue(d, g, lib, em, synth)?;
        if let Some(b) = bisection_bandwidth(&arch) {
            if b.bandwidth > limit {
                v.push(ConstraintViolation::Bisection {
                    bandwidth: b.bandwidth,
                    limit,
                    side: b.side,
                });
            }
        }
    }
    Ok(v)
}

/// Violations that no decomposition of `g` can avoid: an edge whose own
/// bandwidth is over the link limit, or a balanced cut that the ACG itself
/// crosses with more bandwidth than the bisection limit. Every route crosses
/// a cut its endpoints straddle, so the architecture's cut is at least the
/// ACG's. Heuristic bisections are skipped since they only bound from above.
pub fn unavoidable_violations(g: &Acg, c: &Constraints) -> Vec<ConstraintViolation> {
    let mut v = Vec::new();
    if let Some(limit) = c.max_link_bandwidth {
        for ((a, b), w) in g.edges() {
            if w.bandwidth > limit {
                v.push(ConstraintViolation::LinkBandwidth { a, b, demand: w.bandwidth, limit });
            }
        }
    }
    if let Some(limit) = c.max_bisection_bandwidth {
        let ids: Vec<NodeId> = g.node_ids().collect();
        let index = |n: NodeId| ids.binary_search(&n).unwrap();
        let edges: Vec<(usize, usize, f64)> = g
            .edges()
            .map(|((a, b), w)| (index(a), index(b), w.bandwidth))
            .collect();
        if let Some((bandwidth, side, false)) = bisection::min_bisection(ids.len(), &edges) {
            if bandwidth > limit {
                let side = ids.iter().zip(&side).filter(|(_, &s)| s).map(|(&n, _)| n).collect();
                v.push(ConstraintViolation::Bisection { bandwidth, limit, side });
            }
        }
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeOptions {
    /// Per (graph, primitive) matcher timeout.
    pub iso_timeout: Duration,
    /// Wall-clock limit on the branch-and-bound itself.
    pub search_timeout: Option<Duration>,
    /// Maximum number of matches in a decomposition.
    pub max_depth: Option<usize>,
    /// Disable to explore the full tree (same result, slower).
    pub prune: bool,
    /// Worker threads for sibling branches at the root.
    pub threads: usize,
    /// Verify the reconstruction identity at every leaf.
    pub check_invariants: bool,
    pub synth: SynthOptions,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            iso_timeout: DEFAULT_TIMEOUT,
            search_timeout: None,
            max_depth: None,
            prune: true,
            threads: 1,
            check_invariants: cfg!(debug_assertions),
            synth: SynthOptions::default(),
        }
    }
}

const REM: u32 = u32::MAX;

struct Candidate {
    m: Match,
    cost: f64,
    /// Sorted global edge indices.
    edges: Vec<usize>,
}

/// Everything shared by all search instances of one call.
struct Context<'a> {
    g: &'a Acg,
    lib: &'a Library,
    em: &'a EnergyModel,
    constraints: &'a Constraints,
    opts: &'a DecomposeOptions,
    edges: Vec<EdgeKey>,
    rem_cost: Vec<f64>,
    cands: Vec<Candidate>,
    deadline: Option<Instant>,
}

impl Context<'_> {
    fn past_deadline(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Assembles a decomposition from per-edge assignments over global
    /// indices, with the cost summed in canonical order.
    fn build(&self, assign: &[u32]) -> Decomposition {
        let mut chosen: Vec<usize> = assign
            .iter()
            .filter(|&&a| a != REM)
            .map(|&a| a as usize)
            .collect();
        chosen.sort_unstable();
        chosen.dedup();
        let rem: Vec<usize> = (0..assign.len()).filter(|&e| assign[e] == REM).collect();
        let cost = chosen.iter().map(|&c| self.cands[c].cost).sum::<f64>()
            + rem.iter().map(|&e| self.rem_cost[e]).sum::<f64>();
        Decomposition {
            matches: chosen.iter().map(|&c| self.cands[c].m.clone()).collect(),
            remainder: rem.iter().map(|&e| self.edges[e]).collect(),
            cost,
            truncated: false,
            stats: SearchStats::default(),
        }
    }
}

/// A search over a subset of the edges, with local indices. Local candidate
/// order follows global order, so assignment vectors compare the same way.
const LP_LIMIT: usize = 50_000;

/// The largest step `q` such that every cost is an integer multiple of `q`,
/// if one exists at a reasonable resolution.
fn cost_step(costs: impl Iterator<Item = f64>) -> Option<f64> {
    let mut q: Option<f64> = None;
    let mut top: f64 = 0.0;
    for c in costs {
        if !c.is_finite() || c < 0.0 {
            return None;
        }
        top = top.max(c);
        if c == 0.0 {
            continue;
        }
        let (mut a, mut b) = (q.unwrap_or(c), c);
        let tol = 1e-9 * a.max(b);
        while b > tol {
            let r = a % b;
            // Remainders within tolerance of b count as zero.
            (a, b) = (b, if b - r <= tol { 0.0 } else { r });
        }
        q = Some(a);
    }
    q.filter(|&q| q >= top * 1e-6)
}


/// Splits each candidate's cost over its edges so that the per-edge minimum
/// is as large as possible in total: an optimal dual of the covering
/// relaxation, with leftover cost spread evenly. Falls back to even shares.
fn split_weights(cand_edges: &[Vec<usize>], cand_cost: &[f64], rem_cost: &[f64]) -> Vec<Vec<f64>> {
    let even = |y: &[f64]| -> Vec<Vec<f64>> {
        cand_edges
            .iter()
            .zip(cand_cost)
            .map(|(es, &c)| {
                let slack = (c - es.iter().map(|&e| y[e]).sum::<f64>()) / es.len() as f64;
                es.iter().map(|&e| y[e] + slack).collect()
            })
            .collect()
    };
    let n = rem_cost.len();
    if cand_edges.is_empty() || cand_edges.len() > LP_LIMIT {
        return even(&vec![0.0; n]);
    }
    let mut lp = minilp::Problem::new(minilp::OptimizationDirection::Maximize);
    let vars: Vec<minilp::Variable> = rem_cost.iter().map(|&r| lp.add_var(1.0, (0.0, r))).collect();
    for (es, &c) in cand_edges.iter().zip(cand_cost) {
        let row: Vec<(minilp::Variable, f64)> = es.iter().map(|&e| (vars[e], 1.0)).collect();
        lp.add_constraint(row.as_slice(), minilp::ComparisonOp::Le, c);
    }
    match lp.solve() {
        Ok(sol) => even(&vars.iter().map(|&v| sol[v].max(0.0)).collect::<Vec<_>>()),
        Err(_) => even(&vec![0.0; n]),
    }
}

struct Instance<'a> {
    ctx: &'a Context<'a>,
    edges: Vec<usize>,
    cands: Vec<usize>,
    cand_edges: Vec<Vec<usize>>,
    cand_cost: Vec<f64>,
    share: Vec<f64>,
    /// Every leaf cost is a multiple of this, when known.
    step: Option<f64>,
    /// Portion of each candidate's cost charged to each of its edges.
    weight: Vec<Vec<f64>>,
    rem_cost: Vec<f64>,
    by_edge: Vec<Vec<usize>>,
    by_share: Vec<Vec<usize>>,
    loads: Option<LinkLoads>,
}

/// Bandwidth each choice puts on each host link, for pruning partial
/// assignments that already overload a link.
struct LinkLoads {
    cand: Vec<Vec<(usize, f64)>>,
    rem: Vec<(usize, f64)>,
    links: usize,
    threshold: f64,
}

impl LinkLoads {
    fn new(ctx: &Context, cands: &[usize], edges: &[usize], limit: f64) -> Self {
        let mut index: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
        let mut slot = |a: NodeId, b: NodeId| {
            let key = if a <= b { (a, b) } else { (b, a) };
            let next = index.len();
            *index.entry(key).or_insert(next)
        };
        let bw = |a: NodeId, b: NodeId| ctx.g.edge(a, b).map_or(0.0, |w| w.bandwidth);
        let mut cand = Vec::with_capacity(cands.len());
        for &c in cands {
            let m = &ctx.cands[c].m;
            let mut load = Vec::new();
            if let Ok(p) = ctx.lib.get(m.primitive_id) {
                for &(a, b) in &p.representation {
                    let Ok(route) = p.route_lookup(a, b) else { continue };
                    let w = bw(m.host(a), m.host(b));
                    for hop in route.windows(2) {
                        load.push((slot(m.host(hop[0]), m.host(hop[1])), w));
                    }
                }
            }
            cand.push(load);
        }
        let rem = edges
            .iter()
            .map(|&e| {
                let (a, b) = ctx.edges[e];
                (slot(a, b), bw(a, b))
            })
            .collect();
        LinkLoads { cand, rem, links: index.len(), threshold: limit + eps(limit) }
    }
}

impl<'a> Instance<'a> {
    fn new(ctx: &'a Context<'a>, edges: Vec<usize>) -> Self {
        let local: BTreeMap<usize, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let cands: Vec<usize> = (0..ctx.cands.len())
            .filter(|&c| local.contains_key(&ctx.cands[c].edges[0]))
            .collect();
        let cand_edges: Vec<Vec<usize>> = cands
            .iter()
            .map(|&c| ctx.cands[c].edges.iter().map(|e| local[e]).collect())
            .collect();
        let cand_cost: Vec<f64> = cands.iter().map(|&c| ctx.cands[c].cost).collect();
        let share: Vec<f64> = cand_cost
            .iter()
            .zip(&cand_edges)
            .map(|(c, e)| c / e.len() as f64)
            .collect();
        let mut by_edge = vec![Vec::new(); edges.len()];
        for (ci, es) in cand_edges.iter().enumerate() {
            for &x in es {
                by_edge[x].push(ci);
            }
        }
        let by_share = by_edge
            .iter()
            .map(|list: &Vec<usize>| {
                let mut l = list.clone();
                l.sort_by(|&a, &b| share[a].total_cmp(&share[b]).then(a.cmp(&b)));
                l
            })
            .collect();
        let rem_cost: Vec<f64> = edges.iter().map(|&e| ctx.rem_cost[e]).collect();
        let weight = split_weights(&cand_edges, &cand_cost, &rem_cost);
        let step = cost_step(cand_cost.iter().chain(&rem_cost).copied());
        let loads = ctx
            .constraints
            .max_link_bandwidth
            .map(|limit| LinkLoads::new(ctx, &cands, &edges, limit));
        Instance {
            loads,
            rem_cost,
            weight,
            step,
            ctx,
            edges,
            cands,
            cand_edges,
            cand_cost,
            share,
            by_edge,
            by_share,
        }
    }

    fn len(&self) -> usize {
        self.edges.len()
    }

    fn leaf_cost(&self, assign: &[u32]) -> f64 {
        let mut chosen: Vec<usize> = assign
            .iter()
            .filter(|&&a| a != REM)
            .map(|&a| a as usize)
            .collect();
        chosen.sort_unstable();
        chosen.dedup();
        chosen.iter().map(|&c| self.cand_cost[c]).sum::<f64>()
            + (0..assign.len())
                .filter(|&e| assign[e] == REM)
                .map(|e| self.rem_cost[e])
                .sum::<f64>()
    }

    /// Writes a local assignment into a global one.
    fn export(&self, assign: &[u32], global: &mut [u32]) {
        for (i, &a) in assign.iter().enumerate() {
            global[self.edges[i]] = if a == REM { REM } else { self.cands[a as usize] as u32 };
        }
    }

    fn decomposition(&self, assign: &[u32]) -> Decomposition {
        let mut global = vec![REM; self.ctx.edges.len()];
        self.export(assign, &mut global);
        self.ctx.build(&global)
    }

    /// Repeatedly takes the compatible candidate saving the most per edge
    /// over leaving its edges in the remainder.
    fn greedy(&self) -> Vec<u32> {
        let mut order: Vec<(f64, usize)> = (0..self.cands.len())
            .map(|c| {
                let rem: f64 = self.cand_edges[c].iter().map(|&e| self.rem_cost[e]).sum();
                ((self.cand_cost[c] - rem) / self.cand_edges[c].len() as f64, c)
            })
            .filter(|&(gain, _)| gain < 0.0)
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut assign = vec![REM; self.len()];
        let mut taken = 0;
        for (_, c) in order {
            if self.ctx.opts.max_depth.is_some_and(|d| taken >= d) {
                break;
            }
            if self.cand_edges[c].iter().all(|&e| assign[e] == REM) {
                for &e in &self.cand_edges[c] {
                    assign[e] = c as u32;
                }
                taken += 1;
            }
        }
        assign
    }
}

fn eps(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

#[derive(Clone)]
struct Incumbent {
    cost: f64,
    assign: Vec<u32>,
}

impl Incumbent {
    /// Cost first (within tolerance), then the assignment vector.
    fn beats(&self, other: &Incumbent) -> bool {
        if self.cost < other.cost - eps(other.cost) {
            return true;
        }
        if self.cost > other.cost + eps(other.cost) {
            return false;
        }
        self.assign < other.assign
    }
}

#[derive(Default)]
struct Flags {
    timed_out: AtomicBool,
}

/// Depth-first search in canonical branch order, checking constraints at
/// improving leaves.
struct Worker<'w> {
    inst: &'w Instance<'w>,
    shared: &'w AtomicU64,
    flags: &'w Flags,
    assigned: Vec<bool>,
    assign: Vec<u32>,
    blocked: Vec<u32>,
    floor: Vec<f64>,
    trail: Vec<(usize, f64)>,
    depth: usize,
    cost: f64,
    lb: f64,
    best: Option<Incumbent>,
    rejected: Option<(f64, Vec<ConstraintViolation>)>,
    error: Option<DecomposeError>,
    stats: SearchStats,
    load: Vec<f64>,
    load_trail: Vec<(usize, f64)>,
    overloaded: usize,
    /// Exact unconstrained completion costs, used as the bound.
    exact: Option<Residual<'w>>,
}

#[derive(Clone, Copy)]
struct Saved {
    cost: f64,
    lb: f64,
    trail: usize,
    load_trail: usize,
}

impl<'w> Worker<'w> {
    fn new(inst: &'w Instance<'w>, shared: &'w AtomicU64, flags: &'w Flags) -> Self {
        let n = inst.len();
        let mut w = Worker {
            inst,
            shared,
            flags,
            assigned: vec![false; n],
            assign: vec![REM; n],
            blocked: vec![0; inst.cands.len()],
            floor: vec![0.0; n],
            trail: Vec::new(),
            depth: 0,
            cost: 0.0,
            lb: 0.0,
            best: None,
            rejected: None,
            error: None,
            stats: SearchStats::default(),
            load: vec![0.0; inst.loads.as_ref().map_or(0, |l| l.links)],
            load_trail: Vec::new(),
            overloaded: 0,
            exact: inst.ctx.opts.prune.then(|| Residual::new(inst)),
        };
        for e in 0..n {
            w.floor[e] = w.floor_of(e);
        }
        w.lb = w.floor.iter().sum();
        w
    }

    /// Cheapest way edge `e` can still be paid for: as remainder, or as an
    /// even share of an available candidate.
    fn floor_of(&self, e: usize) -> f64 {
        let share = self.inst.by_share[e]
            .iter()
            .find(|&&c| self.blocked[c] == 0)
            .map_or(f64::INFINITY, |&c| self.inst.share[c]);
        share.min(self.inst.rem_cost[e])
    }

    fn mark(&mut self, x: usize) {
        let inst = self.inst;
        self.assigned[x] = true;
        self.lb -= self.floor[x];
        for &c in &inst.by_edge[x] {
            self.blocked[c] += 1;
            if self.blocked[c] != 1 {
                continue;
            }
            for &y in &inst.cand_edges[c] {
                if self.assigned[y] || inst.share[c] > self.floor[y] {
                    continue;
                }
                let old = self.floor[y];
                let new = self.floor_of(y);
                if new != old {
                    self.trail.push((y, old));
                    self.floor[y] = new;
                    self.lb += new - old;
                }
            }
        }
    }

    fn unmark(&mut self, edges: &[usize], saved: Saved) {
        while self.trail.len() > saved.trail {
            let (y, old) = self.trail.pop().unwrap();
            self.floor[y] = old;
        }
        if let Some(l) = &self.inst.loads {
            while self.load_trail.len() > saved.load_trail {
                let (x, old) = self.load_trail.pop().unwrap();
                if self.load[x] > l.threshold && old <= l.threshold {
                    self.overloaded -= 1;
                }
                self.load[x] = old;
            }
        }
        for &x in edges {
            for &c in &self.inst.by_edge[x] {
                self.blocked[c] -= 1;
            }
            self.assigned[x] = false;
            self.assign[x] = REM;
        }
        (self.cost, self.lb) = (saved.cost, saved.lb);
    }

    fn saved(&self) -> Saved {
        Saved {
            cost: self.cost,
            lb: self.lb,
            trail: self.trail.len(),
            load_trail: self.load_trail.len(),
        }
    }

    fn add_load(&mut self, load: &[(usize, f64)]) {
        let Some(l) = &self.inst.loads else { return };
        for &(x, w) in load {
            let old = self.load[x];
            self.load_trail.push((x, old));
            self.load[x] = old + w;
            if old <= l.threshold && self.load[x] > l.threshold {
                self.overloaded += 1;
            }
        }
    }

    fn take(&mut self, ci: usize) -> Saved {
        let saved = self.saved();
        let inst = self.inst;
        for &x in &inst.cand_edges[ci] {
            self.assign[x] = ci as u32;
            self.mark(x);
        }
        if let Some(l) = &inst.loads {
            self.add_load(&l.cand[ci]);
        }
        self.cost += inst.cand_cost[ci];
        self.depth += 1;
        saved
    }

    fn untake(&mut self, ci: usize, saved: Saved) {
        let inst = self.inst;
        self.unmark(&inst.cand_edges[ci], saved);
        self.depth -= 1;
    }

    fn leave(&mut self, e: usize) -> Saved {
        let saved = self.saved();
        self.assign[e] = REM;
        self.mark(e);
        if let Some(l) = &self.inst.loads {
            self.add_load(&l.rem[e..e + 1]);
        }
        self.cost += self.inst.rem_cost[e];
        saved
    }

    fn stopped(&mut self) -> bool {
        if self.error.is_some() || self.flags.timed_out.load(AtomicOrdering::Relaxed) {
            return true;
        }
        if self.stats.nodes.is_multiple_of(4096) && self.inst.ctx.past_deadline() {
            self.flags.timed_out.store(true, AtomicOrdering::Relaxed);
            return true;
        }
        false
    }

    fn shared_bound(&self) -> f64 {
        f64::from_bits(self.shared.load(AtomicOrdering::Relaxed))
    }

    fn search(&mut self, from: usize) {
        self.stats.nodes += 1;
        if self.stopped() {
            return;
        }
        if self.overloaded > 0 {
            self.stats.pruned += 1;
            return;
        }
        let Some(e) = (from..self.inst.len()).find(|&e| !self.assigned[e]) else {
            self.leaf();
            return;
        };
        if self.inst.ctx.opts.prune && self.beyond_bound(self.cost + self.lb.max(0.0)) {
            self.stats.pruned += 1;
            return;
        }
        if let Some(mut r) = self.exact.take() {
            let mut set = vec![0u64; r.words];
            for x in (e..self.inst.len()).filter(|&x| !self.assigned[x]) {
                set[x / 64] |= 1 << (x % 64);
            }
            let own = self.best.as_ref().map_or(f64::INFINITY, |b| b.cost - eps(b.cost));
            let s = self.shared_bound();
            let (rest, _) = r.solve(&set, own.min(s + eps(s)) - self.cost);
            let timed_out = r.timed_out;
            self.exact = Some(r);
            if !timed_out && self.beyond_bound(self.cost + rest) {
                self.stats.pruned += 1;
                return;
            }
        }
        let inst = self.inst;
        if inst.ctx.opts.max_depth.is_none_or(|d| self.depth < d) {
            for &ci in &inst.by_edge[e] {
                if self.blocked[ci] != 0 {
                    continue;
                }
                let saved = self.take(ci);
                self.search(e + 1);
                self.untake(ci, saved);
            }
        }
        let saved = self.leave(e);
        self.search(e + 1);
        self.unmark(&[e], saved);
    }

    /// Whether a subtree whose leaves cost at least `v` can be skipped. Ties
    /// with our own incumbent can only come later in branch order.
    fn beyond_bound(&self, v: f64) -> bool {
        let own = self.best.as_ref().is_some_and(|b| v >= b.cost - eps(b.cost));
        let s = self.shared_bound();
        own || v > s + eps(s)
    }

    fn consistent(&self) -> bool {
        self.inst.cand_edges.iter().enumerate().all(|(c, es)| {
            let hits = es.iter().filter(|&&x| self.assign[x] == c as u32).count();
            hits == 0 || hits == es.len()
        })
    }

    fn leaf(&mut self) {
        self.stats.leaves += 1;
        if self.inst.ctx.opts.check_invariants && !self.consistent() {
            self.stats.reconstruction_failures += 1;
        }
        let cost = self.inst.leaf_cost(&self.assign);
        let s = self.shared_bound();
        if cost > s + eps(s) {
            return;
        }
        let cand = Incumbent {
            cost,
            assign: self.assign.clone(),
        };
        if self.best.as_ref().is_some_and(|b| !cand.beats(b)) {
            return;
        }
        let ctx = self.inst.ctx;
        if !ctx.constraints.is_unlimited() {
            self.stats.constraint_checks += 1;
            let d = self.inst.decomposition(&cand.assign);
            match check_constraints(&d, ctx.g, ctx.lib, ctx.em, ctx.constraints, &ctx.opts.synth) {
                Ok(v) if v.is_empty() => {}
                Ok(v) => {
                    self.stats.rejected += 1;
                    if self.rejected.as_ref().is_none_or(|(c, _)| cost < *c) {
                        self.rejected = Some((cost, v));
                    }
                    return;
                }
                Err(err) => {
                    self.error = Some(err);
                    return;
                }
            }
        }
        self.shared.fetch_min(cost.to_bits(), AtomicOrdering::Relaxed);
        self.best = Some(cand);
    }
}

struct Outcome {
    best: Option<Incumbent>,
    rejected: Option<(f64, Vec<ConstraintViolation>)>,
    stats: SearchStats,
    timed_out: bool,
}

/// Canonical-order branch and bound over leaves costing at most `bound`.
/// `seed` is a known feasible leaf returned on timeout.
fn search_tree(inst: &Instance, seed: Option<Incumbent>, bound: f64) -> Result<Outcome, DecomposeError> {
    let opts = inst.ctx.opts;
    let flags = Flags::default();
    let shared = AtomicU64::new(bound.to_bits());
    let workers: Vec<Worker> = if opts.threads <= 1 || inst.len() == 0 {
        let mut w = Worker::new(inst, &shared, &flags);
        w.search(0);
        vec![w]
    } else {
        let mut roots: Vec<Option<usize>> = inst.by_edge[0].iter().map(|&c| Some(c)).collect();
        if opts.max_depth == Some(0) {
            roots.clear();
        }
        roots.push(None);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| DecomposeError::Synth(e.to_string()))?;
        pool.install(|| {
            roots
                .par_iter()
                .map(|root| {
                    let mut w = Worker::new(inst, &shared, &flags);
                    w.stats.nodes += 1;
                    match *root {
                        Some(c) => {
                            w.take(c);
                        }
                        None => {
                            w.leave(0);
                        }
                    }
                    w.search(1);
                    w
                })
                .collect()
        })
    };
    let mut out = Outcome {
        best: None,
        rejected: None,
        stats: SearchStats::default(),
        timed_out: flags.timed_out.load(AtomicOrdering::Relaxed),
    };
    for w in workers {
        if let Some(err) = w.error {
            return Err(err);
        }
        out.stats.absorb(&w.stats);
        if let Some(b) = w.best {
            if out.best.as_ref().is_none_or(|cur| b.beats(cur)) {
                out.best = Some(b);
            }
        }
        if let Some((cost, v)) = w.rejected {
            if out.rejected.as_ref().is_none_or(|(c, _)| cost < *c) {
                out.rejected = Some((cost, v));
            }
        }
    }
    if out.best.is_none() && out.timed_out {
        out.best = seed;
    }
    Ok(out)
}

const MEMO_LIMIT: usize = 1 << 21;

/// Integral optimum of the relaxation, or the edge to branch on with its
/// options ordered by fractional value.
type Relaxed = Result<f64, (usize, Vec<Option<usize>>)>;
const RELAX_MIN_EDGES: u32 = 20;

enum Memo {
    Exact(f64),
    Lower(f64),
}

/// Unconstrained search over residual edge sets. The cheapest completion of
/// a partial decomposition depends only on which edges are still undecided,
/// so results are memoized by that set, and sets whose edges share no
/// available match are solved part by part.
struct Residual<'w> {
    inst: &'w Instance<'w>,
    words: usize,
    masks: Vec<u64>,
    memo: HashMap<Vec<u64>, Memo>,
    calls: u64,
    timed_out: bool,
    stats: SearchStats,
}

fn members(set: &[u64]) -> impl Iterator<Item = usize> + '_ {
    set.iter().enumerate().flat_map(|(w, &bits)| {
        let mut rest = bits;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let b = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(w * 64 + b)
        })
    })
}

fn root(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl<'w> Residual<'w> {
    fn new(inst: &'w Instance<'w>) -> Self {
        let words = inst.len().div_ceil(64).max(1);
        let mut masks = vec![0u64; words * inst.cands.len()];
        for (c, es) in inst.cand_edges.iter().enumerate() {
            for &e in es {
                masks[c * words + e / 64] |= 1 << (e % 64);
            }
        }
        Residual {
            inst,
            words,
            masks,
            memo: HashMap::new(),
            calls: 0,
            timed_out: false,
            stats: SearchStats::default(),
        }
    }

    fn full(&self) -> Vec<u64> {
        let mut set = vec![0u64; self.words];
        for e in 0..self.inst.len() {
            set[e / 64] |= 1 << (e % 64);
        }
        set
    }

    fn available(&self, set: &[u64], c: usize) -> bool {
        let m = &self.masks[c * self.words..(c + 1) * self.words];
        m.iter().zip(set).all(|(m, s)| m & !s == 0)
    }

    fn without(&self, set: &[u64], edges: &[usize]) -> Vec<u64> {
        let mut s = set.to_vec();
        for &e in edges {
            s[e / 64] &= !(1 << (e % 64));
        }
        s
    }

    /// Splits `set` into groups of edges linked by available matches, each
    /// with a lower bound on its cost: the larger of the sums of per-edge
    /// floors under even shares and under the precomputed weights.
    fn split(&self, set: &[u64]) -> Vec<(Vec<u64>, f64)> {
        let inst = self.inst;
        let n = inst.len();
        let mut even = vec![0.0; n];
        let mut dual = vec![0.0; n];
        let mut parent: Vec<usize> = (0..n).collect();
        for e in members(set) {
            even[e] = inst.rem_cost[e];
            dual[e] = inst.rem_cost[e];
        }
        for e in members(set) {
            for &c in &inst.by_edge[e] {
                let es = &inst.cand_edges[c];
                if es[0] != e || !self.available(set, c) {
                    continue;
                }
                let a = root(&mut parent, e);
                let share = inst.share[c];
                for (&y, &w) in es.iter().zip(&inst.weight[c]) {
                    if share < even[y] {
                        even[y] = share;
                    }
                    if w < dual[y] {
                        dual[y] = w;
                    }
                    let b = root(&mut parent, y);
                    if b != a {
                        parent[b] = a;
                    }
                }
            }
        }
        let mut slot = vec![usize::MAX; n];
        let mut parts: Vec<(Vec<u64>, f64, f64)> = Vec::new();
        for e in members(set) {
            let r = root(&mut parent, e);
            if slot[r] == usize::MAX {
                slot[r] = parts.len();
                parts.push((vec![0; self.words], 0.0, 0.0));
            }
            let p = &mut parts[slot[r]];
            p.0[e / 64] |= 1 << (e % 64);
            p.1 += even[e];
            p.2 += dual[e];
        }
        parts.into_iter().map(|(s, a, b)| (s, self.round_up(a.max(b)))).collect()
    }

    fn round_up(&self, lb: f64) -> f64 {
        match self.inst.step {
            Some(q) => (lb / q - 1e-6).ceil() * q,
            None => lb,
        }
    }

    /// Choices for edge `e`: available matches in `order`, then remainder.
    fn options(&self, set: &[u64], order: &[usize]) -> Vec<Option<usize>> {
        order
            .iter()
            .filter(|&&c| self.available(set, c))
            .map(|&c| Some(c))
            .chain(std::iter::once(None))
            .collect()
    }

    fn option_edges(&self, o: Option<usize>, e: usize) -> (f64, Vec<usize>) {
        match o {
            Some(c) => (self.inst.cand_cost[c], self.inst.cand_edges[c].clone()),
            None => (self.inst.rem_cost[e], vec![e]),
        }
    }

    /// Returns `(v, exact)`: `v` never exceeds the optimal completion cost
    /// of `set`, and equals it when `exact`. The result is exact whenever the
    /// optimum is at most `budget`.
    fn solve(&mut self, set: &[u64], budget: f64) -> (f64, bool) {
        self.stats.nodes += 1;
        self.calls += 1;
        if self.timed_out {
            return (f64::INFINITY, false);
        }
        if self.calls.is_multiple_of(1024) && self.inst.ctx.past_deadline() {
            self.timed_out = true;
            return (f64::INFINITY, false);
        }
        if set.iter().all(|&w| w == 0) {
            self.stats.leaves += 1;
            return (0.0, true);
        }
        match self.memo.get(set) {
            Some(Memo::Exact(v)) => return (*v, true),
            Some(Memo::Lower(l)) if *l > budget + eps(budget) => return (*l, false),
            _ => {}
        }
        let parts = self.split(set);
        let (v, exact) = if parts.len() > 1 {
            self.solve_parts(&parts, budget)
        } else {
            self.solve_one(set, parts[0].1, budget)
        };
        if self.timed_out {
            return (f64::INFINITY, false);
        }
        if self.memo.len() >= MEMO_LIMIT {
            self.memo.clear();
        }
        self.memo.insert(set.to_vec(), if exact { Memo::Exact(v) } else { Memo::Lower(v) });
        (v, exact)
    }

    fn solve_parts(&mut self, parts: &[(Vec<u64>, f64)], budget: f64) -> (f64, bool) {
        let mut rest: f64 = parts.iter().map(|p| p.1).sum();
        if self.inst.ctx.opts.prune && rest > budget + eps(budget) {
            self.stats.pruned += 1;
            return (rest, false);
        }
        let mut total = 0.0;
        for (p, lb) in parts {
            rest -= lb;
            let (v, exact) = self.solve(p, budget - total - rest);
            total += v;
            if !exact {
                return (total + rest, false);
            }
        }
        (total, true)
    }

    /// Solves the partitioning relaxation on `set`: every edge covered once,
    /// fractionally, by available matches or the remainder. Returns the
    /// bound and either the cost of an integral optimum or the edge whose
    /// covering is most fractional.
    fn relax(&self, set: &[u64]) -> Option<(f64, Relaxed)> {
        let inst = self.inst;
        let mut lp = minilp::Problem::new(minilp::OptimizationDirection::Minimize);
        let mut rows: Vec<Vec<(minilp::Variable, f64)>> = vec![Vec::new(); inst.len()];
        let mut cols: Vec<(minilp::Variable, Option<usize>, usize)> = Vec::new();
        for e in members(set) {
            let v = lp.add_var(inst.rem_cost[e], (0.0, 1.0));
            rows[e].push((v, 1.0));
            cols.push((v, None, e));
            for &c in &inst.by_edge[e] {
                let es = &inst.cand_edges[c];
                if es[0] != e || !self.available(set, c) {
                    continue;
                }
                let v = lp.add_var(inst.cand_cost[c], (0.0, 1.0));
                for &y in es {
                    rows[y].push((v, 1.0));
                }
                cols.push((v, Some(c), e));
            }
        }
        for e in members(set) {
            lp.add_constraint(rows[e].as_slice(), minilp::ComparisonOp::Eq, 1.0);
        }
        let sol = lp.solve().ok()?;
        let bound = sol.objective() - 1e-7 * sol.objective().abs().max(1.0);
        let mut top = vec![0.0f64; inst.len()];
        let mut hits = vec![0u32; inst.len()];
        let mut integral = 0.0;
        let mut fractional = false;
        for &(v, c, e) in &cols {
            let x = sol[v];
            if x > 1e-6 && x < 1.0 - 1e-6 {
                fractional = true;
            }
            let edges: &[usize] = match c {
                Some(c) => &inst.cand_edges[c],
                None => std::slice::from_ref(&e),
            };
            for &y in edges {
                top[y] = top[y].max(x);
                if x > 0.5 {
                    hits[y] += 1;
                }
            }
            if x > 0.5 {
                integral += c.map_or(inst.rem_cost[e], |c| inst.cand_cost[c]);
            }
        }
        if !fractional && members(set).all(|e| hits[e] == 1) {
            return Some((bound, Ok(integral)));
        }
        let e = members(set)
            .min_by(|&a, &b| top[a].total_cmp(&top[b]).then(a.cmp(&b)))
            .unwrap();
        let mut opts: Vec<(f64, Option<usize>)> = cols
            .iter()
            .filter(|t| match t.1 {
                Some(c) => inst.cand_edges[c].contains(&e),
                None => t.2 == e,
            })
            .map(|t| (sol[t.0], t.1))
            .collect();
        opts.sort_by(|a, b| b.0.total_cmp(&a.0));
        Some((bound, Err((e, opts.into_iter().map(|t| t.1).collect()))))
    }

    fn solve_one(&mut self, set: &[u64], lb: f64, budget: f64) -> (f64, bool) {
        let prune = self.inst.ctx.opts.prune;
        if prune && lb > budget + eps(budget) {
            self.stats.pruned += 1;
            return (lb, false);
        }
        let size: u32 = set.iter().map(|w| w.count_ones()).sum();
        let mut lb = lb;
        let mut pick = None;
        if prune && size >= RELAX_MIN_EDGES {
            if let Some((v, out)) = self.relax(set) {
                lb = lb.max(self.round_up(v));
                if lb > budget + eps(budget) {
                    self.stats.pruned += 1;
                    return (lb, false);
                }
                match out {
                    Ok(cost) => return (cost, true),
                    Err(p) => pick = Some(p),
                }
            }
        }
        let inst = self.inst;
        let (e, order) = match pick {
            Some(p) => p,
            None => {
                let e = members(set).next().expect("non-empty set");
                (e, self.options(set, &inst.by_share[e]))
            }
        };
        let mut best = f64::INFINITY;
        let mut lower = f64::INFINITY;
        for o in order {
            let (co, edges) = self.option_edges(o, e);
            let child = self.without(set, &edges);
            // Only a strictly better completion matters here.
            let cap = if prune { budget.min(best - 2.0 * eps(best)) } else { f64::INFINITY };
            let (v, exact) = self.solve(&child, cap - co);
            if self.timed_out {
                return (f64::INFINITY, false);
            }
            let total = co + v;
            if exact && total < best {
                best = total;
            }
            lower = lower.min(total);
        }
        if best <= budget + eps(budget) || !prune {
            (best, true)
        } else {
            (lower.max(lb), false)
        }
    }

    /// The optimal assignment that is first in canonical branch order.
    fn canonical(&mut self, upper: f64) -> Option<Vec<u32>> {
        let mut set = self.full();
        let (mut f, exact) = self.solve(&set, upper + eps(upper));
        if !exact {
            return None;
        }
        let mut assign = vec![REM; self.inst.len()];
        let inst = self.inst;
        loop {
            let first = members(&set).next();
            let Some(e) = first else { break };
            let opts = self.options(&set, &inst.by_edge[e]);
            let mut chosen = None;
            for o in opts {
                let (co, edges) = self.option_edges(o, e);
                let child = self.without(&set, &edges);
                let (v, exact) = self.solve(&child, f - co + eps(f));
                if self.timed_out {
                    return None;
                }
                if exact && co + v <= f + eps(f) {
                    chosen = Some((o, v, child, edges));
                    break;
                }
            }
            let (o, v, child, edges) = chosen.expect("an optimal option exists");
            for x in edges {
                assign[x] = o.map_or(REM, |c| c as u32);
            }
            f = v;
            set = child;
        }
        Some(assign)
    }
}

/// Groups edges that some candidate covers together.
fn components(n: usize, cands: &[Candidate]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in cands {
        let a = find(&mut parent, c.edges[0]);
        for &e in &c.edges[1..] {
            let b = find(&mut parent, e);
            if a != b {
                parent[b] = a;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in 0..n {
        let r = find(&mut parent, e);
        groups.entry(r).or_default().push(e);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Minimum-cost feasible decomposition of `g` into matches of `lib`.
pub fn decompose(
    g: &Acg,
    lib: &Library,
    em: &EnergyModel,
    c: &Constraints,
    opts: &DecomposeOptions,
) -> Result<Decomposition, DecomposeError> {
    em.validate()?;
    let violations = unavoidable_violations(g, c);
    if !violations.is_empty() {
        return Err(DecomposeError::Infeasible { violations });
    }
    let started = Instant::now();
    let edges: Vec<EdgeKey> = g.edges().map(|(e, _)| e).collect();
    let edge_index = |e: &EdgeKey| edges.binary_search(e).expect("covered edge in graph");

    let mut truncated = false;
    let mut cands = Vec::new();
    for p in lib.iter() {
        let list = enumerate_matches_by(g, p, opts.iso_timeout, |a, b| {
            let (ca, cb) = (cost::mapping_cost(p, g, em, a), cost::mapping_cost(p, g, em, b));
            ca.total_cmp(&cb)
        });
        truncated |= list.truncated;
        for m in list.matches {
            let cost = cost::mapping_cost(p, g, em, &m.mapping);
            let edges: Vec<usize> = m.covered.iter().map(edge_index).collect();
            if !edges.is_empty() {
                cands.push(Candidate { m, cost, edges });
            }
        }
    }
    let ctx = Context {
        g,
        lib,
        em,
        constraints: c,
        opts,
        rem_cost: edges.iter().map(|&e| cost::remainder_edge_cost(g, em, e)).collect(),
        edges,
        cands,
        deadline: opts.search_timeout.and_then(|t| started.checked_add(t)),
    };

    let separable = opts.max_depth.is_none();
    let mut stats = SearchStats {
        candidates: ctx.cands.len(),
        ..SearchStats::default()
    };
    let mut global = vec![REM; ctx.edges.len()];
    let mut solved_free = false;
    let matcher_truncated = truncated;
    if separable {
        let groups = components(ctx.edges.len(), &ctx.cands);
        let solve_group = |group: &Vec<usize>| {
            let inst = Instance::new(&ctx, group.clone());
            let greedy = inst.greedy();
            let mut r = Residual::new(&inst);
            let found = r.canonical(inst.leaf_cost(&greedy));
            let mut part = vec![REM; ctx.edges.len()];
            inst.export(found.as_deref().unwrap_or(&greedy), &mut part);
            (group.clone(), part, r.stats, found.is_none())
        };
        let solved: Vec<_> = if opts.threads > 1 && groups.len() > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.threads)
                .build()
                .map_err(|e| DecomposeError::Synth(e.to_string()))?
                .install(|| groups.par_iter().map(solve_group).collect())
        } else {
            groups.iter().map(solve_group).collect()
        };
        for (group, part, st, timed_out) in solved {
            for e in group {
                global[e] = part[e];
            }
            stats.absorb(&st);
            truncated |= timed_out;
        }
        // The unconstrained optimum stands whenever it happens to be feasible.
        solved_free = c.is_unlimited() || {
            stats.constraint_checks += 1;
            check_constraints(&ctx.build(&global), g, lib, em, c, &opts.synth)?.is_empty()
        };
    }
    if !solved_free {
        global = vec![REM; ctx.edges.len()];
        truncated = matcher_truncated;
        let inst = Instance::new(&ctx, (0..ctx.edges.len()).collect());
        let greedy = inst.greedy();
        let mut seed = Some(Incumbent {
            cost: inst.leaf_cost(&greedy),
            assign: greedy,
        });
        if !c.is_unlimited() {
            stats.constraint_checks += 1;
            let d = inst.decomposition(&seed.as_ref().unwrap().assign);
            if !check_constraints(&d, g, lib, em, c, &opts.synth)?.is_empty() {
                seed = None;
            }
        }
        // Raise a cost budget from the unconstrained optimum until a feasible
        // leaf fits under it; the last round runs up to the seed or unbounded.
        let most: f64 = (0..inst.len())
            .map(|e| {
                inst.by_edge[e]
                    .iter()
                    .map(|&c| inst.cand_cost[c])
                    .fold(inst.rem_cost[e], f64::max)
            })
            .sum();
        let ceiling = seed.as_ref().map_or(most, |s| s.cost.min(most));
        let mut budget = if opts.prune {
            let mut r = Residual::new(&inst);
            let full = r.full();
            let (v, _) = r.solve(&full, f64::INFINITY);
            if r.timed_out { ceiling } else { v }
        } else {
            ceiling
        };
        let mut raise = inst.step.unwrap_or(0.0).max(budget.abs() * 1e-3).max(f64::MIN_POSITIVE);
        let mut rejected: Option<(f64, Vec<ConstraintViolation>)> = None;
        loop {
            let last = budget >= ceiling - eps(ceiling);
            let out = search_tree(&inst, if last { seed.clone() } else { None }, budget.min(ceiling))?;
            stats.absorb(&out.stats);
            truncated |= out.timed_out;
            if let Some((cost, v)) = out.rejected {
                if rejected.as_ref().is_none_or(|(c, _)| cost < *c) {
                    rejected = Some((cost, v));
                }
            }
            if let Some(b) = out.best {
                inst.export(&b.assign, &mut global);
                break;
            }
            if out.timed_out {
                let Some(fallback) = &seed else {
                    return Err(DecomposeError::Timeout);
                };
                inst.export(&fallback.assign, &mut global);
                break;
            }
            if last {
                return Err(DecomposeError::Infeasible {
                    violations: rejected.map(|(_, v)| v).unwrap_or_default(),
                });
            }
            budget += raise;
            raise *= 2.0;
        }
    }
    let mut d = ctx.build(&global);
    d.truncated = truncated;
    d.stats = stats;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iso::Match;

    fn graph(n: NodeId, edges: &[(NodeId, NodeId)]) -> Acg {
        let mut g = Acg::new();
        for i in 1..=n {
            g.add_node(i, None).unwrap();
        }
        for &(a, b) in edges {
            g.add_edge(a, b, 1.0, 1.0).unwrap();
        }
        g
    }

    fn clique(nodes: &[NodeId]) -> Vec<(NodeId, NodeId)> {
        let mut e = Vec::new();
        for &a in nodes {
            for &b in nodes {
                if a != b {
                    e.push((a, b));
                }
            }
        }
        e
    }

    #[test]
    fn single_clique_becomes_mgg4() {
        let g = graph(4, &clique(&[1, 2, 3, 4]));
        let lib = Library::builtin();
        let d = decompose(&g, &lib, &EnergyModel::unit(), &Constraints::unlimited(), &Default::default())
            .unwrap();
        assert_eq!(d.matches.len(), 1);
        assert_eq!(d.matches[0].primitive_id, 1);
        assert!(d.remainder.is_empty());
        assert_eq!(d.cost, 4.0);
        assert!(!d.truncated);
        let all_rem = remainder_cost(&g.edge_set(), &g, &EnergyModel::unit()).unwrap();
        assert_eq!(all_rem, 24.0);
        check_reconstruction(&d, &g, &lib).unwrap();
    }

    #[test]
    fn empty_graph() {
        let d = decompose(
            &Acg::new(),
            &Library::builtin(),
            &EnergyModel::unit(),
            &Constraints::unlimited(),
            &Default::default(),
        )
        .unwrap();
        assert!(d.matches.is_empty());
        assert!(d.remainder.is_empty());
        assert_eq!(d.cost, 0.0);
        assert_eq!(
            d.listing(&Library::builtin(), true).unwrap(),
            "COST: 0\n0: Remaining Graph:\n"
        );
    }

    #[test]
    fn two_cycle_stays_in_remainder() {
        let g = graph(2, &[(1, 2), (2, 1)]);
        let lib = Library::builtin();
        let d = decompose(&g, &lib, &EnergyModel::unit(), &Constraints::unlimited(), &Default::default())
            .unwrap();
        assert!(d.matches.is_empty());
        assert_eq!(d.remainder, g.edge_set());
        assert_eq!(d.cost, 4.0);
        assert_eq!(
            d.listing(&lib, false).unwrap(),
            "0: Remaining Graph:\nedge 1 2\nedge 2 1\n"
        );
    }

    #[test]
    fn listing_format() {
        let lib = Library::builtin();
        let d = Decomposition {
            matches: vec![Match::from_mapping(lib.get(1).unwrap(), vec![1, 2, 5, 6])],
            remainder: [(9, 11)].into_iter().collect(),
            cost: 28.0,
            ..Default::default()
        };
        assert_eq!(
            d.listing(&lib, true).unwrap(),
            "COST: 28\n1: MGG4, Mapping: (1 1), (2 2), (3 5), (4 6)\n0: Remaining Graph:\nedge 9 11\n"
        );
        assert_eq!(format_cost(2.5), "2.5");
    }

    #[test]
    fn bandwidth_violation_on_shared_link() {
        let lib = Library::builtin();
        let mut g = Acg::new();
        for i in 1..=4 {
            g.add_node(i, None).unwrap();
        }
        for (a, b) in clique(&[1, 2, 3, 4]) {
            let bw = if (a, b) == (1, 3) || (a, b) == (1, 4) { 60.0 } else { 0.0 };
            g.add_edge(a, b, 1.0, bw).unwrap();
        }
        let d = Decomposition {
            matches: vec![Match::from_mapping(lib.get(1).unwrap(), vec![1, 2, 3, 4])],
            ..Default::default()
        };
        let c = Constraints {
            max_link_bandwidth: Some(100.0),
            ..Default::default()
        };
        let v = check_bandwidth(&d, &g, &lib, &c).unwrap();
        // 1->4 also crosses 3-4.
        assert_eq!(
            v,
            [ConstraintViolation::LinkBandwidth {
                a: 1,
                b: 3,
                demand: 120.0,
                limit: 100.0
            }]
        );
        assert!(check_bandwidth(&d, &g, &lib, &Constraints::unlimited())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn tight_link_cap_forces_alternative() {
        let g = graph(4, &clique(&[1, 2, 3, 4]));
        let lib = Library::builtin();
        // MGG4 puts 4 units on each link; 2-cycles as remainder put 2.
        let c = Constraints {
            max_link_bandwidth: Some(3.0),
            ..Default::default()
        };
        let d = decompose(&g, &lib, &EnergyModel::unit(), &c, &Default::default()).unwrap();
        assert!(d.matches.iter().all(|m| m.primitive_id != 1));
        assert!(check_bandwidth(&d, &g, &lib, &c).unwrap().is_empty());
        let c = Constraints {
            max_link_bandwidth: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(
            decompose(&g, &lib, &EnergyModel::unit(), &c, &Default::default()),
            Err(DecomposeError::Infeasible { .. })
        ));
    }

    #[test]
    fn bisection_limit_reports_cut() {
        let g = graph(4, &clique(&[1, 2, 3, 4]));
        let lib = Library::builtin();
        let c = Constraints {
            max_bisection_bandwidth: Some(0.5),
            ..Default::default()
        };
        match decompose(&g, &lib, &EnergyModel::unit(), &c, &Default::default()) {
            Err(DecomposeError::Infeasible { violations }) => {
                assert!(matches!(violations[0], ConstraintViolation::Bisection { .. }));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn max_depth_zero_is_all_remainder() {
        let g = graph(4, &clique(&[1, 2, 3, 4]));
        let opts = DecomposeOptions {
            max_depth: Some(0),
            ..Default::default()
        };
        let d = decompose(&g, &Library::builtin(), &EnergyModel::unit(), &Constraints::unlimited(), &opts)
            .unwrap();
        assert!(d.matches.is_empty());
        assert_eq!(d.cost, 24.0);
    }
}
