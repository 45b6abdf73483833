// SPDX-License-Identifier: Apache-2.0

//! Benchmark ACGs and traffic derived from them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Acg, NodeId, Position};
use crate::library::{Library, LibraryError, PrimitiveId};
use crate::sim::{Injection, Traffic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("need at least {need} nodes, got {n}")]
    TooFewNodes { n: usize, need: usize },
    #[error("could not place copy {copy} of {name} without reusing an edge")]
    MixInfeasible { name: String, copy: usize },
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Grid position of the `i`-th node (0-based) in a row-major layout of
/// `cols` columns with unit spacing.
fn grid(i: usize, cols: usize) -> Position {
    Position::new((i % cols) as f64, (i / cols) as f64)
}

fn grid_cols(n: usize) -> usize {
    (n as f64).sqrt().ceil().max(1.0) as usize
}

/// The AES byte-processor graph with 8-bit volumes and unit bandwidth.
pub fn aes_acg() -> Acg {
    aes_acg_with(8.0, 1.0)
}

/// Sixteen byte processors on a 4x4 grid, numbered row-major. Every column
/// exchanges all-to-all; row 2 shifts by one along a directed 4-cycle, row 3
/// swaps pairs two apart, row 4 is another directed 4-cycle, row 1 is idle.
pub fn aes_acg_with(volume: f64, bandwidth: f64) -> Acg {
    let mut g = Acg::new();
    let id = |r: u32, c: u32| 4 * (r - 1) + c;
    for r in 1..=4 {
        for c in 1..=4 {
            g.add_node(id(r, c), Some(Position::new((c - 1) as f64, (r - 1) as f64)))
                .unwrap();
        }
    }
    let mut add = |a: NodeId, b: NodeId| g.add_edge(a, b, volume, bandwidth).unwrap();
    for c in 1..=4 {
        for r1 in 1..=4 {
            for r2 in 1..=4 {
                if r1 != r2 {
                    add(id(r1, c), id(r2, c));
                }
            }
        }
    }
    for row in [2, 4] {
        for c in 1..=4 {
            add(id(row, c), id(row, c % 4 + 1));
        }
    }
    for (a, b) in [(9, 11), (11, 9), (10, 12), (12, 10)] {
        add(a, b);
    }
    g
}

/// One planted copy of a primitive: `mapping[i]` hosts primitive vertex `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Planted {
    pub primitive_id: PrimitiveId,
    pub mapping: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlantSpec {
    pub n: usize,
    /// `(primitive, copies)` pairs, planted in order.
    pub mix: Vec<(PrimitiveId, usize)>,
    /// Random extra edges not belonging to any planted copy.
    pub noise_edges: usize,
    /// Planted copies use pairwise disjoint vertex sets.
    pub vertex_disjoint: bool,
    pub volume: f64,
    pub bandwidth: f64,
}

impl PlantSpec {
    pub fn new(n: usize, mix: Vec<(PrimitiveId, usize)>) -> Self {
        PlantSpec {
            n,
            mix,
            noise_edges: 0,
            vertex_disjoint: false,
            volume: 1.0,
            bandwidth: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedAcg {
    pub acg: Acg,
    /// Ground truth in planting order.
    pub planted: Vec<Planted>,
    pub noise: Vec<(NodeId, NodeId)>,
}

const PLACEMENT_TRIES: usize = 5000;

/// A graph built from edge-disjoint copies of primitive representations on
/// random vertex subsets, plus noise edges. Nodes are `1..=n` on a unit grid.
pub fn planted_acg(seed: u64, spec: &PlantSpec, lib: &Library) -> Result<PlantedAcg, WorkloadError> {
    if spec.n < 4 {
        return Err(WorkloadError::TooFewNodes { n: spec.n, need: 4 });
    }
    if !(spec.volume >= 0.0 && spec.bandwidth >= 0.0) {
        return Err(WorkloadError::Invalid("volume and bandwidth must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Acg::new();
    let cols = grid_cols(spec.n);
    for i in 0..spec.n {
        g.add_node(i as NodeId + 1, Some(grid(i, cols))).unwrap();
    }
    let all: Vec<NodeId> = (1..=spec.n as NodeId).collect();
    let mut free = all.clone();
    let mut planted = Vec::new();
    for &(pid, copies) in &spec.mix {
        let p = lib.get(pid)?;
        if p.k > spec.n {
            return Err(WorkloadError::TooFewNodes { n: spec.n, need: p.k });
        }
        for copy in 0..copies {
            let mut placed = None;
            for _ in 0..PLACEMENT_TRIES {
                let pool = if spec.vertex_disjoint { &free } else { &all };
                if pool.len() < p.k {
                    break;
                }
                let mapping: Vec<NodeId> = pool.choose_multiple(&mut rng, p.k).copied().collect();
                let clash = p
                    .representation
                    .iter()
                    .any(|&(a, b)| g.has_edge(mapping[a - 1], mapping[b - 1]));
                if !clash {
                    placed = Some(mapping);
                    break;
                }
            }
            let Some(mapping) = placed else {
                return Err(WorkloadError::MixInfeasible {
                    name: p.name.clone(),
                    copy: copy + 1,
                });
            };
            for &(a, b) in &p.representation {
                g.add_edge(mapping[a - 1], mapping[b - 1], spec.volume, spec.bandwidth)
                    .unwrap();
            }
            free.retain(|v| !mapping.contains(v));
            planted.push(Planted {
                primitive_id: pid,
                mapping,
            });
        }
    }
    let mut open: Vec<(NodeId, NodeId)> = Vec::new();
    for a in 1..=spec.n as NodeId {
        for b in 1..=spec.n as NodeId {
            if a != b && !g.has_edge(a, b) {
                open.push((a, b));
            }
        }
    }
    if spec.noise_edges > open.len() {
        return Err(WorkloadError::Invalid(format!(
            "{} noise edges requested, {} free pairs",
            spec.noise_edges,
            open.len()
        )));
    }
    let mut noise: Vec<(NodeId, NodeId)> = open
        .choose_multiple(&mut rng, spec.noise_edges)
        .copied()
        .collect();
    noise.sort_unstable();
    for &(a, b) in &noise {
        g.add_edge(a, b, spec.volume, spec.bandwidth).unwrap();
    }
    Ok(PlantedAcg {
        acg: g,
        planted,
        noise,
    })
}

/// The planted instance used for runtime benchmarks at size `n`: `n / 4`
/// lightly overlapping copies (at least one) of library primitives that fit
/// in `n` nodes, chosen in a seed-dependent rotation, plus `n / 2` noise
/// edges from 8 nodes up. Unit volume and bandwidth.
pub fn bench_spec(n: usize, seed: u64, lib: &Library) -> PlantSpec {
    let ids: Vec<PrimitiveId> = lib.iter().filter(|p| p.k <= n).map(|p| p.id).collect();
    let mix = if ids.is_empty() {
        Vec::new()
    } else {
        (0..(n / 4).max(1))
            .map(|i| (ids[(seed as usize * 7 + i * 5) % ids.len()], 1))
            .collect()
    };
    PlantSpec {
        noise_edges: if n < 8 { 0 } else { n / 2 },
        ..PlantSpec::new(n, mix)
    }
}

/// Each ordered pair becomes an edge with probability `density`.
pub fn random_acg(seed: u64, n: usize, density: f64, volume: f64, bandwidth: f64) -> Result<Acg, WorkloadError> {
    if !(0.0..=1.0).contains(&density) {
        return Err(WorkloadError::Invalid(format!("density {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Acg::new();
    let cols = grid_cols(n);
    for i in 0..n {
        g.add_node(i as NodeId + 1, Some(grid(i, cols))).unwrap();
    }
    for a in 1..=n as NodeId {
        for b in 1..=n as NodeId {
            if a != b && rng.gen_bool(density) {
                g.add_edge(a, b, volume, bandwidth)
                    .map_err(|e| WorkloadError::Invalid(e.to_string()))?;
            }
        }
    }
    Ok(g)
}

/// One message per ACG edge per round, all injected at the round start;
/// payloads are the edge volumes rounded up to whole flits.
pub fn traffic_from_acg(g: &Acg, rounds: usize, flit_bits: u32) -> Traffic {
    let flit = flit_bits.max(1) as u64;
    let round: Vec<Injection> = g
        .edges()
        .map(|((s, d), w)| Injection {
            cycle: 0,
            src: s,
            dst: d,
            payload_bits: ((w.volume.ceil() as u64).div_ceil(flit)).max(1) * flit,
        })
        .collect();
    Traffic::repeated(round, rounds)
}
