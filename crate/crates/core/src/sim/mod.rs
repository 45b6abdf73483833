// SPDX-License-Identifier: Apache-2.0

//! Cycle-level packet simulation.
//!
//! Every undirected link is two channels, each moving at most one flit per
//! cycle. Each node has one input FIFO per incoming channel and virtual
//! channel, plus an unbounded injection queue (port 0). Output channels
//! arbitrate round-robin over `(port, vc)` slots; ports are numbered by
//! upstream node id after the injection port. A flit sent in cycle `t` is
//! usable downstream in cycle `t + 1`, and flits reaching their destination
//! are consumed on arrival.
//!
//! A virtual channel is held by one packet from its head flit to its tail
//! flit. Under store-and-forward a head flit waits until its whole packet
//! sits in the current buffer; under cut-through it leaves as soon as the
//! downstream buffer has room. Packets climb virtual-channel layers at the
//! escalation points reported by the deadlock analysis.

mod mesh;
mod traffic;

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::energy::{EnergyError, EnergyModel};
use crate::graph::NodeId;
use crate::synth::deadlock::{analyze, DEFAULT_CYCLE_LIMIT};
use crate::synth::{Architecture, Channel, RoutingTables, SynthError};

pub use mesh::{mesh_baseline, mesh_node};
pub use traffic::{Injection, Traffic};

pub const CSV_HEADER: &str = "scenario,arch,delta_cycles,avg_latency,throughput_bps,energy_j,p_ave_w";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("traffic endpoint {0} is not in the architecture")]
    UnknownNode(NodeId),
    #[error("message from node {0} to itself")]
    SelfMessage(NodeId),
    #[error("cannot deliver {src} -> {dst}: {reason}")]
    Undeliverable {
        src: NodeId,
        dst: NodeId,
        reason: String,
    },
    #[error("routing needs {required} virtual channels for deadlock freedom, {configured} configured ({cycles} dependency cycles)")]
    InsufficientVirtualChannels {
        required: usize,
        configured: usize,
        cycles: usize,
    },
    #[error("permanent deadlock at cycle {cycle}: {} blocked channel(s), {} matching dependency cycle(s)", .blocked.len(), .cdg_cycles.len())]
    Deadlock {
        cycle: u64,
        /// `(channel, vc)` buffers whose head flit cannot move.
        blocked: Vec<(Channel, usize)>,
        /// Dependency cycles whose channels are all blocked.
        cdg_cycles: Vec<Vec<Channel>>,
    },
    #[error("zero makespan")]
    ZeroDelta,
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Switching {
    #[default]
    StoreAndForward,
    CutThrough,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub flit_bits: u32,
    /// Flits per input buffer (per port and virtual channel).
    pub buffer_depth: usize,
    pub virtual_channels: usize,
    /// Hz
    pub f_clk: f64,
    pub switching: Switching,
    /// Idle cycles between a round's last delivery and the next round.
    pub node_delay: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            flit_bits: 32,
            buffer_depth: 4,
            virtual_channels: 1,
            f_clk: 100e6,
            switching: Switching::StoreAndForward,
            node_delay: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.flit_bits == 0 || self.buffer_depth == 0 || self.virtual_channels == 0 {
            return Err(SimError::InvalidConfig(
                "flit_bits, buffer_depth and virtual_channels must be positive".into(),
            ));
        }
        if !(self.f_clk.is_finite() && self.f_clk > 0.0) {
            return Err(SimError::InvalidConfig(format!("f_clk = {}", self.f_clk)));
        }
        Ok(())
    }

    pub fn flits(&self, payload_bits: u64) -> u32 {
        payload_bits.div_ceil(self.flit_bits as u64).max(1) as u32
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimResult {
    /// First injection to last delivery.
    pub delta_cycles: u64,
    pub avg_latency_cycles: f64,
    pub max_latency_cycles: u64,
    pub injected_packets: u64,
    pub delivered_packets: u64,
    pub delivered_flits: u64,
    pub flit_hops: u64,
    pub energy_joules: f64,
    pub p_ave_watts: f64,
    pub f_clk: f64,
    pub vc_required: usize,
    /// Per delivered packet, in injection order: `(latency, hops)`.
    pub latencies: Vec<(u64, u32)>,
}

impl SimResult {
    /// One CSV row in [`CSV_HEADER`] order.
    pub fn csv_row(&self, scenario: &str, arch: &str, block_bits: u64) -> String {
        let rho = throughput(self.delta_cycles, self.f_clk, block_bits).unwrap_or(0.0);
        format!(
            "{scenario},{arch},{},{},{},{},{}",
            self.delta_cycles,
            self.avg_latency_cycles,
            rho,
            self.energy_joules,
            self.p_ave_watts
        )
    }
}

/// `block_bits * f_clk / delta` in bits/s.
pub fn throughput(delta_cycles: u64, f_clk: f64, block_bits: u64) -> Result<f64, SimError> {
    if delta_cycles == 0 {
        return Err(SimError::ZeroDelta);
    }
    Ok(block_bits as f64 * f_clk / delta_cycles as f64)
}

/// `(delta / f_clk) * p_ave` in joules.
pub fn energy_per_block(delta_cycles: u64, f_clk: f64, p_ave: f64) -> f64 {
    delta_cycles as f64 / f_clk * p_ave
}

#[derive(Clone, Copy, Debug)]
struct Flit {
    packet: u32,
    seq: u32,
    hop: u16,
}

struct Packet {
    path: Vec<usize>,
    chans: Vec<usize>,
    layers: Vec<usize>,
    flits: u32,
    injected: u64,
    delivered: Option<u64>,
    /// Flits received per hop; used by store-and-forward.
    received: Vec<u32>,
}

struct Network {
    ids: Vec<NodeId>,
    chans: Vec<(usize, usize)>,
    chan_index: BTreeMap<(usize, usize), usize>,
    chan_energy: Vec<f64>,
    /// Incoming channels per node in upstream-id order.
    inputs: Vec<Vec<usize>>,
}

impl Network {
    fn new(a: &Architecture, em: &EnergyModel) -> Result<Self, SimError> {
        let ids: Vec<NodeId> = a.node_ids().collect();
        let idx = |n: NodeId| ids.binary_search(&n).unwrap();
        let mut chans = Vec::new();
        let mut chan_energy = Vec::new();
        for l in a.links() {
            let e = em.e_bit(l.length_mm)? * 1e-12;
            chans.push((idx(l.a), idx(l.b)));
            chans.push((idx(l.b), idx(l.a)));
            chan_energy.extend([e, e]);
        }
        let chan_index: BTreeMap<(usize, usize), usize> =
            chans.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut inputs = vec![Vec::new(); ids.len()];
        for (&(u, v), &c) in &chan_index {
            inputs[v].push((u, c));
        }
        let inputs = inputs
            .into_iter()
            .map(|mut v| {
                v.sort_unstable();
                v.into_iter().map(|(_, c)| c).collect()
            })
            .collect();
        Ok(Network {
            ids,
            chans,
            chan_index,
            chan_energy,
            inputs,
        })
    }

    fn index(&self, n: NodeId) -> Option<usize> {
        self.ids.binary_search(&n).ok()
    }
}

struct Move {
    /// `None` is the injection queue.
    from: Option<(usize, usize)>,
    node: usize,
    out: usize,
}

/// Runs `tr` to completion on `a` routed by `t`.
pub fn simulate(
    a: &Architecture,
    t: &RoutingTables,
    tr: &Traffic,
    cfg: &SimConfig,
    em: &EnergyModel,
) -> Result<SimResult, SimError> {
    cfg.validate()?;
    em.validate()?;
    let net = Network::new(a, em)?;
    let report = analyze(a, t, DEFAULT_CYCLE_LIMIT)?;
    if cfg.virtual_channels < report.vc_required {
        return Err(SimError::InsufficientVirtualChannels {
            required: report.vc_required,
            configured: cfg.virtual_channels,
            cycles: report.cycles.len(),
        });
    }

    let mut packets: Vec<Packet> = Vec::with_capacity(tr.message_count());
    let mut rounds: Vec<Vec<(u64, u32)>> = Vec::new();
    for round in &tr.rounds {
        let mut list = Vec::with_capacity(round.len());
        for inj in round {
            for n in [inj.src, inj.dst] {
                if net.index(n).is_none() {
                    return Err(SimError::UnknownNode(n));
                }
            }
            if inj.src == inj.dst {
                return Err(SimError::SelfMessage(inj.src));
            }
            let walk = t.walk(inj.src, inj.dst).map_err(|e| SimError::Undeliverable {
                src: inj.src,
                dst: inj.dst,
                reason: e.to_string(),
            })?;
            let path: Vec<usize> = walk.iter().map(|&n| net.index(n).unwrap()).collect();
            let mut chans = Vec::with_capacity(path.len() - 1);
            for w in path.windows(2) {
                let c = net.chan_index.get(&(w[0], w[1])).ok_or_else(|| SimError::Undeliverable {
                    src: inj.src,
                    dst: inj.dst,
                    reason: format!("no link {}-{}", net.ids[w[0]], net.ids[w[1]]),
                })?;
                chans.push(*c);
            }
            let flits = cfg.flits(inj.payload_bits);
            if cfg.switching == Switching::StoreAndForward && flits as usize > cfg.buffer_depth && path.len() > 2 {
                return Err(SimError::InvalidConfig(format!(
                    "store-and-forward needs buffer_depth >= {flits} flits"
                )));
            }
            list.push((inj.cycle, packets.len() as u32));
            packets.push(Packet {
                layers: report.vc_layers(&walk),
                received: vec![0; path.len()],
                path,
                chans,
                flits,
                injected: 0,
                delivered: None,
            });
        }
        list.sort_by_key(|&(c, p)| (c, p));
        rounds.push(list);
    }

    let vcs = cfg.virtual_channels;
    let nch = net.chans.len();
    let mut buffers: Vec<Vec<VecDeque<Flit>>> = vec![vec![VecDeque::new(); vcs]; nch];
    let mut owner: Vec<Vec<Option<u32>>> = vec![vec![None; vcs]; nch];
    let mut rr = vec![0usize; nch];
    let mut queues: Vec<VecDeque<Flit>> = vec![VecDeque::new(); net.ids.len()];
    let mut in_network: u64 = 0;

    let mut now: u64 = 0;
    let mut first_injection: Option<u64> = None;
    let mut last_delivery: u64 = 0;
    let mut flit_hops = 0u64;
    let mut energy = 0.0;
    let mut delivered_flits = 0u64;

    for list in rounds.iter().filter(|l| !l.is_empty()) {
        if first_injection.is_some() {
            now = now.max(last_delivery + cfg.node_delay);
        }
        let start = now;
        let mut next = 0;
        let mut outstanding = list.len();
        while outstanding > 0 {
            while next < list.len() && start + list[next].0 <= now {
                let p = list[next].1;
                packets[p as usize].injected = now;
                first_injection.get_or_insert(now);
                let src = packets[p as usize].path[0];
                for seq in 0..packets[p as usize].flits {
                    queues[src].push_back(Flit { packet: p, seq, hop: 0 });
                    in_network += 1;
                }
                next += 1;
            }
            if in_network == 0 {
                now = start + list[next].0;
                continue;
            }

            let mut moves: Vec<Move> = Vec::new();
            let mut wants: BTreeMap<usize, Vec<(usize, Move)>> = BTreeMap::new();
            for u in 0..net.ids.len() {
                let mut heads: Vec<(usize, Option<(usize, usize)>, Flit)> = Vec::new();
                if let Some(&f) = queues[u].front() {
                    heads.push((0, None, f));
                }
                for (port, &c) in net.inputs[u].iter().enumerate() {
                    for vc in 0..vcs {
                        if let Some(&f) = buffers[c][vc].front() {
                            heads.push(((port + 1) * vcs + vc, Some((c, vc)), f));
                        }
                    }
                }
                for (slot, from, f) in heads {
                    let pk = &packets[f.packet as usize];
                    let h = f.hop as usize;
                    let out = pk.chans[h];
                    let vc = pk.layers[h];
                    let ok_owner = match owner[out][vc] {
                        None => f.seq == 0,
                        Some(o) => o == f.packet && f.seq > 0,
                    };
                    let ejects = h + 2 == pk.path.len();
                    let ok_space = ejects || buffers[out][vc].len() < cfg.buffer_depth;
                    let ok_saf = cfg.switching == Switching::CutThrough
                        || h == 0
                        || f.seq > 0
                        || pk.received[h] == pk.flits;
                    if ok_owner && ok_space && ok_saf {
                        wants.entry(out).or_default().push((slot, Move { from, node: u, out }));
                    }
                }
            }
            for (out, mut cands) in wants {
                cands.sort_by_key(|&(slot, _)| slot);
                let pos = cands.iter().position(|&(s, _)| s >= rr[out]).unwrap_or(0);
                let (slot, m) = cands.swap_remove(pos);
                rr[out] = slot + 1;
                moves.push(m);
            }

            if moves.is_empty() {
                let mut blocked = Vec::new();
                for (c, bufs) in buffers.iter().enumerate() {
                    for (vc, b) in bufs.iter().enumerate() {
                        if !b.is_empty() {
                            let (u, v) = net.chans[c];
                            blocked.push(((net.ids[u], net.ids[v]), vc));
                        }
                    }
                }
                let cdg_cycles = report
                    .cycles
                    .iter()
                    .filter(|cy| cy.iter().all(|ch| blocked.iter().any(|(b, _)| b == ch)))
                    .cloned()
                    .collect();
                return Err(SimError::Deadlock {
                    cycle: now,
                    blocked,
                    cdg_cycles,
                });
            }

            for m in moves {
                let mut f = match m.from {
                    None => queues[m.node].pop_front(),
                    Some((c, vc)) => buffers[c][vc].pop_front(),
                }
                .expect("head flit present");
                let pk = &mut packets[f.packet as usize];
                let vc = pk.layers[f.hop as usize];
                if f.seq + 1 == pk.flits {
                    owner[m.out][vc] = None;
                } else if f.seq == 0 {
                    owner[m.out][vc] = Some(f.packet);
                }
                flit_hops += 1;
                energy += net.chan_energy[m.out] * cfg.flit_bits as f64;
                f.hop += 1;
                let h = f.hop as usize;
                if h + 1 == pk.path.len() {
                    in_network -= 1;
                    delivered_flits += 1;
                    if f.seq + 1 == pk.flits {
                        pk.delivered = Some(now + 1);
                        last_delivery = now + 1;
                        outstanding -= 1;
                    }
                } else {
                    pk.received[h] += 1;
                    buffers[m.out][vc].push_back(f);
                }
            }
            now += 1;
        }
    }

    let mut latencies = Vec::with_capacity(packets.len());
    for p in &packets {
        let d = p.delivered.expect("drained network delivers every packet");
        latencies.push((d - p.injected, p.chans.len() as u32));
    }
    let delivered = latencies.len() as u64;
    let delta = first_injection.map_or(0, |f| last_delivery - f);
    let avg = if delivered == 0 {
        0.0
    } else {
        latencies.iter().map(|&(l, _)| l as f64).sum::<f64>() / delivered as f64
    };
    Ok(SimResult {
        delta_cycles: delta,
        avg_latency_cycles: avg,
        max_latency_cycles: latencies.iter().map(|&(l, _)| l).max().unwrap_or(0),
        injected_packets: packets.len() as u64,
        delivered_packets: delivered,
        delivered_flits,
        flit_hops,
        energy_joules: energy,
        p_ave_watts: if delta == 0 {
            0.0
        } else {
            energy / (delta as f64 / cfg.f_clk)
        },
        f_clk: cfg.f_clk,
        vc_required: report.vc_required,
        latencies,
    })
}
