// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::graph::NodeId;

/// One message handed to the network interface of `src`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Injection {
    /// Offset from the start of the injection's round.
    pub cycle: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_bits: u64,
}

/// Messages grouped into barrier-separated rounds.
///
/// Round `r + 1` starts `node_delay` cycles after the last message of round
/// `r` is delivered; injection cycles are offsets from the round start. A
/// trace is a single round.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Traffic {
    pub rounds: Vec<Vec<Injection>>,
}

impl Traffic {
    pub fn trace(events: Vec<Injection>) -> Self {
        Traffic {
            rounds: if events.is_empty() { Vec::new() } else { vec![events] },
        }
    }

    /// The same message set repeated `rounds` times with barriers in between.
    pub fn repeated(round: Vec<Injection>, rounds: usize) -> Self {
        if round.is_empty() {
            return Traffic::default();
        }
        Traffic {
            rounds: vec![round; rounds],
        }
    }

    /// Independent Bernoulli arrivals approximating a Poisson process: every
    /// node injects a message with probability `rate` per cycle for `cycles`
    /// cycles, to a uniformly chosen other node.
    pub fn poisson(nodes: &[NodeId], rate: f64, cycles: u64, payload_bits: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events = Vec::new();
        if nodes.len() < 2 {
            return Traffic::default();
        }
        let rate = rate.clamp(0.0, 1.0);
        for cycle in 0..cycles {
            for (i, &src) in nodes.iter().enumerate() {
                if rng.gen_bool(rate) {
                    let mut j = rng.gen_range(0..nodes.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    events.push(Injection {
                        cycle,
                        src,
                        dst: nodes[j],
                        payload_bits,
                    });
                }
            }
        }
        Traffic::trace(events)
    }

    pub fn message_count(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.message_count() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Injection> + '_ {
        self.rounds.iter().flatten()
    }

    /// Renames endpoints; ids missing from `map` are kept.
    pub fn relabel(&self, map: &BTreeMap<NodeId, NodeId>) -> Traffic {
        let f = |n: NodeId| map.get(&n).copied().unwrap_or(n);
        Traffic {
            rounds: self
                .rounds
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|i| Injection {
                            src: f(i.src),
                            dst: f(i.dst),
                            ..*i
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Same traffic with every payload multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Traffic {
        Traffic {
            rounds: self
                .rounds
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|i| Injection {
                            payload_bits: i.payload_bits * k,
                            ..*i
                        })
                        .collect()
                })
                .collect(),
        }
    }
}
