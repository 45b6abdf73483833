// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use nocsynth::{ConstraintViolation, Constraints, EnergyModel, SearchStats};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ArchStats {
    pub nodes: usize,
    pub links: usize,
    pub total_wire_mm: f64,
    pub bisection_bandwidth: Option<f64>,
    pub diameter: Option<u32>,
    pub max_primitive_diameter: Option<u32>,
    pub dependency_cycles: usize,
    pub vc_required: usize,
    pub routing_entries: usize,
    pub routing_conflicts: usize,
}

/// One simulated network, in CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub arch: String,
    pub delta_cycles: u64,
    pub avg_latency: f64,
    pub throughput_bps: f64,
    pub energy_j: f64,
    pub p_ave_w: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub input: FileDigest,
    pub library: FileDigest,
    pub energy_model: EnergyModel,
    pub constraints: Constraints,
    pub listing: String,
    pub cost: f64,
    pub truncated: bool,
    pub search: SearchStats,
    pub constraint_violations: Vec<ConstraintViolation>,
    pub architecture: ArchStats,
    pub simulations: Vec<ScenarioRow>,
    pub outputs: Vec<FileDigest>,
    /// Wall-clock milliseconds per phase; the only field that varies between runs.
    pub timings_ms: BTreeMap<String, f64>,
}
