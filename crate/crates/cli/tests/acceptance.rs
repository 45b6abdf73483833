// SPDX-License-Identifier: Apache-2.0

//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nocsynth::synth::deadlock::analyze;
use nocsynth::synth::link_demands;
use nocsynth::{
    build_routing_tables, check_reconstruction, decompose, detect_deadlock, glue, mesh_baseline, simulate,
    throughput, workloads, Acg, Architecture, Constraints, DecomposeError, DecomposeOptions, Decomposition,
    EnergyModel, Library, Match, NodeId, PrimitiveId, RoutingTables, SimConfig, SynthOptions,
};

fn nocsynth(args: &[&str], dir: &Path) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_nocsynth"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

/// Reads a listing back into matches and remainder.
fn parse_listing(text: &str, lib: &Library) -> (f64, Vec<Match>, Vec<(NodeId, NodeId)>) {
    let mut cost = f64::NAN;
    let mut matches = Vec::new();
    let mut remainder = Vec::new();
    for line in text.lines() {
        if let Some(c) = line.strip_prefix("COST: ") {
            cost = c.trim().parse().unwrap();
        } else if let Some(e) = line.strip_prefix("edge ") {
            let v: Vec<NodeId> = e.split_whitespace().map(|x| x.parse().unwrap()).collect();
            remainder.push((v[0], v[1]));
        } else if let Some((id, rest)) = line.split_once(": ") {
            let Ok(id) = id.parse::<PrimitiveId>() else { continue };
            if id == 0 as PrimitiveId {
                continue;
            }
            let (_, map) = rest.split_once("Mapping: ").unwrap();
            let mapping: Vec<NodeId> = map
                .split("), ")
                .map(|p| p.trim_matches(['(', ')']).split_whitespace().nth(1).unwrap().parse().unwrap())
                .collect();
            matches.push(Match::from_mapping(lib.get(id).unwrap(), mapping));
        }
    }
    (cost, matches, remainder)
}

fn aes_setup(em: &EnergyModel) -> (Acg, Library, Decomposition, Architecture, RoutingTables) {
    let g = workloads::aes_acg();
    let lib = Library::builtin();
    let d = decompose(&g, &lib, em, &Constraints::unlimited(), &DecomposeOptions::default()).unwrap();
    let a = glue(&d, &g, &lib, em, &SynthOptions::default()).unwrap();
    let t = build_routing_tables(&a, &d, &lib).unwrap();
    (g, lib, d, a, t)
}

fn models() -> [EnergyModel; 3] {
    [EnergyModel::unit(), EnergyModel::unit().with_lambda(1.0), EnergyModel::linear(1.0, 0.5)]
}

fn c1_aes_structure() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("aes.acg"), workloads::aes_acg().serialize()).unwrap();
    let started = Instant::now();
    let (code, out, err) = nocsynth(&["synth", "aes.acg", "--energy", "unit", "--lambda", "2", "--out-dir", "o"], tmp.path());
    let elapsed = started.elapsed();
    if code != 0 {
        return Err(format!("exit {code}: {err}"));
    }
    let g = workloads::aes_acg();
    let lib = Library::builtin();
    let (cost, matches, remainder) = parse_listing(&out, &lib);
    let sets = |name: &str| -> BTreeSet<BTreeSet<NodeId>> {
        matches
            .iter()
            .filter(|m| lib.get(m.primitive_id).unwrap().name == name)
            .map(|m| m.mapping.iter().copied().collect())
            .collect()
    };
    let columns: BTreeSet<BTreeSet<NodeId>> = (1..=4).map(|c| (0..4).map(|r| 4 * r + c).collect()).collect();
    let rows: BTreeSet<BTreeSet<NodeId>> = [(5..=8).collect(), (13..=16).collect()].into();
    let row3: BTreeSet<(NodeId, NodeId)> = [(9, 11), (11, 9), (10, 12), (12, 10)].into();
    if matches.len() != 6 || sets("MGG4") != columns || sets("L4") != rows {
        return Err(format!("unexpected matches:\n{out}"));
    }
    if remainder.iter().copied().collect::<BTreeSet<_>>() != row3 || remainder.len() != 4 {
        return Err(format!("unexpected remainder {remainder:?}"));
    }
    let d = oracle::to_decomposition(std::iter::empty(), &remainder);
    let d = Decomposition { matches, ..d };
    let expected = oracle::decomposition_cost(&d, &g, &lib, &EnergyModel::unit());
    if (expected - cost).abs() > 1e-9 {
        return Err(format!("printed cost {cost}, oracle {expected}"));
    }
    if elapsed >= Duration::from_secs(5) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("4 MGG4 on columns, L4 on rows 2 and 4, row-3 remainder, cost {cost} = oracle, {elapsed:.2?}"))
}

fn c2_random_optimality() -> Result<String, String> {
    let lib = Library::builtin();
    let started = Instant::now();
    let mut count = 0;
    for seed in 0..120u64 {
        let g = oracle::random_host(seed, 10, 14, &lib);
        let em = models()[seed as usize % 3];
        let d = decompose(&g, &lib, &em, &Constraints::unlimited(), &DecomposeOptions::default()).map_err(|e| e.to_string())?;
        let best = oracle::exhaustive_optimum(&g, &em, &oracle::brute_matches(&g, &lib, &em));
        if (d.cost - best).abs() > 1e-9 * best.max(1.0) {
            return Err(format!("seed {seed}: search {} vs exhaustive {best}", d.cost));
        }
        count += 1;
    }
    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("{count} graphs of at most 10 nodes match exhaustive enumeration, {elapsed:.2?}"))
}

fn c3_reconstruction() -> Result<String, String> {
    let lib = Library::builtin();
    let opts = DecomposeOptions { check_invariants: true, ..DecomposeOptions::default() };
    let mut graphs: Vec<Acg> = (0..60).map(|s| oracle::random_host(1000 + s, 10, 14, &lib)).collect();
    graphs.push(workloads::aes_acg());
    for n in [8, 18] {
        for seed in 0..5 {
            graphs.push(workloads::planted_acg(seed, &workloads::bench_spec(n, seed, &lib), &lib).unwrap().acg);
        }
    }
    let mut failures = 0;
    for g in &graphs {
        let d = decompose(g, &lib, &EnergyModel::unit(), &Constraints::unlimited(), &opts).map_err(|e| e.to_string())?;
        failures += d.stats.reconstruction_failures;
        oracle::check_partition(&d, g, &lib)?;
        check_reconstruction(&d, g, &lib)?;
    }
    if failures > 0 {
        return Err(format!("{failures} leaves failed the reconstruction check"));
    }
    Ok(format!("{} decompositions partition their graphs; 0 leaf violations", graphs.len()))
}

fn c4_aes_routing() -> Result<String, String> {
    let (g, _, d, _, t) = aes_setup(&EnergyModel::unit());
    let covered = d.covered();
    let mut checked = 0;
    for ((s, dst), _) in g.edges() {
        let path = oracle::table_walk(&t, s, dst, 16).ok_or(format!("{s} -> {dst} not delivered"))?;
        let hops = path.len() - 1;
        let limit = if covered.contains(&(s, dst)) { 2 } else { 1 };
        let ok = if limit == 1 { hops == 1 } else { hops <= 2 };
        if !ok {
            return Err(format!("{s} -> {dst} takes {hops} hops"));
        }
        checked += 1;
    }
    Ok(format!("{checked} pairs delivered: primitive pairs in at most 2 hops, remainder pairs in 1"))
}

fn c5_gossip() -> Result<String, String> {
    let lib = Library::builtin();
    let p = lib.by_name("MGG4").ok_or("no MGG4")?;
    if p.schedule.len() != 2 {
        return Err(format!("{} rounds", p.schedule.len()));
    }
    let all: BTreeSet<usize> = (1..=p.k).collect();
    let mut know: Vec<BTreeSet<usize>> = (0..=p.k).map(|v| BTreeSet::from([v])).collect();
    for (r, round) in p.schedule.iter().enumerate() {
        let mut busy = vec![0; p.k + 1];
        let before = know.clone();
        for &(a, b) in round {
            busy[a] += 1;
            busy[b] += 1;
            let (x, y) = (a.min(b), a.max(b));
            if !p.implementation.contains(&(x, y)) {
                return Err(format!("round {r}: {a}-{b} is not a link"));
            }
            know[a].extend(&before[b]);
            know[b].extend(&before[a]);
        }
        if busy.iter().any(|&n| n > 1) {
            return Err(format!("round {r}: a node exchanges twice"));
        }
        if r == 0 && (1..=p.k).all(|v| know[v] == all) {
            return Err("complete after one round".into());
        }
    }
    if (1..=p.k).any(|v| know[v] != all) {
        return Err(format!("incomplete after 2 rounds: {know:?}"));
    }
    Ok("all 4 nodes know everything after exactly 2 rounds, one exchange per node per round".into())
}

fn c6_throughput() -> Result<String, String> {
    let a = throughput(271, 100e6, 128).map_err(|e| e.to_string())? / 1e6;
    let b = throughput(199, 100e6, 128).map_err(|e| e.to_string())? / 1e6;
    if (a - 47.2).abs() > 0.05 || (b - 64.3).abs() > 0.05 {
        return Err(format!("{a} and {b} Mbps"));
    }
    Ok(format!("{a:.2} Mbps and {b:.2} Mbps"))
}

fn c7_compare() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("aes.acg"), workloads::aes_acg().serialize()).unwrap();
    let started = Instant::now();
    let (code, out, err) = nocsynth(
        &["compare", "aes.acg", "--energy", "linear:1,0.05", "--mesh", "4x4", "--rounds", "4", "--out-dir", "o"],
        tmp.path(),
    );
    let elapsed = started.elapsed();
    if code != 0 {
        return Err(format!("exit {code}: {err}"));
    }
    let rows: Vec<Vec<f64>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).map(|x| x.parse().unwrap()).collect())
        .collect();
    let (custom, mesh) = (&rows[0], &rows[1]);
    let saving = 1.0 - custom[3] / mesh[3];
    if !(custom[0] < mesh[0] && custom[1] < mesh[1] && saving >= 0.2) {
        return Err(format!("custom {custom:?} vs mesh {mesh:?}"));
    }
    if elapsed >= Duration::from_secs(30) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "delta {} < {}, latency {} < {}, energy {:.1}% lower, {elapsed:.2?}",
        custom[0], mesh[0], custom[1], mesh[1], saving * 100.0
    ))
}

fn c8_bench() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, err) = nocsynth(&["bench", "--sizes", "18,40", "--count", "10", "--seed", "0"], tmp.path());
    if code != 0 {
        return Err(format!("exit {code}: {err}"));
    }
    let mut worst = [0.0f64; 2];
    for line in out.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let secs: f64 = f[7].parse().unwrap();
        let (slot, limit) = if f[0] == "18" { (0, 0.3) } else { (1, 180.0) };
        if secs >= limit || f[6] != "false" {
            return Err(format!("instance {line}"));
        }
        worst[slot] = worst[slot].max(secs);
    }
    Ok(format!("worst n=18 {:.3}s, worst n=40 {:.3}s", worst[0], worst[1]))
}

fn c9_bandwidth() -> Result<String, String> {
    let lib = Library::builtin();
    let em = EnergyModel::unit();
    let (mut flipped, mut infeasible) = (0, 0);
    for seed in 0..80u64 {
        let g = oracle::random_host(2000 + seed, 9, 12, &lib);
        let free = decompose(&g, &lib, &em, &Constraints::unlimited(), &DecomposeOptions::default()).unwrap();
        let peak = link_demands(&free, &g, &lib).unwrap().values().cloned().fold(0.0, f64::max);
        let cap = peak - 1.0;
        let c = Constraints { max_link_bandwidth: Some(cap), ..Constraints::unlimited() };
        let expected = oracle::exhaustive_optimum_capped(&g, &lib, &em, &oracle::brute_matches(&g, &lib, &em), cap);
        match (decompose(&g, &lib, &em, &c, &DecomposeOptions::default()), expected) {
            (Ok(d), Some(best)) => {
                if let Some((l, v)) = oracle::link_demand(&d, &g, &lib).into_iter().find(|&(_, v)| v > cap) {
                    return Err(format!("seed {seed}: link {l:?} carries {v} over {cap}"));
                }
                if (d.cost - best).abs() > 1e-9 {
                    return Err(format!("seed {seed}: cost {} vs capped optimum {best}", d.cost));
                }
                flipped += 1;
            }
            (Err(DecomposeError::Infeasible { .. }), None) => infeasible += 1,
            (got, want) => return Err(format!("seed {seed}: got {got:?}, oracle {want:?}")),
        }
    }
    let mut clique = Acg::new();
    for v in 1..=4 {
        clique.add_node(v, None).unwrap();
    }
    for a in 1..=4 {
        for b in 1..=4 {
            if a != b {
                clique.add_edge(a, b, 1.0, 1.0).unwrap();
            }
        }
    }
    let free = decompose(&clique, &lib, &em, &Constraints::unlimited(), &DecomposeOptions::default()).unwrap();
    let peak = link_demands(&free, &clique, &lib).unwrap().values().cloned().fold(0.0, f64::max);
    let c = Constraints { max_link_bandwidth: Some(peak - 1.0), ..Constraints::unlimited() };
    let tight = decompose(&clique, &lib, &em, &c, &DecomposeOptions::default());
    match &tight {
        Ok(d) if d.matches != free.matches => {}
        Err(DecomposeError::Infeasible { .. }) => {}
        other => return Err(format!("tight cap on a 4-clique left {other:?}")),
    }
    Ok(format!(
        "80 capped graphs agree with filtered enumeration ({flipped} alternatives, {infeasible} infeasible); 4-clique flips under cap {}",
        peak - 1.0
    ))
}

fn ring(n: NodeId) -> (Architecture, RoutingTables) {
    let mut a = Architecture::new();
    for i in 1..=n {
        a.add_node(i, None);
    }
    let next = |i: NodeId| i % n + 1;
    for i in 1..=n {
        a.add_link(i, next(i), 1.0, 1.0);
    }
    let mut t = RoutingTables::new();
    for i in 1..=n {
        t.insert(i, next(i), next(i));
        t.insert(i, next(next(i)), next(i));
        t.insert(next(i), next(next(i)), next(next(i)));
    }
    (a, t)
}

fn c10_deadlock() -> Result<String, String> {
    let (ma, mt) = mesh_baseline(4, 4, 1.0).map_err(|e| e.to_string())?;
    let mesh = detect_deadlock(&ma, &mt).map_err(|e| e.to_string())?;
    let mesh_brute = oracle::brute_cycles(&oracle::brute_dependencies(&mt));
    if !mesh.is_empty() || !mesh_brute.is_empty() {
        return Err(format!("mesh: {} cycles, brute force {}", mesh.len(), mesh_brute.len()));
    }
    let (ra, rt) = ring(4);
    let found: BTreeSet<Vec<(NodeId, NodeId)>> =
        detect_deadlock(&ra, &rt).map_err(|e| e.to_string())?.iter().map(|c| oracle::normalize(c)).collect();
    let brute = oracle::brute_cycles(&oracle::brute_dependencies(&rt));
    if found.len() != 1 || found != brute {
        return Err(format!("ring: {found:?} vs brute force {brute:?}"));
    }
    Ok("4x4 XY mesh has no cycle; 2-hop unidirectional ring has exactly one, as brute force finds".into())
}

fn c11_simulation() -> Result<String, String> {
    let em = EnergyModel::linear(1.0, 0.05);
    let (g, _, _, a, t) = aes_setup(&em);
    let vc = analyze(&a, &t, 10_000).map_err(|e| e.to_string())?.vc_required;
    let (ma, mt) = mesh_baseline(4, 4, 1.0).map_err(|e| e.to_string())?;
    let mut runs = 0;
    for rounds in [1, 3] {
        let tr = workloads::traffic_from_acg(&g, rounds, 32);
        for (arch, tables, vcs) in [(&a, &t, vc), (&ma, &mt, 1)] {
            let cfg = SimConfig { virtual_channels: vcs, ..SimConfig::default() };
            let r1 = simulate(arch, tables, &tr, &cfg, &em).map_err(|e| e.to_string())?;
            let r2 = simulate(arch, tables, &tr, &cfg, &em).map_err(|e| e.to_string())?;
            let flits: u64 = tr.iter().map(|i| cfg.flits(i.payload_bits) as u64).sum();
            if r1.injected_packets != tr.message_count() as u64
                || r1.delivered_packets != r1.injected_packets
                || r1.delivered_flits != flits
            {
                return Err(format!("conservation: {r1:?}"));
            }
            if r1 != r2 || r1.energy_joules.to_bits() != r2.energy_joules.to_bits() {
                return Err("two runs differ".into());
            }
            runs += 1;
        }
    }
    let lib = Library::builtin();
    for seed in 0..20 {
        let g = oracle::random_host(3000 + seed, 9, 12, &lib);
        let d = decompose(&g, &lib, &em, &Constraints::unlimited(), &DecomposeOptions::default()).unwrap();
        let a = glue(&d, &g, &lib, &em, &SynthOptions::default()).unwrap();
        let t = build_routing_tables(&a, &d, &lib).unwrap();
        let tr = workloads::traffic_from_acg(&g, 2, 32);
        let cfg = SimConfig { virtual_channels: 16, ..SimConfig::default() };
        let r1 = simulate(&a, &t, &tr, &cfg, &em).map_err(|e| e.to_string())?;
        let r2 = simulate(&a, &t, &tr, &cfg, &em).map_err(|e| e.to_string())?;
        if r1.delivered_packets != tr.message_count() as u64 || r1 != r2 {
            return Err(format!("seed {seed}: conservation or determinism"));
        }
        runs += 1;
    }
    Ok(format!("{runs} simulations deliver every packet and flit and repeat bit for bit"))
}

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 11] = [
        ("AES decomposition structure", c1_aes_structure),
        ("optimality on random graphs", c2_random_optimality),
        ("reconstruction identity", c3_reconstruction),
        ("AES routing hop counts", c4_aes_routing),
        ("MGG4 gossip schedule", c5_gossip),
        ("throughput formula", c6_throughput),
        ("custom network beats the mesh", c7_compare),
        ("benchmark run times", c8_bench),
        ("bandwidth constraint soundness", c9_bandwidth),
        ("deadlock detection", c10_deadlock),
        ("simulation conservation and determinism", c11_simulation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
