// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context as _};
use nocsynth::sim::{mesh_node, CSV_HEADER};
use nocsynth::synth::deadlock::{analyze, DeadlockReport};
use nocsynth::synth::write_arch_file;
use nocsynth::{
    bisection_bandwidth, build_routing_tables, check_constraints, decompose, glue, mesh_baseline,
    simulate, throughput, workloads, Acg, Architecture, Constraints, DecomposeError, DecomposeOptions,
    Decomposition, EnergyModel, Library, NodeId, RoutingTables, SimConfig, SimResult,
};

use crate::args::{BenchArgs, Cli, Command, CompareArgs, GenArgs, LibraryArgs, ModelArgs, SynthArgs, Workload};
use crate::report::{sha256_hex, ArchStats, FileDigest, RunReport, ScenarioRow};
use crate::svg::{bar_chart, Panel};
use crate::Failure;

const CYCLE_LIMIT: usize = 10_000;

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Gen(a) => cmd_gen(a, out),
        Command::ValidateLib(a) => cmd_validate_lib(a, out),
    }
}

/// Parses `unit` or `linear:<e_router>,<e_wire>[,<default_mm>,<lambda>]`.
pub fn parse_energy(spec: &str, lambda: Option<f64>) -> anyhow::Result<EnergyModel> {
    let mut em = if spec == "unit" {
        EnergyModel::unit()
    } else if let Some(rest) = spec.strip_prefix("linear:") {
        let v: Vec<f64> = rest
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("energy value {x:?}: {e}")))
            .collect::<Result<_, _>>()?;
        if v.len() != 2 && v.len() != 4 {
            bail!("linear energy takes 2 or 4 values, got {}", v.len());
        }
        let mut em = EnergyModel::linear(v[0], v[1]);
        if v.len() == 4 {
            em.default_link_mm = v[2];
            em.lambda = v[3];
        }
        em
    } else {
        bail!("unknown energy model {spec:?}; expected `unit` or `linear:<e_router>,<e_wire>`");
    };
    if let Some(l) = lambda {
        em.lambda = l;
    }
    em.validate()?;
    Ok(em)
}

/// Parses `RxC`.
pub fn parse_mesh(spec: &str) -> anyhow::Result<(usize, usize)> {
    let (r, c) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("mesh size {spec:?} is not of the form RxC"))?;
    let r: usize = r.trim().parse().with_context(|| format!("mesh rows in {spec:?}"))?;
    let c: usize = c.trim().parse().with_context(|| format!("mesh columns in {spec:?}"))?;
    if r == 0 || c == 0 {
        bail!("mesh size {spec:?} has a zero dimension");
    }
    Ok((r, c))
}

/// Assigns ACG nodes to mesh positions row-major: by floorplan row then
/// column when every node is placed, by id otherwise.
pub fn mesh_labels(g: &Acg, rows: usize, cols: usize) -> anyhow::Result<BTreeMap<NodeId, NodeId>> {
    if g.node_count() != rows * cols {
        bail!(
            "{} nodes do not fill a {rows}x{cols} mesh",
            g.node_count()
        );
    }
    let mut order: Vec<NodeId> = g.node_ids().collect();
    if g.fully_placed() {
        order.sort_by(|&a, &b| {
            let (pa, pb) = (g.position(a).unwrap(), g.position(b).unwrap());
            pa.y.total_cmp(&pb.y).then(pa.x.total_cmp(&pb.x)).then(a.cmp(&b))
        });
    }
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n, mesh_node(cols, i / cols, i % cols)))
        .collect())
}

fn square_mesh(n: usize) -> (usize, usize) {
    let r = (1..=n).take_while(|r| r * r <= n).filter(|r| n.is_multiple_of(*r)).last().unwrap_or(1);
    (r, n / r)
}

fn load_acg(path: Option<&PathBuf>) -> anyhow::Result<(Acg, FileDigest)> {
    let path = path.ok_or_else(|| anyhow!("no ACG given; pass a file or --acg"))?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let g = Acg::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((g, FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) }))
}

fn load_library(args: &LibraryArgs) -> anyhow::Result<(Library, FileDigest)> {
    match &args.library {
        None => {
            let lib = Library::builtin();
            let sha256 = sha256_hex(lib.serialize().as_bytes());
            Ok((lib, FileDigest { path: "builtin".into(), sha256 }))
        }
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let lib = Library::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
            Ok((lib, FileDigest { path: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) }))
        }
    }
}

fn constraints(m: &ModelArgs) -> Constraints {
    Constraints { max_link_bandwidth: m.max_link_bw, max_bisection_bandwidth: m.max_bisection }
}

fn options(m: &ModelArgs) -> anyhow::Result<DecomposeOptions> {
    if !m.timeout_iso.is_finite() || m.timeout_iso <= 0.0 {
        bail!("--timeout-iso must be positive, got {}", m.timeout_iso);
    }
    if !m.timeout_search.is_finite() || m.timeout_search <= 0.0 {
        bail!("--timeout-search must be positive, got {}", m.timeout_search);
    }
    Ok(DecomposeOptions {
        iso_timeout: Duration::from_secs_f64(m.timeout_iso),
        search_timeout: Some(Duration::from_secs_f64(m.timeout_search)),
        check_invariants: false,
        ..DecomposeOptions::default()
    })
}

fn run_decompose(g: &Acg, lib: &Library, em: &EnergyModel, c: &Constraints, o: &DecomposeOptions) -> Result<Decomposition, Failure> {
    decompose(g, lib, em, c, o).map_err(|e| match e {
        DecomposeError::Infeasible { .. } | DecomposeError::Timeout => Failure::Infeasible(e.to_string()),
        other => Failure::Input(other.into()),
    })
}

struct Synthesis {
    stem: String,
    g: Acg,
    em: EnergyModel,
    arch: Architecture,
    tables: RoutingTables,
    deadlock: DeadlockReport,
    report: RunReport,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn synthesize(a: &SynthArgs, command: &str) -> Result<Synthesis, Failure> {
    let (g, input) = load_acg(a.acg_path())?;
    let (lib, library) = load_library(&a.model.library)?;
    let em = parse_energy(&a.model.energy, a.model.lambda)?;
    let c = constraints(&a.model);
    let opts = options(&a.model)?;
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let d = run_decompose(&g, &lib, &em, &c, &opts)?;
    timings.insert("decompose".to_string(), ms(t));

    let t = Instant::now();
    let synth_err = |e: nocsynth::SynthError| Failure::Input(e.into());
    let arch = glue(&d, &g, &lib, &em, &opts.synth).map_err(synth_err)?;
    let tables = build_routing_tables(&arch, &d, &lib).map_err(synth_err)?;
    let deadlock = analyze(&arch, &tables, CYCLE_LIMIT).map_err(synth_err)?;
    timings.insert("synthesize".to_string(), ms(t));

    let violations = check_constraints(&d, &g, &lib, &em, &c, &opts.synth).map_err(|e| Failure::Input(e.into()))?;
    let listing = d.listing(&lib, true).map_err(|e| Failure::Input(e.into()))?;
    let architecture = ArchStats {
        nodes: arch.node_count(),
        links: arch.link_count(),
        total_wire_mm: arch.total_wire_mm(),
        bisection_bandwidth: bisection_bandwidth(&arch).map(|b| b.bandwidth),
        diameter: arch.diameter(),
        max_primitive_diameter: lib.max_diameter(),
        dependency_cycles: deadlock.cycles.len(),
        vc_required: deadlock.vc_required,
        routing_entries: tables.len(),
        routing_conflicts: tables.conflicts,
    };
    let stem = a
        .acg_path()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "acg".into());
    let report = RunReport {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: a.model.seed,
        input,
        library,
        energy_model: em,
        constraints: c,
        listing,
        cost: d.cost,
        truncated: d.truncated,
        search: d.stats,
        constraint_violations: violations,
        architecture,
        simulations: Vec::new(),
        outputs: Vec::new(),
        timings_ms: timings,
    };
    Ok(Synthesis { stem, g, em, arch, tables, deadlock, report })
}

fn write_output(dir: &Path, name: &str, text: &str, report: &mut RunReport) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    report.outputs.push(FileDigest { path: name.into(), sha256: sha256_hex(text.as_bytes()) });
    Ok(())
}

fn routes_text(t: &RoutingTables) -> String {
    let mut s = String::from("# node destination next_hop\n");
    for (n, d, h) in t.entries() {
        s.push_str(&format!("route {n} {d} {h}\n"));
    }
    s
}

fn write_synthesis(s: &mut Synthesis, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = s.stem.clone();
    let listing = s.report.listing.clone();
    write_output(dir, &format!("{stem}.decomp"), &listing, &mut s.report)?;
    write_output(dir, &format!("{stem}.arch"), &write_arch_file(&s.arch, &s.tables), &mut s.report)?;
    write_output(dir, &format!("{stem}.routes"), &routes_text(&s.tables), &mut s.report)?;
    Ok(())
}

fn write_report(report: &RunReport, dir: &Path) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    let path = dir.join("report.json");
    fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut s = synthesize(a, "synth")?;
    write_synthesis(&mut s, &a.out_dir)?;
    write_report(&s.report, &a.out_dir)?;
    write!(out, "{}", s.report.listing).map_err(anyhow::Error::from)?;
    writeln!(
        out,
        "# {} links, {} dependency cycle(s), {} virtual channel(s) needed",
        s.arch.link_count(),
        s.deadlock.cycles.len(),
        s.deadlock.vc_required
    )
    .map_err(anyhow::Error::from)?;
    if s.report.truncated {
        writeln!(out, "# search stopped early; the cover is feasible but may not be optimal").map_err(anyhow::Error::from)?;
    }
    Ok(())
}

fn row(r: &SimResult, scenario: &str, arch: &str, bits: u64) -> ScenarioRow {
    ScenarioRow {
        scenario: scenario.into(),
        arch: arch.into(),
        delta_cycles: r.delta_cycles,
        avg_latency: r.avg_latency_cycles,
        throughput_bps: throughput(r.delta_cycles, r.f_clk, bits).unwrap_or(0.0),
        energy_j: r.energy_joules,
        p_ave_w: r.p_ave_watts,
    }
}

fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.rounds == 0 {
        return Err(anyhow!("--rounds must be at least 1").into());
    }
    let mut s = synthesize(&a.synth, "compare")?;
    let (rows, cols) = match &a.mesh {
        Some(m) => parse_mesh(m)?,
        None => square_mesh(s.g.node_count()),
    };
    let labels = mesh_labels(&s.g, rows, cols)?;
    let (mesh, mesh_tables) = mesh_baseline(rows, cols, s.em.default_link_mm).map_err(anyhow::Error::from)?;
    let mesh_vc = analyze(&mesh, &mesh_tables, CYCLE_LIMIT).map_err(anyhow::Error::from)?.vc_required;

    let traffic = workloads::traffic_from_acg(&s.g, a.rounds, a.flit_bits);
    let base = SimConfig { flit_bits: a.flit_bits, ..SimConfig::default() };
    let custom_cfg = SimConfig { virtual_channels: a.vc.unwrap_or(s.deadlock.vc_required), ..base };
    let mesh_cfg = SimConfig { virtual_channels: a.vc.unwrap_or(mesh_vc), ..base };

    let t = Instant::now();
    let custom = simulate(&s.arch, &s.tables, &traffic, &custom_cfg, &s.em).map_err(anyhow::Error::from)?;
    let meshed = simulate(&mesh, &mesh_tables, &traffic.relabel(&labels), &mesh_cfg, &s.em).map_err(anyhow::Error::from)?;
    s.report.timings_ms.insert("simulate".into(), ms(t));

    let bits = a.block_bits * a.rounds as u64;
    let mesh_name = format!("mesh{rows}x{cols}");
    let csv = format!(
        "{CSV_HEADER}\n{}\n{}\n",
        custom.csv_row(&s.stem, "custom", bits),
        meshed.csv_row(&s.stem, &mesh_name, bits)
    );
    s.report.simulations = vec![row(&custom, &s.stem, "custom", bits), row(&meshed, &s.stem, &mesh_name, bits)];
    let chart = bar_chart(
        &["custom", &mesh_name],
        &[
            Panel { title: "delta (cycles)", values: vec![custom.delta_cycles as f64, meshed.delta_cycles as f64] },
            Panel { title: "avg latency (cycles)", values: vec![custom.avg_latency_cycles, meshed.avg_latency_cycles] },
            Panel { title: "energy (J)", values: vec![custom.energy_joules, meshed.energy_joules] },
        ],
    );

    let dir = a.synth.out_dir.clone();
    write_synthesis(&mut s, &dir)?;
    let stem = s.stem.clone();
    write_output(&dir, &format!("{stem}.csv"), &csv, &mut s.report)?;
    write_output(&dir, &format!("{stem}.svg"), &chart, &mut s.report)?;
    write_report(&s.report, &dir)?;
    write!(out, "{csv}").map_err(anyhow::Error::from)?;
    Ok(())
}

pub const BENCH_HEADER: &str = "n,seed,edges,matches,remainder,cost,truncated,seconds";

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (lib, _) = load_library(&a.model.library)?;
    let em = parse_energy(&a.model.energy, a.model.lambda)?;
    let c = constraints(&a.model);
    let opts = options(&a.model)?;
    let mut csv = format!("{BENCH_HEADER}\n");
    writeln!(out, "{BENCH_HEADER}").map_err(anyhow::Error::from)?;
    for &n in &a.sizes {
        for i in 0..a.count {
            let seed = a.model.seed.wrapping_add(i);
            let spec = workloads::bench_spec(n, seed, &lib);
            let g = workloads::planted_acg(seed, &spec, &lib)
                .with_context(|| format!("generating n={n} seed={seed}"))?
                .acg;
            let t = Instant::now();
            let d = run_decompose(&g, &lib, &em, &c, &opts)?;
            let secs = t.elapsed().as_secs_f64();
            let line = format!(
                "{n},{seed},{},{},{},{},{},{secs:.6}",
                g.edge_count(),
                d.matches.len(),
                d.remainder.len(),
                nocsynth::decompose::format_cost(d.cost),
                d.truncated
            );
            writeln!(out, "{line}").map_err(anyhow::Error::from)?;
            csv.push_str(&line);
            csv.push('\n');
        }
    }
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("bench.csv"), csv).context("writing bench.csv")?;
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let lib = Library::builtin();
    let g = match a.workload {
        Workload::Aes => workloads::aes_acg(),
        Workload::Planted => {
            let spec = workloads::bench_spec(a.n, a.seed, &lib);
            workloads::planted_acg(a.seed, &spec, &lib).map_err(anyhow::Error::from)?.acg
        }
        Workload::Random => workloads::random_acg(a.seed, a.n, a.density, 8.0, 1.0).map_err(anyhow::Error::from)?,
    };
    let text = g.serialize();
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => write!(out, "{text}").map_err(anyhow::Error::from)?,
    }
    Ok(())
}

fn cmd_validate_lib(a: &LibraryArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (lib, digest) = load_library(a)?;
    let problems: BTreeMap<_, _> = lib.validate().into_iter().collect();
    for p in lib.iter() {
        match problems.get(&p.id) {
            None => writeln!(out, "{} {}: ok", p.id, p.name),
            Some(v) => {
                let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{} {}: {}", p.id, p.name, msgs.join("; "))
            }
        }
        .map_err(anyhow::Error::from)?;
    }
    writeln!(out, "library {} sha256 {}", digest.path, digest.sha256).map_err(anyhow::Error::from)?;
    if !problems.is_empty() {
        return Err(anyhow!("{} primitive(s) failed validation", problems.len()).into());
    }
    Ok(())
}
