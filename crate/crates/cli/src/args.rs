// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "nocsynth", version, about = "Application-specific network-on-chip synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose an ACG and write the listing, architecture and routing tables.
    Synth(SynthArgs),
    /// Synthesize, then simulate the same traffic on the custom network and a mesh.
    Compare(CompareArgs),
    /// Time the decomposer on planted graphs of growing size.
    Bench(BenchArgs),
    /// Write a generated ACG.
    Gen(GenArgs),
    /// Check every primitive of a library for consistency.
    ValidateLib(LibraryArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LibraryArgs {
    /// Primitive library file; the built-in library when omitted.
    #[arg(long)]
    pub library: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub library: LibraryArgs,
    /// `unit` or `linear:<e_router>,<e_wire>[,<default_mm>,<lambda>]`.
    #[arg(long, default_value = "unit")]
    pub energy: String,
    /// Cost multiplier for edges left as dedicated links.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Per-link bandwidth limit in bits/s.
    #[arg(long)]
    pub max_link_bw: Option<f64>,
    /// Bisection bandwidth limit in bits/s.
    #[arg(long)]
    pub max_bisection: Option<f64>,
    /// Matcher timeout per primitive, in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub timeout_iso: f64,
    /// Limit on the constrained search, in seconds; the best feasible cover
    /// found so far is kept when it expires.
    #[arg(long, default_value_t = 60.0)]
    pub timeout_search: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// ACG file (same as `--acg`).
    #[arg(value_name = "ACG", conflicts_with = "acg")]
    pub acg_file: Option<PathBuf>,
    #[arg(long)]
    pub acg: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl SynthArgs {
    pub fn acg_path(&self) -> Option<&PathBuf> {
        self.acg.as_ref().or(self.acg_file.as_ref())
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Mesh size as `RxC`; the most square factorization of the node count by default.
    #[arg(long)]
    pub mesh: Option<String>,
    /// Traffic rounds; each round sends every ACG edge once.
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[arg(long, default_value_t = 32)]
    pub flit_bits: u32,
    /// Virtual channels on both networks; what the routing needs by default.
    #[arg(long)]
    pub vc: Option<usize>,
    /// Bits processed per round, for the throughput column.
    #[arg(long, default_value_t = 128)]
    pub block_bits: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Graph sizes to run.
    #[arg(long, value_delimiter = ',', default_value = "4,18,40")]
    pub sizes: Vec<usize>,
    /// Instances per size, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 10)]
    pub count: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Workload {
    Aes,
    Planted,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub workload: Workload,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Edge probability for `random`.
    #[arg(long, default_value_t = 0.2)]
    pub density: f64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
