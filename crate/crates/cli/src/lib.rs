// SPDX-License-Identifier: Apache-2.0

//! The `nocsynth` command-line tool.
//!
//! Exit codes: 0 on success, 1 for unreadable or invalid input, 2 when no
//! decomposition satisfies the constraints.

mod args;
mod commands;
mod report;
mod svg;

use std::fmt;

pub use args::{BenchArgs, Cli, Command, CompareArgs, GenArgs, LibraryArgs, ModelArgs, SynthArgs, Workload};
pub use commands::{mesh_labels, parse_energy, parse_mesh, run};
pub use report::{ArchStats, RunReport, ScenarioRow};

#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Infeasible(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Infeasible(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "{e:#}"),
            Failure::Infeasible(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}
