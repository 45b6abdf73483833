// SPDX-License-Identifier: Apache-2.0

//! Application-specific network-on-chip synthesis.
//!
//! An application characterization graph (ACG) is covered by communication
//! primitives from a [`Library`] with a branch-and-bound search
//! ([`decompose`]). The resulting [`Decomposition`] is glued into an
//! [`Architecture`] with next-hop [`RoutingTables`], checked for
//! channel-dependency cycles, and compared against a mesh with a cycle-level
//! simulator.
//!
//! ```
//! use nocsynth::{decompose, workloads, Constraints, DecomposeOptions, EnergyModel, Library};
//!
//! let g = workloads::aes_acg();
//! let lib = Library::builtin();
//! let d = decompose(&g, &lib, &EnergyModel::unit(), &Constraints::unlimited(),
//!                   &DecomposeOptions::default()).unwrap();
//! assert_eq!(d.matches.len(), 6);
//! assert_eq!(d.remainder.len(), 4);
//! ```

pub mod decompose;
pub mod energy;
pub mod graph;
pub mod iso;
pub mod library;
pub mod sim;
pub mod synth;
pub mod workloads;

pub use decompose::{
    bisection_bandwidth, check_bandwidth, check_constraints, check_reconstruction, decompose,
    lower_bound, match_cost, remainder_cost, unavoidable_violations, Bisection, ConstraintViolation, Constraints,
    DecomposeError, DecomposeOptions, Decomposition, SearchStats,
};
pub use energy::{EnergyError, EnergyModel, Metric};
pub use graph::{Acg, EdgeKey, EdgeSet, EdgeWeight, GraphError, NodeId, ParseError, Position};
pub use iso::{enumerate_matches, verify_match, Match, MatchList};
pub use library::{CommPrimitive, Library, LibraryError, PrimitiveId, PrimitiveKind};
pub use sim::{
    energy_per_block, mesh_baseline, simulate, throughput, SimConfig, SimError, SimResult,
    Switching, Traffic,
};
pub use synth::{
    build_routing_tables, detect_deadlock, glue, Architecture, RoutingTables, SynthError,
    SynthOptions,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/library.md")]
    mod library {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    mod workloads {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
