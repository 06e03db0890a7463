//! Directed-network projected subgradient optimization with surplus consensus.
//!
//! Each agent `i` keeps an estimate `x_i` and a surplus variable `y_i`. In
//! every synchronous round it mixes in-neighbor estimates with a
//! row-stochastic matrix `A`, splits surplus to out-neighbors with a
//! column-stochastic matrix `B`, takes a subgradient step on its private
//! objective and projects back onto the shared constraint set.
//!
//! Modules:
//!
//! * [`graph`]: directed topologies, strong connectivity, edge-list I/O.
//! * [`weights`]: the `A`, `B` and augmented `M` matrices and their mixing
//!   diagnostics.
//! * [`projection`]: closed-form Euclidean projections.
//! * [`oracle`]: local objectives, subgradients, step sizes and a
//!   centralized reference solver.
//! * [`solver`]: the synchronous engine, its compact-form twin and traces.
//! * [`config`]: flat `key = value` run configuration.
//! * [`cli`]: the operations behind the `ddps` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod projection;
pub mod solver;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use graph::DirectedGraph;
pub use oracle::{LocalObjective, ObjectiveSpec, Sample, StepSchedule};
pub use projection::ConstraintSet;
pub use solver::{Ddps, RunOptions, RunReport, SolverState, SolverTrace};
pub use weights::{EpsilonPolicy, SurplusSystem};
