//! Boundary analysis of flow-table usage reduction algorithms.
//!
//! Flow entries can be created for every flow at its first packet (the
//! reactive baseline), or only for flows detected as elephants by one of
//! three algorithms:
//!
//! * **first** knows the final flow length/size at the first packet,
//! * **threshold** installs the entry once a per-flow counter exceeds a limit,
//! * **sampling** installs the entry at the first randomly sampled packet.
//!
//! The crate measures traffic coverage, operations reduction and occupancy
//! reduction for each algorithm, both by Monte-Carlo simulation over flows
//! drawn from a [`model::TrafficModel`] and by direct numerical evaluation of
//! the same model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod analytic;
pub mod cli;
pub mod generator;
pub mod model;
pub mod sweep;
