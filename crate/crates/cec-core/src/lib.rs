//! Coded elastic computing over a pool of machines with heterogeneous speeds.
//!
//! A data matrix is MDS-encoded into one coded shard per machine so that any
//! `L` shards suffice to recover a matrix-vector product exactly. When the
//! set of available machines changes between time steps, the scheduler
//! recomputes the provably optimal per-machine work fractions, realizes them
//! as row assignments in which every coded row is handled by exactly `L`
//! machines, and the decoder reconstructs the product from the per-row
//! partial results.
//!
//! Modules, bottom up:
//!
//! * [`frac`] - exact rational arithmetic helpers.
//! * [`field`] - arithmetic in GF(2^31 - 1).
//! * [`codec`] - Vandermonde encoding, partial computation, exact decoding.
//! * [`optimizer`] - minimal-time load fractions for an available subset.
//! * [`assignment`] - turning load fractions into row assignments.
//! * [`simulator`] - multi-step timelines, reports, baselines.

use serde::{Deserialize, Serialize};
use std::fmt;

pub mod assignment;
pub mod codec;
pub mod field;
pub mod frac;
pub mod optimizer;
pub mod simulator;

/// 1-based machine identifier. Identifiers are stable across time steps;
/// preemption removes a machine from the available set without renumbering.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineId(pub u32);

impl MachineId {
    /// Zero-based position of this machine in vectors indexed by id.
    pub fn index(self) -> usize {
        debug_assert!(self.0 >= 1);
        self.0 as usize - 1
    }
}

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// Coarse classification of failures, used by callers to pick exit codes.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FailureClass {
    /// Malformed or inconsistent input.
    InvalidInput,
    /// Well-formed input that admits no solution (for example fewer
    /// available machines than the split factor).
    Infeasible,
    /// An internal invariant broke; indicates a bug, not bad input.
    Internal,
}
