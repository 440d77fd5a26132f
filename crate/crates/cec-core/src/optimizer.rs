//! Minimal-time load fractions for an available machine subset.
//!
//! Machine `n` finishing a fraction `mu[n]` of the coded rows takes
//! `mu[n] / s[n]`; the step finishes when the slowest machine does. Subject
//! to every row being covered `L` times (sum of fractions equal to `L`,
//! each fraction at most 1), the optimal schedule works the `k*` slowest
//! machines at a common relative rate `c*` and saturates the rest:
//!
//! * sort the available machines by ascending speed,
//! * for k from N_t down: c_k = (k + L - N_t) / (s[1] + .. + s[k]),
//! * keep the largest k with c_k <= 1/s[k]; then mu[n] = c* s[n] for the k*
//!   slowest machines and mu[n] = 1 for the others.
//!
//! `oracle_load` recomputes the optimum by bisecting the feasibility
//! predicate directly and is used to cross-check `optimal_load`.

use crate::frac::{format_frac, frac_usize, Frac};
use crate::MachineId;
use num::{One, Signed, Zero};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("speed vector must be non-empty")]
    EmptySpeeds,
    #[error("machine {0} must have a positive speed")]
    NonPositiveSpeed(MachineId),
    #[error("machine id 0 is not valid; ids start at 1")]
    ZeroMachineId,
    #[error("machine {0} is outside the speed vector")]
    UnknownMachine(MachineId),
    #[error("split factor must be at least 1")]
    ZeroSplit,
    #[error("{available} machines available but the split factor is {split}")]
    NotEnoughMachines { available: usize, split: usize },
    #[error("load for machine {machine} is {value}, outside [0, 1]")]
    LoadOutOfRange { machine: MachineId, value: String },
    #[error("loads sum to {got}, expected {expected}")]
    LoadSumMismatch { expected: usize, got: String },
    #[error("duplicate machine {0} in load vector")]
    DuplicateLoad(MachineId),
    #[error("bisection budget of {0} evaluations exhausted")]
    BudgetExhausted(usize),
    #[error("internal optimizer invariant failed: {0}")]
    Internal(String),
}

impl OptimizerError {
    pub fn class(&self) -> crate::FailureClass {
        match self {
            OptimizerError::NotEnoughMachines { .. } => crate::FailureClass::Infeasible,
            OptimizerError::Internal(_) => crate::FailureClass::Internal,
            _ => crate::FailureClass::InvalidInput,
        }
    }
}

/// Per-machine speeds, indexed by machine id; fixed for a whole run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeedVector {
    speeds: Vec<Frac>,
}

impl SpeedVector {
    pub fn new(speeds: Vec<Frac>) -> Result<Self, OptimizerError> {
        if speeds.is_empty() {
            return Err(OptimizerError::EmptySpeeds);
        }
        for (idx, s) in speeds.iter().enumerate() {
            if !s.is_positive() {
                return Err(OptimizerError::NonPositiveSpeed(MachineId(idx as u32 + 1)));
            }
        }
        Ok(SpeedVector { speeds })
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn get(&self, machine: MachineId) -> Option<&Frac> {
        self.speeds.get(machine.index())
    }

    pub fn iter(&self) -> impl Iterator<Item = (MachineId, &Frac)> {
        self.speeds
            .iter()
            .enumerate()
            .map(|(idx, s)| (MachineId(idx as u32 + 1), s))
    }
}

/// The set of machines participating in one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailableSet {
    ids: BTreeSet<MachineId>,
}

impl AvailableSet {
    pub fn new(ids: impl IntoIterator<Item = MachineId>) -> Result<Self, OptimizerError> {
        let ids: BTreeSet<MachineId> = ids.into_iter().collect();
        if ids.contains(&MachineId(0)) {
            return Err(OptimizerError::ZeroMachineId);
        }
        Ok(AvailableSet { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, machine: MachineId) -> bool {
        self.ids.contains(&machine)
    }

    pub fn iter(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.ids.iter().copied()
    }
}

/// Work fractions for the available machines of one step, ordered by id.
/// Every fraction lies in [0, 1] and they sum to the split factor exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadVector {
    entries: Vec<(MachineId, Frac)>,
    split: usize,
}

impl LoadVector {
    pub fn new(mut entries: Vec<(MachineId, Frac)>, split: usize) -> Result<Self, OptimizerError> {
        entries.sort_by_key(|(id, _)| *id);
        let mut sum = Frac::zero();
        for window in entries.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(OptimizerError::DuplicateLoad(window[0].0));
            }
        }
        for (machine, load) in &entries {
            if *machine == MachineId(0) {
                return Err(OptimizerError::ZeroMachineId);
            }
            if load.is_negative() || *load > Frac::one() {
                return Err(OptimizerError::LoadOutOfRange {
                    machine: *machine,
                    value: format_frac(load),
                });
            }
            sum += load;
        }
        if sum != frac_usize(split) {
            return Err(OptimizerError::LoadSumMismatch {
                expected: split,
                got: format_frac(&sum),
            });
        }
        Ok(LoadVector { entries, split })
    }

    pub fn split_factor(&self) -> usize {
        self.split
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, machine: MachineId) -> Option<&Frac> {
        self.entries
            .binary_search_by_key(&machine, |(id, _)| *id)
            .ok()
            .map(|idx| &self.entries[idx].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(MachineId, Frac)> {
        self.entries.iter()
    }

    pub fn machines(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.entries.iter().map(|(id, _)| *id)
    }

    /// Load values in ascending machine-id order.
    pub fn values(&self) -> Vec<Frac> {
        self.entries.iter().map(|(_, f)| f.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimizerResult {
    pub loads: LoadVector,
    /// Optimal completion time; equals `load_time(&loads, speeds)`.
    pub c_star: Frac,
    /// How many of the slowest available machines run below saturation.
    pub k_star: usize,
}

/// Available machines sorted by ascending speed, ties by ascending id,
/// with validation against the speed vector.
fn sorted_available(
    speeds: &SpeedVector,
    avail: &AvailableSet,
) -> Result<Vec<(MachineId, Frac)>, OptimizerError> {
    let mut order = Vec::with_capacity(avail.len());
    for machine in avail.iter() {
        let speed = speeds
            .get(machine)
            .ok_or(OptimizerError::UnknownMachine(machine))?;
        order.push((machine, speed.clone()));
    }
    order.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(order)
}

fn check_step_arity(avail: usize, split: usize) -> Result<(), OptimizerError> {
    if split == 0 {
        return Err(OptimizerError::ZeroSplit);
    }
    if avail < split {
        return Err(OptimizerError::NotEnoughMachines {
            available: avail,
            split,
        });
    }
    Ok(())
}

/// Computes the optimal load fractions for one step.
pub fn optimal_load(
    speeds: &SpeedVector,
    avail: &AvailableSet,
    split: usize,
) -> Result<OptimizerResult, OptimizerError> {
    check_step_arity(avail.len(), split)?;
    let order = sorted_available(speeds, avail)?;
    let n_avail = order.len();

    let mut prefix = Vec::with_capacity(n_avail);
    let mut acc = Frac::zero();
    for (_, speed) in &order {
        acc += speed;
        prefix.push(acc.clone());
    }

    let lowest_k = n_avail - split + 1;
    let mut selected: Option<(usize, Frac)> = None;
    for k in (lowest_k..=n_avail).rev() {
        let candidate = frac_usize(k + split - n_avail) / &prefix[k - 1];
        if candidate <= order[k - 1].1.recip() {
            selected = Some((k, candidate));
            break;
        }
    }
    let (k_star, c_star) = selected.ok_or_else(|| {
        OptimizerError::Internal("no feasible saturation threshold found".into())
    })?;

    let entries: Vec<(MachineId, Frac)> = order
        .iter()
        .enumerate()
        .map(|(idx, (machine, speed))| {
            let load = if idx < k_star {
                &c_star * speed
            } else {
                Frac::one()
            };
            (*machine, load)
        })
        .collect();
    let loads = LoadVector::new(entries, split)?;
    Ok(OptimizerResult {
        loads,
        c_star,
        k_star,
    })
}

/// Completion time of a load vector: max over machines of load / speed.
/// An empty vector takes zero time.
pub fn load_time(loads: &LoadVector, speeds: &SpeedVector) -> Result<Frac, OptimizerError> {
    let mut worst = Frac::zero();
    for (machine, load) in loads.iter() {
        let speed = speeds
            .get(*machine)
            .ok_or(OptimizerError::UnknownMachine(*machine))?;
        let time = load / speed;
        if time > worst {
            worst = time;
        }
    }
    Ok(worst)
}

/// Independent check of the optimal completion time.
///
/// The total coverage achievable within time `c` is sum_n min(c s[n], 1),
/// monotone in `c`; the optimum is the smallest `c` with coverage at least
/// `L`. That point is always one of the finitely many breakpoints
/// `1/s[n]` or `(j + L - N_t) / (s[1] + .. + s[j])`, so an exact bisection
/// over the sorted breakpoint list finds it. `iterations` caps the number
/// of predicate evaluations.
pub fn oracle_load(
    speeds: &SpeedVector,
    avail: &AvailableSet,
    split: usize,
    iterations: usize,
) -> Result<Frac, OptimizerError> {
    check_step_arity(avail.len(), split)?;
    let order = sorted_available(speeds, avail)?;
    let n_avail = order.len();

    let mut candidates = Vec::new();
    let mut acc = Frac::zero();
    for (j, (_, speed)) in order.iter().enumerate() {
        acc += speed;
        candidates.push(speed.recip());
        let saturated = j + 1 + split;
        if saturated > n_avail {
            candidates.push(frac_usize(saturated - n_avail) / &acc);
        }
    }
    candidates.sort();
    candidates.dedup();

    let goal = frac_usize(split);
    let mut evals = 0usize;
    let mut feasible = |c: &Frac| -> Result<bool, OptimizerError> {
        if evals == iterations {
            return Err(OptimizerError::BudgetExhausted(iterations));
        }
        evals += 1;
        let mut coverage = Frac::zero();
        for (_, speed) in &order {
            let share = c * speed;
            coverage += if share > Frac::one() { Frac::one() } else { share };
        }
        Ok(coverage >= goal)
    };

    let mut lo = 0usize;
    let mut hi = candidates.len() - 1;
    if !feasible(&candidates[hi])? {
        return Err(OptimizerError::Internal(
            "largest breakpoint infeasible".into(),
        ));
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(&candidates[mid])? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo].clone())
}
