//! Realizing load fractions as row assignments.
//!
//! Given per-machine fractions that sum to the split factor `L`, the plan
//! is a sequence of blocks: block `f` covers a fraction `alpha_f` of the
//! coded rows and names exactly `L` machines that each compute all of it.
//! Per machine, the block fractions add up to its load exactly, and the
//! blocks partition the row range, so every coded row is computed by
//! exactly `L` distinct machines.
//!
//! Block construction repeatedly pairs the machine with the smallest
//! remaining demand with the `L - 1` largest ones, peeling off the largest
//! fraction that neither exhausts the smallest demand out of turn nor
//! pushes the remaining totals out of balance. The process zeroes at least
//! one demand or pins one machine to the feasibility boundary per round,
//! so it terminates within one block per available machine.

use crate::frac::{format_frac, frac_usize, parse_frac, Frac};
use crate::optimizer::LoadVector;
use crate::MachineId;
use num::bigint::BigInt;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssignmentError {
    #[error("infeasible loads: {0}")]
    InfeasibleLoads(String),
    #[error(
        "block sizes are not whole rows for q = {rows}; q must be a positive multiple of {required}"
    )]
    NonIntegralBlocks { rows: usize, required: String },
    #[error("assignment invariant violated: {0}")]
    InvariantViolation(String),
    #[error("plan document invalid: {0}")]
    BadPlanDocument(String),
}

impl AssignmentError {
    pub fn class(&self) -> crate::FailureClass {
        match self {
            AssignmentError::InvariantViolation(_) => crate::FailureClass::Internal,
            AssignmentError::BadPlanDocument(_) => crate::FailureClass::InvalidInput,
            _ => crate::FailureClass::Infeasible,
        }
    }
}

/// One assignment block: a fraction of the coded rows and the machines that
/// all compute it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub alpha: Frac,
    pub machines: BTreeSet<MachineId>,
}

/// Block fractions only; row ranges come from [`materialize_rows`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentPlan {
    pub blocks: Vec<Block>,
    pub split_factor: usize,
}

impl AssignmentPlan {
    /// Smallest row count `q` for which every block is a whole number of
    /// rows: the split factor times the least common denominator.
    pub fn required_rows_multiple(&self) -> BigInt {
        let mut lcm = BigInt::one();
        for block in &self.blocks {
            lcm = lcm.lcm(block.alpha.denom());
        }
        lcm * BigInt::from(self.split_factor)
    }
}

/// Half-open range of coded row indices.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct RowRange {
    pub start: usize,
    pub end: usize,
}

impl RowRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

impl From<[usize; 2]> for RowRange {
    fn from(v: [usize; 2]) -> Self {
        RowRange {
            start: v[0],
            end: v[1],
        }
    }
}

impl From<RowRange> for [usize; 2] {
    fn from(r: RowRange) -> Self {
        [r.start, r.end]
    }
}

/// Sorted, disjoint row ranges owned by one machine within a step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Workset {
    ranges: Vec<RowRange>,
}

impl Workset {
    fn push(&mut self, range: RowRange) {
        if range.is_empty() {
            return;
        }
        let pos = self.ranges.partition_point(|r| r.start <= range.start);
        self.ranges.insert(pos, range);
        // Re-merge overlapping or touching neighbours.
        let mut merged: Vec<RowRange> = Vec::with_capacity(self.ranges.len());
        for r in self.ranges.drain(..) {
            match merged.last_mut() {
                Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
                _ => merged.push(r),
            }
        }
        self.ranges = merged;
    }

    pub fn ranges(&self) -> &[RowRange] {
        &self.ranges
    }

    /// True if every row of `range` belongs to this workset.
    pub fn covers(&self, range: RowRange) -> bool {
        range.is_empty()
            || self
                .ranges
                .iter()
                .any(|r| r.start <= range.start && range.end <= r.end)
    }

    pub fn row_count(&self) -> usize {
        self.ranges.iter().map(RowRange::len).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flat_map(|r| r.start..r.end)
    }

    pub fn contains(&self, row: usize) -> bool {
        self.ranges
            .iter()
            .any(|r| r.start <= row && row < r.end)
    }

    /// Number of rows present in both worksets.
    pub fn intersection_len(&self, other: &Workset) -> usize {
        let mut total = 0;
        let mut a = self.ranges.iter().peekable();
        let mut b = other.ranges.iter().peekable();
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            let lo = x.start.max(y.start);
            let hi = x.end.min(y.end);
            if lo < hi {
                total += hi - lo;
            }
            if x.end <= y.end {
                a.next();
            } else {
                b.next();
            }
        }
        total
    }
}

/// A plan bound to a concrete row count: block row ranges plus per-machine
/// worksets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaterializedPlan {
    pub plan: AssignmentPlan,
    /// Coded rows per shard, q / L.
    pub coded_rows: usize,
    /// One half-open range per block, in block order; they partition
    /// `0..coded_rows`.
    pub block_rows: Vec<RowRange>,
    pub worksets: BTreeMap<MachineId, Workset>,
}

impl MaterializedPlan {
    pub fn blocks(&self) -> &[Block] {
        &self.plan.blocks
    }
}

/// Builds the block structure realizing `loads`.
pub fn fill_assignment(loads: &LoadVector) -> Result<AssignmentPlan, AssignmentError> {
    let split = loads.split_factor();
    if split == 0 {
        return Err(AssignmentError::InfeasibleLoads(
            "split factor must be at least 1".into(),
        ));
    }
    // LoadVector construction already guarantees fractions in [0, 1] that
    // sum to the split factor; machines with zero load take no part.
    let mut residual: BTreeMap<MachineId, Frac> = loads
        .iter()
        .filter(|(_, load)| !load.is_zero())
        .cloned()
        .collect();
    let n_avail = loads.len();
    let mut blocks: Vec<Block> = Vec::new();

    while !residual.is_empty() {
        if blocks.len() == n_avail {
            return Err(AssignmentError::InvariantViolation(format!(
                "more than {n_avail} blocks for {n_avail} machines"
            )));
        }
        let mut order: Vec<(MachineId, Frac)> = residual
            .iter()
            .map(|(id, f)| (*id, f.clone()))
            .collect();
        order.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let n_live = order.len();
        if n_live < split {
            return Err(AssignmentError::InvariantViolation(format!(
                "{n_live} machines still loaded, need at least {split}"
            )));
        }

        let total: Frac = order.iter().map(|(_, f)| f.clone()).sum();
        let smallest = order[0].1.clone();
        let alpha = if n_live > split {
            // Largest demand not drafted into this block caps the fraction:
            // it must stay coverable by the remaining rounds.
            let cap = &total / frac_usize(split) - &order[n_live - split].1;
            smallest.min(cap)
        } else {
            smallest
        };
        if !alpha.is_positive() {
            return Err(AssignmentError::InvariantViolation(format!(
                "block fraction {} is not positive",
                format_frac(&alpha)
            )));
        }

        let mut machines = BTreeSet::new();
        machines.insert(order[0].0);
        for (id, _) in &order[n_live - (split - 1)..] {
            machines.insert(*id);
        }
        if machines.len() != split {
            return Err(AssignmentError::InvariantViolation(format!(
                "block selected {} machines, expected {split}",
                machines.len()
            )));
        }

        for machine in &machines {
            let entry = residual.get_mut(machine).expect("member has residual");
            *entry -= &alpha;
            if entry.is_negative() {
                return Err(AssignmentError::InvariantViolation(format!(
                    "machine {machine} driven below zero"
                )));
            }
            if entry.is_zero() {
                residual.remove(machine);
            }
        }
        blocks.push(Block { alpha, machines });
    }

    Ok(AssignmentPlan {
        blocks,
        split_factor: split,
    })
}

/// Assigns concrete row ranges for a data matrix with `rows` rows
/// (`rows / split` coded rows). Fails unless every block maps to a whole
/// number of rows.
pub fn materialize_rows(
    plan: &AssignmentPlan,
    rows: usize,
) -> Result<MaterializedPlan, AssignmentError> {
    let split = plan.split_factor;
    if split == 0 {
        return Err(AssignmentError::InfeasibleLoads(
            "split factor must be at least 1".into(),
        ));
    }
    let required = plan.required_rows_multiple();
    let ok = rows > 0
        && BigInt::from(rows).is_multiple_of(&required);
    if !ok {
        return Err(AssignmentError::NonIntegralBlocks {
            rows,
            required: required.to_string(),
        });
    }
    let coded_rows = rows / split;

    let mut block_rows = Vec::with_capacity(plan.blocks.len());
    let mut worksets: BTreeMap<MachineId, Workset> = BTreeMap::new();
    let mut cursor = 0usize;
    for block in &plan.blocks {
        let size_frac = &block.alpha * frac_usize(coded_rows);
        debug_assert!(size_frac.is_integer());
        let size = size_frac
            .to_integer()
            .to_usize()
            .ok_or_else(|| AssignmentError::InvariantViolation("block size overflow".into()))?;
        let range = RowRange {
            start: cursor,
            end: cursor + size,
        };
        cursor = range.end;
        block_rows.push(range);
        for machine in &block.machines {
            worksets.entry(*machine).or_default().push(range);
        }
    }
    if cursor != coded_rows {
        return Err(AssignmentError::InvariantViolation(format!(
            "blocks cover {cursor} of {coded_rows} coded rows"
        )));
    }
    Ok(MaterializedPlan {
        plan: plan.clone(),
        coded_rows,
        block_rows,
        worksets,
    })
}

/// One named check inside a [`VerifyReport`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Structured outcome of [`verify_assignment`]; `passed()` folds the checks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn record(&mut self, name: &'static str, pass: bool, detail: String) {
        self.checks.push(VerifyCheck { name, pass, detail });
    }
}

/// Checks a materialized plan against the loads it is supposed to realize.
pub fn verify_assignment(plan: &MaterializedPlan, loads: &LoadVector) -> VerifyReport {
    let split = loads.split_factor();
    let mut report = VerifyReport::default();

    let bad_sizes: Vec<usize> = plan
        .blocks()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.machines.len() != split)
        .map(|(f, _)| f)
        .collect();
    report.record(
        "block-machine-count",
        bad_sizes.is_empty(),
        if bad_sizes.is_empty() {
            format!("every block names {split} distinct machines")
        } else {
            format!("blocks {bad_sizes:?} do not name {split} distinct machines")
        },
    );

    let fraction_sum: Frac = plan.blocks().iter().map(|b| b.alpha.clone()).sum();
    report.record(
        "fraction-sum",
        fraction_sum == Frac::one(),
        format!("block fractions sum to {}", format_frac(&fraction_sum)),
    );

    let mut totals: BTreeMap<MachineId, Frac> = BTreeMap::new();
    for block in plan.blocks() {
        for machine in &block.machines {
            *totals.entry(*machine).or_insert_with(Frac::zero) += &block.alpha;
        }
    }
    let mut mismatches = Vec::new();
    for (machine, load) in loads.iter() {
        let total = totals.remove(machine).unwrap_or_else(Frac::zero);
        if total != *load {
            mismatches.push(format!(
                "machine {machine}: assigned {} expected {}",
                format_frac(&total),
                format_frac(load)
            ));
        }
    }
    for (machine, total) in &totals {
        mismatches.push(format!(
            "machine {machine}: assigned {} but carries no load",
            format_frac(total)
        ));
    }
    report.record(
        "per-machine-load",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "assigned fractions equal the loads exactly".into()
        } else {
            mismatches.join("; ")
        },
    );

    report.record(
        "block-count",
        plan.blocks().len() <= loads.len(),
        format!(
            "{} blocks for {} machines",
            plan.blocks().len(),
            loads.len()
        ),
    );

    let mut partition_ok = plan.block_rows.len() == plan.blocks().len();
    let mut cursor = 0usize;
    let mut partition_detail = String::new();
    if partition_ok {
        for (f, (range, block)) in plan.block_rows.iter().zip(plan.blocks()).enumerate() {
            let expected = &block.alpha * frac_usize(plan.coded_rows);
            let actual = frac_usize(range.len());
            if range.start != cursor || expected != actual {
                partition_ok = false;
                partition_detail = format!(
                    "block {f} covers [{}, {}) but should start at {cursor} and span {} rows",
                    range.start,
                    range.end,
                    format_frac(&expected)
                );
                break;
            }
            cursor = range.end;
        }
        if partition_ok && cursor != plan.coded_rows {
            partition_ok = false;
            partition_detail = format!("ranges cover {cursor} of {} rows", plan.coded_rows);
        }
    } else {
        partition_detail = "range count differs from block count".into();
    }
    report.record(
        "row-partition",
        partition_ok,
        if partition_ok {
            format!("block ranges partition 0..{}", plan.coded_rows)
        } else {
            partition_detail
        },
    );

    let mut coverage_ok = true;
    let mut coverage_detail = format!(
        "every row is covered by exactly {split} machines"
    );
    'outer: for (range, block) in plan.block_rows.iter().zip(plan.blocks()) {
        for machine in &block.machines {
            let holds = plan
                .worksets
                .get(machine)
                .map_or(range.is_empty(), |w| w.covers(*range));
            if !holds {
                coverage_ok = false;
                coverage_detail = format!(
                    "machine {machine} workset does not cover its block [{}, {})",
                    range.start, range.end
                );
                break 'outer;
            }
        }
    }
    let total_rows: usize = plan.worksets.values().map(Workset::row_count).sum();
    if coverage_ok && total_rows != split * plan.coded_rows {
        coverage_ok = false;
        coverage_detail = format!(
            "worksets hold {total_rows} row slots, expected {}",
            split * plan.coded_rows
        );
    }
    report.record("row-coverage", coverage_ok, coverage_detail);

    report
}

// ----- plan document --------------------------------------------------------
//
// A plan serializes as a JSON array of blocks:
// [{"alpha": "2/5", "machines": [1, 5, 6], "rows": [0, 84]}, ...]
// with half-open row ranges.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanBlockDoc {
    pub alpha: String,
    pub machines: Vec<u32>,
    pub rows: RowRange,
}

pub fn plan_to_docs(plan: &MaterializedPlan) -> Vec<PlanBlockDoc> {
    plan.blocks()
        .iter()
        .zip(&plan.block_rows)
        .map(|(block, range)| PlanBlockDoc {
            alpha: format_frac(&block.alpha),
            machines: block.machines.iter().map(|m| m.0).collect(),
            rows: *range,
        })
        .collect()
}

pub fn plan_to_json(plan: &MaterializedPlan) -> String {
    serde_json::to_string_pretty(&plan_to_docs(plan)).expect("plan serializes")
}

pub fn plan_from_json(text: &str) -> Result<MaterializedPlan, AssignmentError> {
    let docs: Vec<PlanBlockDoc> = serde_json::from_str(text)
        .map_err(|e| AssignmentError::BadPlanDocument(e.to_string()))?;
    let split_factor = docs.first().map_or(0, |d| d.machines.len());
    let mut blocks = Vec::with_capacity(docs.len());
    let mut block_rows = Vec::with_capacity(docs.len());
    let mut worksets: BTreeMap<MachineId, Workset> = BTreeMap::new();
    let mut coded_rows = 0usize;
    for doc in &docs {
        let alpha = parse_frac(&doc.alpha)
            .map_err(|e| AssignmentError::BadPlanDocument(e.to_string()))?;
        let mut machines = BTreeSet::new();
        for &id in &doc.machines {
            if id == 0 {
                return Err(AssignmentError::BadPlanDocument(
                    "machine id 0 is not valid".into(),
                ));
            }
            machines.insert(MachineId(id));
        }
        if doc.rows.end < doc.rows.start {
            return Err(AssignmentError::BadPlanDocument(format!(
                "row range [{}, {}) is reversed",
                doc.rows.start, doc.rows.end
            )));
        }
        coded_rows = coded_rows.max(doc.rows.end);
        for machine in &machines {
            worksets.entry(*machine).or_default().push(doc.rows);
        }
        blocks.push(Block { alpha, machines });
        block_rows.push(doc.rows);
    }
    Ok(MaterializedPlan {
        plan: AssignmentPlan {
            blocks,
            split_factor,
        },
        coded_rows,
        block_rows,
        worksets,
    })
}
