//! Driving coded computation through a timeline of availability changes.
//!
//! Each event names the machines present for one time step. Per step the
//! simulator computes optimal load fractions, realizes them as row
//! assignments, runs the per-machine partial computations over the encoded
//! shards, decodes the full matrix-vector product, and checks it against
//! the plaintext product. Reports carry the optimal step time, a
//! reconstructed equal-split baseline for comparison, and how much of the
//! previous step's (row, machine) assignment survived the elastic change.

use crate::assignment::{
    fill_assignment, materialize_rows, AssignmentError, AssignmentPlan, MaterializedPlan, Workset,
};
use crate::codec::{
    compute_partial, decode_row, encode, make_generator, CodecError, DataMatrix, PartialResult,
};
use crate::field::{Fp, MODULUS};
use crate::frac::{frac_usize, Frac};
use crate::optimizer::{
    optimal_load, AvailableSet, LoadVector, OptimizerError, OptimizerResult, SpeedVector,
};
use crate::MachineId;
use num::{BigInt, Integer, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("internal step invariant failed: {0}")]
    Internal(String),
}

impl StepError {
    pub fn class(&self) -> crate::FailureClass {
        match self {
            StepError::Optimizer(e) => e.class(),
            StepError::Assignment(e) => e.class(),
            StepError::Codec(e) => e.class(),
            StepError::Internal(_) => crate::FailureClass::Internal,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid timeline: {0}")]
    InvalidTimeline(String),
    #[error("step t={t}: {source}")]
    Step {
        t: u64,
        #[source]
        source: StepError,
    },
    #[error("row count {rows} does not fit the plans; q must be a positive multiple of {required}")]
    RowsNotCompatible { rows: usize, required: String },
    #[error("auto-sized row count {required} is too large to materialize")]
    RowsOverflow { required: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl SimError {
    pub fn class(&self) -> crate::FailureClass {
        match self {
            SimError::InvalidTimeline(_) => crate::FailureClass::InvalidInput,
            SimError::Step { source, .. } => source.class(),
            SimError::RowsNotCompatible { .. } | SimError::RowsOverflow { .. } => {
                crate::FailureClass::Infeasible
            }
            SimError::Codec(e) => e.class(),
        }
    }

    /// The time step an error is attributed to, if any.
    pub fn step(&self) -> Option<u64> {
        match self {
            SimError::Step { t, .. } => Some(*t),
            _ => None,
        }
    }
}

/// One availability change: the machines computing from time `t` on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElasticEvent {
    pub t: u64,
    pub available: AvailableSet,
}

/// A full run description. `rows` may be omitted, in which case the
/// smallest row count that materializes every step exactly is used. The
/// data matrix and per-step query vectors default to seeded pseudorandom
/// field elements.
#[derive(Debug, Clone)]
pub struct Timeline {
    pub split_factor: usize,
    pub speeds: SpeedVector,
    pub events: Vec<ElasticEvent>,
    pub rows: Option<usize>,
    pub cols: usize,
    pub seed: u64,
    pub data: Option<DataMatrix>,
    pub queries: Option<Vec<Vec<Fp>>>,
}

impl Timeline {
    fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidTimeline(msg));
        if self.split_factor == 0 {
            return invalid("split factor must be at least 1".into());
        }
        if self.cols == 0 {
            return invalid("column count must be at least 1".into());
        }
        let n = self.speeds.len();
        let mut last_t: Option<u64> = None;
        for event in &self.events {
            if let Some(prev) = last_t {
                if event.t <= prev {
                    return invalid(format!(
                        "event times must strictly increase, saw {prev} then {}",
                        event.t
                    ));
                }
            }
            last_t = Some(event.t);
            for machine in event.available.iter() {
                if machine.index() >= n {
                    return invalid(format!(
                        "event t={}: machine {machine} is outside the {n}-machine pool",
                        event.t
                    ));
                }
            }
        }
        if let Some(data) = &self.data {
            if data.split() != self.split_factor {
                return invalid(format!(
                    "data matrix split {} does not match the run split {}",
                    data.split(),
                    self.split_factor
                ));
            }
            if data.cols() != self.cols {
                return invalid(format!(
                    "data matrix has {} columns, run expects {}",
                    data.cols(),
                    self.cols
                ));
            }
            if let Some(rows) = self.rows {
                if rows != data.rows() {
                    return invalid(format!(
                        "row count {rows} does not match the data matrix ({} rows)",
                        data.rows()
                    ));
                }
            }
        }
        if let Some(queries) = &self.queries {
            if queries.len() != self.events.len() {
                return invalid(format!(
                    "{} query vectors for {} events",
                    queries.len(),
                    self.events.len()
                ));
            }
            if let Some(bad) = queries.iter().find(|w| w.len() != self.cols) {
                return invalid(format!(
                    "query vector length {} does not match {} columns",
                    bad.len(),
                    self.cols
                ));
            }
        }
        Ok(())
    }
}

/// Load fractions and block structure for every step, plus the resolved
/// row count. No shard data is touched yet.
#[derive(Debug, Clone)]
pub struct PlannedSteps {
    pub per_event: Vec<(OptimizerResult, AssignmentPlan)>,
    pub rows: usize,
}

/// Runs the planning pass: optimal loads and block fractions per event,
/// then the row count (validated, or auto-sized to the smallest workable
/// value).
pub fn plan_timeline(timeline: &Timeline) -> Result<PlannedSteps, SimError> {
    timeline.validate()?;
    let mut per_event = Vec::with_capacity(timeline.events.len());
    let mut required = BigInt::from(timeline.split_factor);
    for event in &timeline.events {
        let step = |source: StepError| SimError::Step { t: event.t, source };
        let result = optimal_load(&timeline.speeds, &event.available, timeline.split_factor)
            .map_err(|e| step(e.into()))?;
        let plan = fill_assignment(&result.loads).map_err(|e| step(e.into()))?;
        required = required.lcm(&plan.required_rows_multiple());
        per_event.push((result, plan));
    }

    let rows = match (timeline.data.as_ref(), timeline.rows) {
        (Some(data), _) => data.rows(),
        (None, Some(rows)) => rows,
        (None, None) => required
            .to_usize()
            .ok_or_else(|| SimError::RowsOverflow {
                required: required.to_string(),
            })?,
    };
    if rows == 0 || !BigInt::from(rows).is_multiple_of(&required) {
        return Err(SimError::RowsNotCompatible {
            rows,
            required: required.to_string(),
        });
    }
    Ok(PlannedSteps { per_event, rows })
}

/// Everything recorded about one executed step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub t: u64,
    pub available: Vec<MachineId>,
    pub loads: LoadVector,
    /// Optimal step time.
    pub c_star: Frac,
    pub k_star: usize,
    /// Number of assignment blocks.
    pub block_count: usize,
    pub rows_per_machine: BTreeMap<MachineId, usize>,
    /// Decoded product matched the plaintext product.
    pub decode_verified: bool,
    /// Fraction of (row, machine) pairs retained from the previous step.
    pub overlap: Frac,
    /// Step time of the equal-split baseline on the same machines.
    pub baseline_time: Frac,
    pub plan: MaterializedPlan,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub reports: Vec<StepReport>,
    /// Resolved data row count q.
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

/// Executes the whole timeline.
pub fn run_timeline(timeline: &Timeline) -> Result<RunResult, SimError> {
    let planned = plan_timeline(timeline)?;
    let rows = planned.rows;
    let machines = timeline.speeds.len();

    let mut rng = ChaCha8Rng::seed_from_u64(timeline.seed);
    let data = match &timeline.data {
        Some(data) => data.clone(),
        None => DataMatrix::random(rows, timeline.cols, timeline.split_factor, &mut rng)?,
    };
    let generator = make_generator(machines, timeline.split_factor)?;
    let shards = encode(&data, &generator)?;

    let mut reports = Vec::with_capacity(timeline.events.len());
    let mut previous: Option<MaterializedPlan> = None;
    for (event, (result, plan)) in timeline.events.iter().zip(&planned.per_event) {
        let step = |source: StepError| SimError::Step { t: event.t, source };
        let query: Vec<Fp> = match &timeline.queries {
            Some(queries) => queries[reports.len()].clone(),
            None => (0..timeline.cols)
                .map(|_| Fp::new(rng.gen_range(0..MODULUS)))
                .collect(),
        };

        let materialized = materialize_rows(plan, rows).map_err(|e| step(e.into()))?;

        let partials: BTreeMap<MachineId, PartialResult> = materialized
            .worksets
            .par_iter()
            .map(|(machine, workset)| {
                let shard = &shards[machine.index()];
                let row_indices: Vec<usize> = workset.rows().collect();
                compute_partial(shard, &query, &row_indices).map(|p| (*machine, p))
            })
            .collect::<Result<_, _>>()
            .map_err(|e| step(e.into()))?;

        let coded_rows = materialized.coded_rows;
        let mut decoded = vec![Fp::ZERO; rows];
        for (range, block) in materialized.block_rows.iter().zip(materialized.blocks()) {
            let refs: Vec<&PartialResult> = block
                .machines
                .iter()
                .map(|m| {
                    partials
                        .get(m)
                        .ok_or_else(|| step(StepError::Internal(format!("no partial result for machine {m}"))))
                })
                .collect::<Result<_, _>>()?;
            for row in range.start..range.end {
                let pieces = decode_row(&refs, row, &generator).map_err(|e| step(e.into()))?;
                for (l, piece) in pieces.into_iter().enumerate() {
                    decoded[l * coded_rows + row] = piece;
                }
            }
        }
        let truth = data.multiply_vector(&query)?;
        let decode_verified = decoded == truth;

        let overlap = overlap_metric(previous.as_ref(), &materialized);
        let (_, baseline_time) =
            cyclic_baseline(&event.available, timeline.split_factor, &timeline.speeds)
                .map_err(|e| step(e.into()))?;
        if result.c_star > baseline_time {
            return Err(step(StepError::Internal(format!(
                "optimal time {} exceeds the baseline {}",
                result.c_star, baseline_time
            ))));
        }

        let rows_per_machine = materialized
            .worksets
            .iter()
            .map(|(machine, workset)| (*machine, workset.row_count()))
            .collect();

        reports.push(StepReport {
            t: event.t,
            available: event.available.iter().collect(),
            loads: result.loads.clone(),
            c_star: result.c_star.clone(),
            k_star: result.k_star,
            block_count: plan.blocks.len(),
            rows_per_machine,
            decode_verified,
            overlap,
            baseline_time,
            plan: materialized.clone(),
        });
        previous = Some(materialized);
    }

    Ok(RunResult {
        reports,
        rows,
        cols: timeline.cols,
        seed: timeline.seed,
    })
}

/// Loads and step time of the classic equal-split scheme on the same
/// machines: every available machine covers `L / N_t` of the rows, so the
/// step finishes when the slowest machine does. Reconstructed here purely
/// as a comparison baseline.
pub fn cyclic_baseline(
    avail: &AvailableSet,
    split: usize,
    speeds: &SpeedVector,
) -> Result<(LoadVector, Frac), OptimizerError> {
    if split == 0 {
        return Err(OptimizerError::ZeroSplit);
    }
    if avail.len() < split {
        return Err(OptimizerError::NotEnoughMachines {
            available: avail.len(),
            split,
        });
    }
    let share = frac_usize(split) / frac_usize(avail.len());
    let mut entries = Vec::with_capacity(avail.len());
    let mut slowest: Option<Frac> = None;
    for machine in avail.iter() {
        let speed = speeds
            .get(machine)
            .ok_or(OptimizerError::UnknownMachine(machine))?;
        entries.push((machine, share.clone()));
        let time = &share / speed;
        if slowest.as_ref().is_none_or(|worst| time > *worst) {
            slowest = Some(time);
        }
    }
    let loads = LoadVector::new(entries, split)?;
    Ok((loads, slowest.expect("at least one machine")))
}

/// Fraction of the current step's (row, machine) assignments that already
/// existed in the previous step. Zero when there is no previous step.
pub fn overlap_metric(previous: Option<&MaterializedPlan>, current: &MaterializedPlan) -> Frac {
    let current_pairs: usize = current.worksets.values().map(Workset::row_count).sum();
    if current_pairs == 0 {
        return Frac::zero();
    }
    let Some(previous) = previous else {
        return Frac::zero();
    };
    let mut retained = 0usize;
    for (machine, workset) in &current.worksets {
        if let Some(old) = previous.worksets.get(machine) {
            retained += workset.intersection_len(old);
        }
    }
    Frac::new(BigInt::from(retained), BigInt::from(current_pairs))
}

/// Renders step reports as CSV. Fractions appear as separate numerator and
/// denominator columns so the file stays exact.
pub fn reports_csv(reports: &[StepReport]) -> String {
    let mut out = String::from(
        "t,N_t,c_star_num,c_star_den,F,baseline_num,baseline_den,overlap_num,overlap_den,verified\n",
    );
    for report in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            report.t,
            report.available.len(),
            report.c_star.numer(),
            report.c_star.denom(),
            report.block_count,
            report.baseline_time.numer(),
            report.baseline_time.denom(),
            report.overlap.numer(),
            report.overlap.denom(),
            report.decode_verified,
        ));
    }
    out
}
