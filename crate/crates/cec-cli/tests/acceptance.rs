//! Acceptance gate: seven release criteria, each with a pinned runtime
//! budget and exact (tolerance-free) value checks. Every test prints one
//! pass/fail line; run with
//! `cargo test -p cec-cli --test acceptance -- --nocapture` to see them.

use cec_core::assignment::{fill_assignment, materialize_rows, verify_assignment, Block};
use cec_core::codec::{compute_partial, decode_row, encode, make_generator, DataMatrix};
use cec_core::field::{Fp, MODULUS};
use cec_core::frac::{frac, frac_int, Frac};
use cec_core::optimizer::{
    load_time, optimal_load, oracle_load, AvailableSet, LoadVector, SpeedVector,
};
use cec_core::simulator::cyclic_baseline;
use cec_core::MachineId;
use num::{BigInt, One, ToPrimitive, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

fn criterion(name: &str, budget: Duration, body: impl FnOnce()) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let pass = outcome.is_ok() && elapsed <= budget;
    println!(
        "{name}: {} ({elapsed:.2?} of {budget:.0?} budget)",
        if pass { "PASS" } else { "FAIL" }
    );
    match outcome {
        Err(panic) => resume_unwind(panic),
        Ok(()) => assert!(
            elapsed <= budget,
            "{name} took {elapsed:?}, over the {budget:?} budget"
        ),
    }
}

fn speeds(values: &[i64]) -> SpeedVector {
    SpeedVector::new(values.iter().map(|&v| frac_int(v)).collect()).unwrap()
}

fn avail(ids: &[u32]) -> AvailableSet {
    AvailableSet::new(ids.iter().map(|&id| MachineId(id))).unwrap()
}

fn load_entries(loads: &LoadVector) -> Vec<(u32, Frac)> {
    loads.iter().map(|(m, f)| (m.0, f.clone())).collect()
}

// ----- 1. optimal loads on the known-answer instances ------------------------

#[test]
fn criterion_1_golden_optimizer_loads() {
    criterion("criterion 1 (golden optimizer loads)", Duration::from_secs(1), || {
        let pool = speeds(&[2, 2, 3, 3, 4, 4]);

        let r1 = optimal_load(&pool, &avail(&[1, 2, 3, 4, 5, 6]), 3).unwrap();
        assert_eq!(r1.c_star, frac(1, 6));
        assert_eq!(r1.k_star, 6);
        assert_eq!(
            load_entries(&r1.loads),
            vec![
                (1, frac(1, 3)),
                (2, frac(1, 3)),
                (3, frac(1, 2)),
                (4, frac(1, 2)),
                (5, frac(2, 3)),
                (6, frac(2, 3)),
            ]
        );

        let r2 = optimal_load(&pool, &avail(&[1, 2, 3, 5, 6]), 3).unwrap();
        assert_eq!(r2.c_star, frac(1, 5));
        assert_eq!(r2.k_star, 5);
        assert_eq!(
            load_entries(&r2.loads),
            vec![
                (1, frac(2, 5)),
                (2, frac(2, 5)),
                (3, frac(3, 5)),
                (5, frac(4, 5)),
                (6, frac(4, 5)),
            ]
        );

        let r3 = optimal_load(&pool, &avail(&[1, 2, 3, 5]), 3).unwrap();
        assert_eq!(r3.c_star, frac(2, 7));
        assert_eq!(r3.k_star, 3);
        assert_eq!(
            load_entries(&r3.loads),
            vec![
                (1, frac(4, 7)),
                (2, frac(4, 7)),
                (3, frac(6, 7)),
                (5, frac_int(1)),
            ]
        );

        let r4 = optimal_load(&pool, &avail(&[2, 3, 5]), 3).unwrap();
        assert_eq!(r4.c_star, frac(1, 2));
        assert_eq!(r4.k_star, 1);
        assert_eq!(
            load_entries(&r4.loads),
            vec![(2, frac_int(1)), (3, frac_int(1)), (5, frac_int(1))]
        );
    });
}

// ----- 2. block structure on the known-answer instances ----------------------

#[test]
fn criterion_2_golden_assignment_traces() {
    criterion("criterion 2 (golden assignment traces)", Duration::from_secs(1), || {
        let pool = speeds(&[2, 2, 3, 3, 4, 4]);
        let block = |num: i64, den: i64, machines: &[u32]| Block {
            alpha: frac(num, den),
            machines: machines.iter().map(|&m| MachineId(m)).collect(),
        };

        let step = |ids: &[u32]| {
            let loads = optimal_load(&pool, &avail(ids), 3).unwrap().loads;
            fill_assignment(&loads).unwrap().blocks
        };

        assert_eq!(
            step(&[1, 2, 3, 4, 5, 6]),
            vec![
                block(1, 3, &[1, 5, 6]),
                block(1, 3, &[2, 3, 4]),
                block(1, 6, &[3, 5, 6]),
                block(1, 6, &[4, 5, 6]),
            ]
        );
        assert_eq!(
            step(&[1, 2, 3, 5, 6]),
            vec![
                block(2, 5, &[1, 5, 6]),
                block(1, 5, &[2, 3, 6]),
                block(1, 5, &[2, 3, 5]),
                block(1, 5, &[3, 5, 6]),
            ]
        );
        assert_eq!(
            step(&[1, 2, 3, 5]),
            vec![
                block(3, 7, &[1, 3, 5]),
                block(1, 7, &[1, 2, 5]),
                block(3, 7, &[2, 3, 5]),
            ]
        );
        assert_eq!(step(&[2, 3, 5]), vec![block(1, 1, &[2, 3, 5])]);
    });
}

// ----- random instances shared by criteria 3 and 4 ---------------------------

struct Instance {
    speeds: SpeedVector,
    avail: AvailableSet,
    split: usize,
}

fn random_instance(rng: &mut StdRng) -> Instance {
    let split = rng.gen_range(1usize..=6);
    let n_avail = rng.gen_range(split..=12);
    let pool = n_avail + rng.gen_range(0usize..=3);
    let speeds =
        SpeedVector::new((0..pool).map(|_| frac_int(rng.gen_range(1..=20))).collect()).unwrap();
    let mut ids: Vec<u32> = (1..=pool as u32).collect();
    for i in 0..n_avail {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    let avail = AvailableSet::new(ids[..n_avail].iter().map(|&id| MachineId(id))).unwrap();
    Instance { speeds, avail, split }
}

// ----- 3. the closed form equals the search oracle ---------------------------

#[test]
fn criterion_3_loads_match_search_oracle() {
    criterion("criterion 3 (1000 random instances match the search oracle)", Duration::from_secs(30), || {
        let mut rng = StdRng::seed_from_u64(301);
        for case in 0..1000 {
            let inst = random_instance(&mut rng);
            let result = optimal_load(&inst.speeds, &inst.avail, inst.split).unwrap();
            let oracle = oracle_load(&inst.speeds, &inst.avail, inst.split, 10_000).unwrap();
            assert_eq!(
                result.c_star, oracle,
                "case {case}: closed form disagrees with the oracle"
            );
            let time = load_time(&result.loads, &inst.speeds).unwrap();
            assert_eq!(time, result.c_star, "case {case}: loads do not meet c_star");
        }
    });
}

// ----- 4. block plans realize the loads exactly ------------------------------

#[test]
fn criterion_4_assignment_invariants_hold() {
    criterion("criterion 4 (1000 random plans realize their loads)", Duration::from_secs(30), || {
        let mut rng = StdRng::seed_from_u64(401);
        for case in 0..1000 {
            let inst = random_instance(&mut rng);
            let result = optimal_load(&inst.speeds, &inst.avail, inst.split).unwrap();
            let plan = fill_assignment(&result.loads).unwrap();

            let total: Frac = plan.blocks.iter().map(|b| b.alpha.clone()).sum();
            assert_eq!(total, Frac::one(), "case {case}: block fractions sum");
            assert!(
                plan.blocks.len() <= inst.avail.len(),
                "case {case}: more blocks than machines"
            );
            for b in &plan.blocks {
                assert!(b.alpha > Frac::zero(), "case {case}: empty block");
                assert_eq!(b.machines.len(), inst.split, "case {case}: block size");
            }
            for (machine, expected) in result.loads.iter() {
                let assigned: Frac = plan
                    .blocks
                    .iter()
                    .filter(|b| b.machines.contains(machine))
                    .map(|b| b.alpha.clone())
                    .sum();
                assert_eq!(assigned, *expected, "case {case}: machine {machine} load");
            }

            let rows = plan.required_rows_multiple().to_usize().unwrap();
            let materialized = materialize_rows(&plan, rows).unwrap();
            let report = verify_assignment(&materialized, &result.loads);
            assert!(report.passed(), "case {case}: {:?}", report.checks);
            let coded = BigInt::from(materialized.coded_rows);
            for (machine, expected) in result.loads.iter() {
                let expected_rows = expected * Frac::from_integer(coded.clone());
                let held = materialized
                    .worksets
                    .get(machine)
                    .map_or(0, |w| w.row_count());
                assert_eq!(
                    Frac::from_integer(BigInt::from(held)),
                    expected_rows,
                    "case {case}: machine {machine} row count"
                );
            }
        }
    });
}

// ----- 5. any L shards decode the product exactly ----------------------------

fn l_subsets(n: u32, l: usize) -> Vec<Vec<u32>> {
    fn recurse(start: u32, n: u32, left: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(current.clone());
            return;
        }
        for id in start..=(n + 1 - left as u32) {
            current.push(id);
            recurse(id + 1, n, left - 1, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    recurse(1, n, l, &mut Vec::new(), &mut out);
    out
}

#[test]
fn criterion_5_every_l_subset_decodes() {
    criterion("criterion 5 (exhaustive subset decoding)", Duration::from_secs(60), || {
        let mut rng = StdRng::seed_from_u64(501);
        for n in 1u32..=8 {
            for l in 1..=4usize.min(n as usize) {
                let coded = rng.gen_range(1usize..=16);
                let rows = coded * l;
                let cols = rng.gen_range(1usize..=16);
                let x = DataMatrix::random(rows, cols, l, &mut rng).unwrap();
                let w: Vec<Fp> = (0..cols).map(|_| Fp::new(rng.gen_range(0..MODULUS))).collect();
                let truth = x.multiply_vector(&w).unwrap();
                let g = make_generator(n as usize, l).unwrap();
                let shards = encode(&x, &g).unwrap();
                let all_rows: Vec<usize> = (0..coded).collect();

                for subset in l_subsets(n, l) {
                    let partials: Vec<_> = subset
                        .iter()
                        .map(|&id| {
                            compute_partial(&shards[(id - 1) as usize], &w, &all_rows).unwrap()
                        })
                        .collect();
                    let refs: Vec<&_> = partials.iter().collect();
                    let mut decoded = vec![Fp::ZERO; rows];
                    for row in 0..coded {
                        for (sub, value) in decode_row(&refs, row, &g).unwrap().iter().enumerate()
                        {
                            decoded[sub * coded + row] = *value;
                        }
                    }
                    assert_eq!(
                        decoded, truth,
                        "n={n} l={l} subset {subset:?} decoded wrong"
                    );
                }
            }
        }
    });
}

// ----- 6. the binary reproduces the reference timeline -----------------------

#[test]
fn criterion_6_reference_timeline_end_to_end() {
    criterion("criterion 6 (reference timeline through the binary)", Duration::from_secs(5), || {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.json");
        std::fs::write(
            &config_path,
            serde_json::json!({
                "n": 6,
                "l": 3,
                "speeds": [2, 2, 3, 3, 4, 4],
                "events": [
                    {"t": 1, "available": [1, 2, 3, 4, 5, 6]},
                    {"t": 2, "available": [1, 2, 3, 5, 6]},
                    {"t": 3, "available": [1, 2, 3, 5]},
                    {"t": 4, "available": [2, 3, 5]}
                ],
                "r": 4,
                "seed": 11
            })
            .to_string(),
        )
        .unwrap();
        let out = dir.path().join("out");
        let output = std::process::Command::new(env!("CARGO_BIN_EXE_cec"))
            .args(["simulate", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out)
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "simulate failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        let csv = std::fs::read_to_string(out.join("steps.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines,
            vec![
                "t,N_t,c_star_num,c_star_den,F,baseline_num,baseline_den,overlap_num,overlap_den,verified",
                "1,6,1,6,4,1,4,0,1,true",
                "2,5,1,5,4,3,10,67,90,true",
                "3,4,2,7,3,3,8,71,105,true",
                "4,3,1,2,1,1,2,17,21,true",
            ]
        );
    });
}

// ----- 7. the optimum never loses to the equal-split baseline ----------------

#[test]
fn criterion_7_dominates_equal_split_baseline() {
    criterion("criterion 7 (dominance on 500 random timelines)", Duration::from_secs(30), || {
        let mut rng = StdRng::seed_from_u64(701);
        for timeline in 0..500 {
            let split = rng.gen_range(1usize..=5);
            let pool = rng.gen_range(split.max(2)..=10);
            let pool_speeds = SpeedVector::new(
                (0..pool).map(|_| frac_int(rng.gen_range(1..=20))).collect(),
            )
            .unwrap();
            let steps = rng.gen_range(1usize..=5);
            for _ in 0..steps {
                let n_avail = rng.gen_range(split..=pool);
                let mut ids: Vec<u32> = (1..=pool as u32).collect();
                for i in 0..n_avail {
                    let j = rng.gen_range(i..ids.len());
                    ids.swap(i, j);
                }
                let set =
                    AvailableSet::new(ids[..n_avail].iter().map(|&id| MachineId(id))).unwrap();
                let result = optimal_load(&pool_speeds, &set, split).unwrap();
                let (_, baseline) = cyclic_baseline(&set, split, &pool_speeds).unwrap();
                assert!(
                    result.c_star <= baseline,
                    "timeline {timeline}: c_star {} beats baseline {}",
                    result.c_star,
                    baseline
                );
                let values = result.loads.values();
                let all_equal = values.windows(2).all(|pair| pair[0] == pair[1]);
                assert_eq!(
                    result.c_star == baseline,
                    all_equal,
                    "timeline {timeline}: ties must coincide with equal loads"
                );
            }
        }
    });
}
