//! Acceptance suite: one test per release criterion, each printing a PASS or
//! FAIL line (run with `--nocapture` to see them). Tolerances are pinned in
//! the assertions.

use cbaa::distributed::{
    cube_from_bytes, cube_to_bytes, partition_trace, write_cube, PartitionPolicy,
};
use cbaa::estimate::{corrected_estimate, hot_threshold, linear_estimate, ThresholdFormula};
use cbaa::metrics::{score_detection, GroundTruth};
use cbaa::recover::{recover_all, RecoverOptions};
use cbaa::synth::{synth_trace, HostClass, SynthSpec};
use cbaa::update::{record_slice_parallel, record_stream, IpPair, UpdateOptions};
use cbaa::{ColumnLayout, Cube, SketchConfig, SuperHostRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

fn criterion(number: u32, name: &str, body: impl FnOnce()) {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(body));
    let status = if result.is_ok() { "PASS" } else { "FAIL" };
    println!(
        "criterion {number} ({name}): {status} [{:.1}s]",
        start.elapsed().as_secs_f64()
    );
    if let Err(panic) = result {
        resume_unwind(panic);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

/// A million-pair trace with enough planted hosts that recovery output is
/// non-trivial.
fn million_pair_trace(seed: u64) -> Vec<IpPair> {
    let (records, _) = synth_trace(&SynthSpec {
        background: HostClass::new(100_000, 1, 18),
        planted: vec![HostClass::new(20, 2048, 8192)],
        duplication: 1.0,
        seed,
    });
    records.iter().map(|r| r.pair()).collect()
}

#[test]
fn criterion_1_distributed_equivalence() {
    criterion(1, "distributed equivalence", || {
        let start = Instant::now();
        let pairs = million_pair_trace(0xD15C0);
        assert!(pairs.len() >= 1_000_000, "trace has {} pairs", pairs.len());

        let central = Cube::new(SketchConfig::default()).unwrap();
        record_stream(&central, pairs.iter().copied());
        let opts = RecoverOptions::default();
        let central_detection = recover_all(&central, &opts);
        assert!(central_detection.overflows.is_empty());
        assert!(!central_detection.records.is_empty());

        for policy in PartitionPolicy::ALL {
            for routers in [2usize, 4, 8] {
                // Build each router's sketch, ship it as bytes, merge the
                // received copies.
                let mut merged: Option<Cube> = None;
                for part in partition_trace(&pairs, policy, routers) {
                    let local = Cube::new(SketchConfig::default()).unwrap();
                    record_stream(&local, part.iter().copied());
                    let shipped = cube_from_bytes(&cube_to_bytes(&local)).unwrap();
                    merged = Some(match merged {
                        None => shipped,
                        Some(mut acc) => {
                            acc.merge_from(&shipped).unwrap();
                            acc
                        }
                    });
                }
                let merged = merged.unwrap();
                assert!(merged == central, "{policy} x{routers}: cubes differ");
                assert_eq!(
                    recover_all(&merged, &opts).records,
                    central_detection.records,
                    "{policy} x{routers}: detections differ"
                );
            }
        }
        assert!(
            start.elapsed().as_secs() < 60,
            "took {:?}, budget is 60s",
            start.elapsed()
        );
    });
}

#[test]
fn criterion_2_parallel_determinism() {
    criterion(2, "parallel determinism", || {
        let pairs = million_pair_trace(0xBEEF);
        let single = Cube::new(SketchConfig::default()).unwrap();
        record_slice_parallel(
            &single,
            &pairs,
            &UpdateOptions {
                workers: 1,
                ..UpdateOptions::default()
            },
        );
        let eight = Cube::new(SketchConfig::default()).unwrap();
        record_slice_parallel(
            &eight,
            &pairs,
            &UpdateOptions {
                workers: 8,
                ..UpdateOptions::default()
            },
        );
        assert!(single == eight, "1-worker and 8-worker cubes differ");
    });
}

#[test]
fn criterion_3_plant_and_recover_accuracy() {
    criterion(3, "plant-and-recover accuracy", || {
        let mut fnrs = Vec::new();
        let mut ftrs = Vec::new();
        for seed in 0..20u64 {
            let (records, truth) = synth_trace(&SynthSpec {
                background: HostClass::new(100_000, 1, 100),
                planted: vec![HostClass::new(50, 2048, 16384)],
                duplication: 1.0,
                seed: 7000 + seed,
            });
            let pairs: Vec<IpPair> = records.iter().map(|r| r.pair()).collect();
            drop(records);

            let cube = Cube::new(SketchConfig::default()).unwrap();
            record_slice_parallel(&cube, &pairs, &UpdateOptions::default());
            let detection = recover_all(&cube, &RecoverOptions::default());
            assert!(detection.overflows.is_empty(), "seed {seed}: overflow");

            let metrics = score_detection(&detection.records, &truth, 1024).unwrap();
            fnrs.push(metrics.fnr);
            ftrs.push(metrics.ftr);
        }
        let median_fnr = median(&mut fnrs);
        let median_ftr = median(&mut ftrs);
        assert!(median_fnr <= 0.01, "median fnr {median_fnr}");
        assert!(median_ftr <= 0.05, "median ftr {median_ftr}");
    });
}

#[test]
fn criterion_4_estimator_accuracy() {
    criterion(4, "estimator accuracy", || {
        let g = 4096u32;
        for n in [256usize, 1024, 2048] {
            let mut errors: Vec<f64> = (0..100)
                .map(|seed| {
                    let mut rng = rng(4000 + seed + n as u64);
                    let mut bits = vec![false; g as usize];
                    for _ in 0..n {
                        bits[rng.gen_range(0..g) as usize] = true;
                    }
                    let zeros = bits.iter().filter(|&&b| !b).count() as u32;
                    (linear_estimate(g, zeros) - n as f64).abs() / n as f64
                })
                .collect();
            let med = median(&mut errors);
            assert!(med <= 0.10, "n = {n}: median relative error {med}");
        }

        for zeros in 1..=g {
            assert_eq!(
                corrected_estimate(zeros, 0.0, g).to_bits(),
                linear_estimate(g, zeros).to_bits(),
                "zeros = {zeros}"
            );
        }
    });
}

#[test]
fn criterion_5_hot_threshold_behavior() {
    criterion(5, "hot-threshold behavior", || {
        let g = 4096u32;
        let theta = 1024u32;
        let theta_bn = hot_threshold(theta, 0.0, g, ThresholdFormula::Paper);
        let trials = 1000;

        let passes = |cardinality: u32, seed_base: u64| -> usize {
            (0..trials)
                .filter(|&t| {
                    let mut rng = rng(seed_base + t as u64);
                    let mut bits = vec![false; g as usize];
                    for _ in 0..cardinality {
                        bits[rng.gen_range(0..g) as usize] = true;
                    }
                    bits.iter().filter(|&&b| !b).count() as f64 <= theta_bn
                })
                .count()
        };

        let high = passes(2 * theta, 51_000);
        let low = passes(theta / 2, 52_000);
        assert!(high >= trials * 99 / 100, "2-theta pass rate {high}/{trials}");
        assert!(low <= trials / 100, "half-theta pass rate {low}/{trials}");
    });
}

#[test]
fn criterion_6_reconstruction_round_trip() {
    criterion(6, "reconstruction round trip", || {
        // Narrow analogue, exhaustively: every 10-bit left part inverts.
        for clbs in [[0u8, 3, 6], [1, 4, 7]] {
            let layout = ColumnLayout::derive(10, &clbs, &[4, 4, 4]).unwrap();
            for lp in 0u32..(1 << 10) {
                assert_eq!(
                    layout.lp_from_tuple(&layout.column_tuple(lp)),
                    Some(lp),
                    "clbs {clbs:?}, lp {lp:#x}"
                );
            }
        }

        // Full width: a million random left parts, zero failures.
        let config = SketchConfig::default();
        let layout = config.validate().unwrap();
        let mut rng = rng(60_000);
        for _ in 0..1_000_000 {
            let lp = rng.gen::<u32>() >> config.r;
            assert_eq!(layout.lp_from_tuple(&layout.column_tuple(lp)), Some(lp));
        }
    });
}

/// Builds a random valid configuration, exercising wrapped efficient parts,
/// sub-word and multi-word columns, and 0..=2 validating arrays.
fn random_config(rng: &mut ChaCha8Rng) -> SketchConfig {
    let r = rng.gen_range(0..=3u8);
    let lp_bits = 32 - r;
    let num_ra = rng.gen_range(4..=6usize);

    // Random composition of lp_bits into num_ra efficient parts of 1..=12.
    let mut ep = Vec::with_capacity(num_ra);
    let mut remaining = lp_bits as i32;
    for i in 0..num_ra - 1 {
        let left = (num_ra - 1 - i) as i32;
        let lo = (remaining - 12 * left).max(1);
        let hi = (remaining - left).min(12);
        let part = rng.gen_range(lo..=hi);
        ep.push(part as u8);
        remaining -= part;
    }
    assert!((1..=12).contains(&remaining));
    ep.push(remaining as u8);

    // Start offsets; a nonzero first offset wraps the last efficient part.
    let start = rng.gen_range(0..ep[num_ra - 1]);
    let mut clbs = Vec::with_capacity(num_ra);
    let mut acc = start;
    for &len in &ep[..num_ra] {
        clbs.push(acc);
        acc += len;
    }

    let mut cbn: Vec<u8> = (0..num_ra)
        .map(|i| {
            let next_ep = ep[(i + 1) % num_ra];
            let max_cp = next_ep.min(12 - ep[i].min(12));
            ep[i] + rng.gen_range(0..=max_cp)
        })
        .collect();
    let num_va = rng.gen_range(0..=2usize);
    for _ in 0..num_va {
        cbn.push(rng.gen_range(1..=10));
    }

    SketchConfig {
        r,
        g: *[8u32, 16, 64, 128, 256].choose(rng).unwrap(),
        cbn,
        clbs,
        mangle_a: rng.gen::<u32>() | 1,
        mangle_b: rng.gen(),
        bv_seed: rng.gen(),
        va_seeds: (0..num_va).map(|_| rng.gen()).collect(),
    }
}

#[test]
fn criterion_7_serialization() {
    criterion(7, "serialization", || {
        let mut rng = rng(70_000);
        for case in 0..100 {
            let config = random_config(&mut rng);
            config
                .validate()
                .unwrap_or_else(|e| panic!("case {case}: generated config invalid: {e}"));
            let cube = Cube::new(config.clone()).unwrap();
            for _ in 0..2000 {
                let cs = rng.gen_range(0..config.num_sketches());
                let array = rng.gen_range(0..config.num_arrays());
                let col = rng.gen_range(0..config.columns(array)) as u32;
                let row = rng.gen_range(0..config.g);
                cube.set_bit(cs, array, col, row);
            }
            let bytes = cube_to_bytes(&cube);
            let restored = cube_from_bytes(&bytes).unwrap();
            assert!(restored == cube, "case {case}: cube differs");
            assert_eq!(restored.config(), &config, "case {case}: header differs");
            assert_eq!(
                cube_to_bytes(&restored),
                bytes,
                "case {case}: bytes differ"
            );
        }

        // The standard configuration serializes to exactly 128 MiB of
        // payload behind a 44-byte header.
        struct CountingSink(u64);
        impl Write for CountingSink {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0 += buf.len() as u64;
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let cube = Cube::new(SketchConfig::default()).unwrap();
        assert_eq!(cube.payload_bytes(), 128 << 20);
        let mut sink = CountingSink(0);
        write_cube(&cube, &mut sink).unwrap();
        assert_eq!(sink.0, 44 + (128 << 20));
    });
}

#[test]
fn criterion_8_mangle_bijection() {
    criterion(8, "mangle bijection", || {
        let config = SketchConfig::default();
        for low in 0u32..=0xFFFF {
            let ip = 0x5EED_0000 | low;
            assert_eq!(config.unmangle(config.mangle(ip)), ip);
        }
        let mut rng = rng(80_000);
        for _ in 0..1_000_000 {
            let ip: u32 = rng.gen();
            assert_eq!(config.unmangle(config.mangle(ip)), ip);
        }
    });
}

#[test]
fn criterion_9_metrics_fixtures() {
    criterion(9, "metrics fixtures", || {
        let record = |ip: u32| SuperHostRecord {
            ip,
            estimate: 0.0,
            cs: 0,
        };
        let truth = GroundTruth::from_exact_counts(
            [(1u32, 200u64), (2, 200), (3, 200), (4, 200), (90, 10), (91, 10)]
                .into_iter()
                .collect(),
        );

        // Miss one of four true hosts, add two below-threshold hosts.
        let detected = [record(1), record(2), record(3), record(90), record(91)];
        let report = score_detection(&detected, &truth, 100).unwrap();
        assert_eq!(report.fnr, 0.25);
        assert_eq!(report.fpr, 0.5);
        assert_eq!(report.ftr, 0.75);

        // Perfect detection.
        let detected = [record(1), record(2), record(3), record(4)];
        let report = score_detection(&detected, &truth, 100).unwrap();
        assert_eq!((report.fnr, report.fpr, report.ftr), (0.0, 0.0, 0.0));

        // Nothing detected.
        let report = score_detection(&[], &truth, 100).unwrap();
        assert_eq!((report.fnr, report.fpr), (1.0, 0.0));
    });
}
