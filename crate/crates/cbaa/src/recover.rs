//! Super-host recovery: locate hot columns in each restoring array, walk the
//! tuple space, reconstruct candidate left parts, and validate each candidate
//! against its union column.
//!
//! Recovery is read-only on the cube and deterministic: for a fixed cube the
//! output is identical across runs and worker counts.

use crate::cube::Cube;
use crate::estimate::{corrected_estimate, cs_load, hot_threshold, ThresholdFormula};
use rayon::prelude::*;
use thiserror::Error;

/// Hot-column indexes per restoring array, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HotColumns {
    pub per_array: Vec<Vec<u32>>,
}

impl HotColumns {
    /// Number of tuples in the Cartesian product.
    pub fn tuple_count(&self) -> u128 {
        self.per_array.iter().map(|v| v.len() as u128).product()
    }
}

/// A recovered super host.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperHostRecord {
    /// Original (unmangled) inner address.
    pub ip: u32,
    /// Corrected cardinality estimate from the union column.
    pub estimate: f64,
    /// Cardinality sketch the host was recovered from.
    pub cs: u32,
}

/// Per-sketch detection thresholds derived from the sketch's load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsThresholds {
    pub epsilon: f64,
    pub theta_bn: f64,
}

/// Recovery parameters.
#[derive(Debug, Clone)]
pub struct RecoverOptions {
    /// Super-host cardinality threshold.
    pub theta: u32,
    /// Abort a sketch whose tuple space exceeds this many candidates.
    pub tuple_cap: u64,
    pub formula: ThresholdFormula,
    /// Worker threads; 0 means the default thread pool.
    pub workers: usize,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        RecoverOptions {
            theta: 1024,
            tuple_cap: 1 << 24,
            formula: ThresholdFormula::default(),
            workers: 0,
        }
    }
}

/// A sketch whose candidate tuple space exceeded the configured cap. Hot
/// column counts are reported so the operator can judge how pathological the
/// sketch is.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error(
    "sketch {cs}: {tuples} candidate tuples exceed the cap of {cap} (hot columns per array: {hot_counts:?})"
)]
pub struct TupleOverflow {
    pub cs: u32,
    pub tuples: u128,
    pub cap: u64,
    pub hot_counts: Vec<usize>,
}

/// Output of a full-cube recovery: records sorted by descending estimate
/// (ties by ascending address), plus any per-sketch overflow reports.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub records: Vec<SuperHostRecord>,
    pub overflows: Vec<TupleOverflow>,
}

/// Derives the per-sketch thresholds: load-estimate the sketch, then convert
/// the cardinality threshold into a zero-bit threshold.
pub fn cs_thresholds(cube: &Cube, cs: u32, theta: u32, formula: ThresholdFormula) -> CsThresholds {
    let load = cs_load(cube, cs);
    CsThresholds {
        epsilon: load.epsilon,
        theta_bn: hot_threshold(theta, load.epsilon, cube.config().g, formula),
    }
}

/// Scans every restoring-array column of one sketch and collects those with
/// at most `theta_bn` zero bits.
pub fn find_hot_columns(cube: &Cube, cs: u32, theta_bn: f64) -> HotColumns {
    let cfg = cube.config();
    let per_array = (0..cfg.num_ra())
        .map(|array| {
            (0..cfg.columns(array) as u32)
                .filter(|&col| cube.zero_count_column(cs, array, col) as f64 <= theta_bn)
                .collect()
        })
        .collect();
    HotColumns { per_array }
}

/// Scratch state reused across tuple checks by one worker.
struct Scratch {
    cols: Vec<u32>,
    words: Vec<u64>,
}

impl Scratch {
    fn new(cube: &Cube) -> Self {
        Scratch {
            cols: Vec::with_capacity(cube.config().num_arrays()),
            words: vec![0u64; cube.column_words()],
        }
    }
}

/// Checks one hot-column tuple: reconstruct the left part, and if the tuple
/// is consistent, test the union column (restoring columns plus the
/// validating columns the left part hashes to) against `theta_bn`.
pub fn check_tuple(
    cube: &Cube,
    cs: u32,
    ra_cols: &[u32],
    thresholds: &CsThresholds,
) -> Option<SuperHostRecord> {
    check_tuple_with(cube, cs, ra_cols, thresholds, &mut Scratch::new(cube))
}

fn check_tuple_with(
    cube: &Cube,
    cs: u32,
    ra_cols: &[u32],
    thresholds: &CsThresholds,
    scratch: &mut Scratch,
) -> Option<SuperHostRecord> {
    let cfg = cube.config();
    let lp = cube.layout().lp_from_tuple(ra_cols)?;

    scratch.cols.clear();
    scratch.cols.extend_from_slice(ra_cols);
    for j in 0..cfg.num_va() {
        scratch.cols.push(cfg.va_column_index(lp, j));
    }
    let zero_count = cube.union_columns_into(cs, &scratch.cols, &mut scratch.words);
    if zero_count as f64 > thresholds.theta_bn {
        return None;
    }
    Some(SuperHostRecord {
        ip: cfg.unmangle(cfg.combine_parts(lp, cs)),
        estimate: corrected_estimate(zero_count, thresholds.epsilon, cfg.g),
        cs,
    })
}

/// Recovers the super hosts of one cardinality sketch.
pub fn recover_cs(
    cube: &Cube,
    cs: u32,
    opts: &RecoverOptions,
) -> Result<Vec<SuperHostRecord>, TupleOverflow> {
    recover_cs_with(cube, cs, opts, &mut Scratch::new(cube))
}

fn recover_cs_with(
    cube: &Cube,
    cs: u32,
    opts: &RecoverOptions,
    scratch: &mut Scratch,
) -> Result<Vec<SuperHostRecord>, TupleOverflow> {
    let thresholds = cs_thresholds(cube, cs, opts.theta, opts.formula);
    let hot = find_hot_columns(cube, cs, thresholds.theta_bn);
    let tuples = hot.tuple_count();
    if tuples > opts.tuple_cap as u128 {
        return Err(TupleOverflow {
            cs,
            tuples,
            cap: opts.tuple_cap,
            hot_counts: hot.per_array.iter().map(Vec::len).collect(),
        });
    }
    if tuples == 0 {
        return Ok(Vec::new());
    }

    let num_ra = cube.config().num_ra();
    let mut records = Vec::new();
    let mut odometer = vec![0usize; num_ra];
    let mut ra_cols = vec![0u32; num_ra];
    'tuples: loop {
        for (k, &pos) in odometer.iter().enumerate() {
            ra_cols[k] = hot.per_array[k][pos];
        }
        if let Some(record) = check_tuple_with(cube, cs, &ra_cols, &thresholds, scratch) {
            records.push(record);
        }
        // Advance the least significant digit first.
        let mut k = num_ra;
        loop {
            if k == 0 {
                break 'tuples;
            }
            k -= 1;
            odometer[k] += 1;
            if odometer[k] < hot.per_array[k].len() {
                break;
            }
            odometer[k] = 0;
        }
    }

    records.sort_by_key(|r| r.ip);
    records.dedup_by_key(|r| r.ip);
    Ok(records)
}

/// Recovers super hosts from every sketch in the cube. The cube must be
/// quiescent. Sketches are processed on parallel workers, each with its own
/// preallocated union-column scratch buffer.
pub fn recover_all(cube: &Cube, opts: &RecoverOptions) -> DetectionReport {
    let sketches: Vec<u32> = (0..cube.config().num_sketches()).collect();
    let run = || {
        sketches
            .par_iter()
            .map_init(
                || Scratch::new(cube),
                |scratch, &cs| recover_cs_with(cube, cs, opts, scratch),
            )
            .collect::<Vec<_>>()
    };
    let per_cs = if opts.workers == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .expect("worker pool");
        pool.install(run)
    };

    let mut records = Vec::new();
    let mut overflows = Vec::new();
    for result in per_cs {
        match result {
            Ok(mut found) => records.append(&mut found),
            Err(overflow) => overflows.push(overflow),
        }
    }
    records.sort_by(|a, b| {
        b.estimate
            .total_cmp(&a.estimate)
            .then_with(|| a.ip.cmp(&b.ip))
    });
    DetectionReport { records, overflows }
}
