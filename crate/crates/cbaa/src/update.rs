//! Recording a stream of address pairs into the cube.
//!
//! Every update is write-only: the pair is mangled, split, hashed, and the
//! resulting `num_arrays` bits are set without reading any cube state. That
//! makes updates idempotent and order-independent, and lets any number of
//! workers share one cube.

use crate::cube::Cube;
use rayon::prelude::*;

/// One observed (inner, outer) contact. Direction is normalized upstream:
/// `iip` is always the monitored side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IpPair {
    pub iip: u32,
    pub oip: u32,
}

/// Tuning for parallel recording.
#[derive(Debug, Clone)]
pub struct UpdateOptions {
    /// Worker threads; 0 means the default thread pool.
    pub workers: usize,
    /// Pairs dispatched per batch. Affects throughput only — the resulting
    /// cube is identical for any batch size.
    pub batch_size: usize,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        UpdateOptions {
            workers: 0,
            batch_size: 64 * 1024,
        }
    }
}

/// Records one pair: sets one bit per array in the sketch selected by the
/// mangled inner address.
pub fn record_pair(cube: &Cube, pair: IpPair) {
    let cfg = cube.config();
    let parts = cfg.split_ip(cfg.mangle(pair.iip));
    let row = cfg.row_index(cfg.mangle(pair.oip));
    for i in 0..cfg.num_ra() {
        cube.set_bit(parts.rp, i, cube.layout().column_index(parts.lp, i), row);
    }
    for j in 0..cfg.num_va() {
        cube.set_bit(
            parts.rp,
            cfg.num_ra() + j,
            cfg.va_column_index(parts.lp, j),
            row,
        );
    }
}

/// Records every pair in order. Returns the number of pairs processed.
pub fn record_stream(cube: &Cube, pairs: impl IntoIterator<Item = IpPair>) -> u64 {
    let mut count = 0u64;
    for pair in pairs {
        record_pair(cube, pair);
        count += 1;
    }
    count
}

/// Like [`record_stream`] but stops at the first ingestion error, which is
/// returned unchanged.
pub fn record_try_stream<E>(
    cube: &Cube,
    pairs: impl IntoIterator<Item = Result<IpPair, E>>,
) -> Result<u64, E> {
    let mut count = 0u64;
    for pair in pairs {
        record_pair(cube, pair?);
        count += 1;
    }
    Ok(count)
}

/// Fans batches of pairs out to worker threads. The cube is bit-identical to
/// a sequential [`record_stream`] of the same pairs.
pub fn record_slice_parallel(cube: &Cube, pairs: &[IpPair], opts: &UpdateOptions) -> u64 {
    assert!(opts.batch_size > 0);
    let run = || {
        for batch in pairs.chunks(opts.batch_size) {
            batch.par_iter().for_each(|&pair| record_pair(cube, pair));
        }
    };
    if opts.workers == 0 {
        run();
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .expect("worker pool");
        pool.install(run);
    }
    pairs.len() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rng, small_config};
    use rand::seq::SliceRandom;
    use rand::Rng;
    use std::collections::HashSet;

    fn random_pairs(n: usize, seed: u64) -> Vec<IpPair> {
        let mut rng = rng(seed);
        (0..n)
            .map(|_| IpPair {
                iip: rng.gen(),
                oip: rng.gen(),
            })
            .collect()
    }

    #[test]
    fn one_pair_sets_one_bit_per_array() {
        let cube = Cube::new(small_config()).unwrap();
        let pair = IpPair {
            iip: 0xC0A8_0101,
            oip: 0x0808_0808,
        };
        record_pair(&cube, pair);
        assert_eq!(cube.count_set_bits(), cube.config().num_arrays() as u64);

        // Recording the same pair again changes nothing.
        let before = cube.clone();
        record_pair(&cube, pair);
        assert_eq!(cube, before);
    }

    #[test]
    fn recorded_bits_match_simulation_oracle() {
        // Re-derive every expected bit position independently and require the
        // cube to hold exactly that set of bits.
        let cfg = small_config();
        let cube = Cube::new(cfg.clone()).unwrap();
        let pairs = random_pairs(2000, 97);
        record_stream(&cube, pairs.iter().copied());

        let layout = cfg.validate().unwrap();
        let mut expected: HashSet<(u32, usize, u32, u32)> = HashSet::new();
        for p in &pairs {
            let parts = cfg.split_ip(cfg.mangle(p.iip));
            let row = cfg.row_index(cfg.mangle(p.oip));
            for i in 0..cfg.num_ra() {
                expected.insert((parts.rp, i, layout.column_index(parts.lp, i), row));
            }
            for j in 0..cfg.num_va() {
                expected.insert((
                    parts.rp,
                    cfg.num_ra() + j,
                    cfg.va_column_index(parts.lp, j),
                    row,
                ));
            }
        }
        assert_eq!(cube.count_set_bits(), expected.len() as u64);
        for &(cs, array, col, row) in &expected {
            assert!(cube.bit(cs, array, col, row));
        }
    }

    #[test]
    fn shared_inner_host_union_zero_count() {
        let cfg = small_config();
        let cube = Cube::new(cfg.clone()).unwrap();
        let iip = 0x0A00_0001;
        let mut rng = rng(101);
        let k = 20; // well below g = 64
        let oips: Vec<u32> = (0..k).map(|_| rng.gen()).collect();
        for &oip in &oips {
            record_pair(&cube, IpPair { iip, oip });
        }

        let parts = cfg.split_ip(cfg.mangle(iip));
        let layout = cfg.validate().unwrap();
        let mut cols: Vec<u32> = (0..cfg.num_ra())
            .map(|i| layout.column_index(parts.lp, i))
            .collect();
        for j in 0..cfg.num_va() {
            cols.push(cfg.va_column_index(parts.lp, j));
        }
        let distinct_rows: HashSet<u32> = oips
            .iter()
            .map(|&oip| cfg.row_index(cfg.mangle(oip)))
            .collect();
        assert_eq!(
            cube.union_columns(parts.rp, &cols).zero_count(),
            cfg.g - distinct_rows.len() as u32
        );
    }

    #[test]
    fn empty_stream_is_a_no_op() {
        let cube = Cube::new(small_config()).unwrap();
        assert_eq!(record_stream(&cube, std::iter::empty()), 0);
        assert_eq!(cube.count_set_bits(), 0);
    }

    #[test]
    fn stream_order_does_not_matter() {
        let pairs = random_pairs(5000, 103);
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng(107));

        let a = Cube::new(small_config()).unwrap();
        let b = Cube::new(small_config()).unwrap();
        assert_eq!(record_stream(&a, pairs), 5000);
        assert_eq!(record_stream(&b, shuffled), 5000);
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_recording_matches_serial() {
        let pairs = random_pairs(100_000, 109);
        let serial = Cube::new(small_config()).unwrap();
        record_stream(&serial, pairs.iter().copied());

        for workers in [1, 4] {
            let parallel = Cube::new(small_config()).unwrap();
            let opts = UpdateOptions {
                workers,
                batch_size: 4096,
            };
            assert_eq!(
                record_slice_parallel(&parallel, &pairs, &opts),
                pairs.len() as u64
            );
            assert_eq!(parallel, serial, "workers = {workers}");
        }
    }

    #[test]
    fn try_stream_propagates_source_errors() {
        let cube = Cube::new(small_config()).unwrap();
        let source: Vec<Result<IpPair, &str>> = vec![
            Ok(IpPair { iip: 1, oip: 2 }),
            Err("bad record"),
            Ok(IpPair { iip: 3, oip: 4 }),
        ];
        assert_eq!(record_try_stream(&cube, source), Err("bad record"));
        // The pair before the error was recorded.
        assert_eq!(cube.count_set_bits(), cube.config().num_arrays() as u64);
    }
}
