//! The cube of bit arrays: dense bit storage for `2^r` cardinality sketches,
//! plus the primitive bit operations (set, zero count, column union, merge).
//!
//! Addressing is fixed for cross-implementation byte exactness: rows are
//! consecutive within a column, columns within an array, restoring arrays
//! before validating arrays, sketches by ascending index. Bit `j` (LSB first)
//! of byte `k` is overall bit `8k + j`.
//!
//! Columns hold `g` bits with `g` a power of two, so every column is either
//! a whole number of 64-bit words or packed at an aligned sub-word offset;
//! zero counting always runs on word population counts.
//!
//! Writers only ever OR bits in, through atomic words, so any number of
//! updating workers may share a cube. Reads assume the writers are done.

use crate::config::{ConfigError, SketchConfig};
use crate::mapping::ColumnLayout;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Refusal to merge sketches of different shape.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("sketch configurations differ on field `{0}`")]
    ConfigMismatch(&'static str),
}

/// The full sketch state.
pub struct Cube {
    config: SketchConfig,
    layout: ColumnLayout,
    cs_bits: u64,
    array_offset: Vec<u64>,
    words: Vec<AtomicU64>,
}

impl Cube {
    /// Allocates an all-zero cube, validating the configuration.
    pub fn new(config: SketchConfig) -> Result<Self, ConfigError> {
        let layout = config.validate()?;
        let mut array_offset = Vec::with_capacity(config.num_arrays());
        let mut cs_bits = 0u64;
        for i in 0..config.num_arrays() {
            array_offset.push(cs_bits);
            cs_bits += config.columns(i) * config.g as u64;
        }
        let total_bits = cs_bits * config.num_sketches() as u64;
        let words = (0..total_bits.div_ceil(64))
            .map(|_| AtomicU64::new(0))
            .collect();
        Ok(Cube {
            config,
            layout,
            cs_bits,
            array_offset,
            words,
        })
    }

    pub(crate) fn from_words(config: SketchConfig, raw: Vec<u64>) -> Result<Self, ConfigError> {
        let mut cube = Cube::new(config)?;
        assert_eq!(raw.len(), cube.words.len());
        cube.words = raw.into_iter().map(AtomicU64::new).collect();
        Ok(cube)
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn layout(&self) -> &ColumnLayout {
        &self.layout
    }

    pub fn total_bits(&self) -> u64 {
        self.cs_bits * self.config.num_sketches() as u64
    }

    pub fn payload_bytes(&self) -> u64 {
        self.total_bits() / 8
    }

    pub(crate) fn words(&self) -> &[AtomicU64] {
        &self.words
    }

    /// Number of 64-bit words spanned by one column.
    pub(crate) fn column_words(&self) -> usize {
        (self.config.g as usize).div_ceil(64)
    }

    fn bit_index(&self, cs: u32, array: usize, col: u32, row: u32) -> u64 {
        let g = self.config.g;
        assert!(cs < self.config.num_sketches(), "sketch index out of range");
        assert!(array < self.config.num_arrays(), "array index out of range");
        assert!(
            (col as u64) < self.config.columns(array),
            "column index out of range"
        );
        assert!(row < g, "row index out of range");
        cs as u64 * self.cs_bits
            + self.array_offset[array]
            + col as u64 * g as u64
            + row as u64
    }

    /// Sets one bit. Safe to call from any number of workers concurrently;
    /// no set is ever lost.
    pub fn set_bit(&self, cs: u32, array: usize, col: u32, row: u32) {
        let idx = self.bit_index(cs, array, col, row);
        self.words[(idx / 64) as usize].fetch_or(1u64 << (idx % 64), Ordering::Relaxed);
    }

    /// Reads one bit.
    pub fn bit(&self, cs: u32, array: usize, col: u32, row: u32) -> bool {
        let idx = self.bit_index(cs, array, col, row);
        self.words[(idx / 64) as usize].load(Ordering::Relaxed) & (1u64 << (idx % 64)) != 0
    }

    /// Exact count of zero bits in one column.
    pub fn zero_count_column(&self, cs: u32, array: usize, col: u32) -> u32 {
        let g = self.config.g;
        let start = self.bit_index(cs, array, col, 0);
        let ones = if g >= 64 {
            let first = (start / 64) as usize;
            self.words[first..first + (g / 64) as usize]
                .iter()
                .map(|w| w.load(Ordering::Relaxed).count_ones())
                .sum::<u32>()
        } else {
            self.packed_column(start).count_ones()
        };
        g - ones
    }

    /// A sub-word column's bits, shifted down to the low `g` bits.
    fn packed_column(&self, start_bit: u64) -> u64 {
        let g = self.config.g;
        debug_assert!(g < 64 && start_bit.is_multiple_of(g as u64));
        let word = self.words[(start_bit / 64) as usize].load(Ordering::Relaxed);
        (word >> (start_bit % 64)) & ((1u64 << g) - 1)
    }

    /// Bitwise AND of one selected column per array, written over `buf`
    /// (`column_words()` words, bits beyond `g` zero). Returns the zero count.
    pub fn union_columns_into(&self, cs: u32, cols: &[u32], buf: &mut [u64]) -> u32 {
        let g = self.config.g;
        assert_eq!(
            cols.len(),
            self.config.num_arrays(),
            "one column per array"
        );
        assert_eq!(buf.len(), self.column_words());
        if g >= 64 {
            for (array, &col) in cols.iter().enumerate() {
                let first = (self.bit_index(cs, array, col, 0) / 64) as usize;
                let words = &self.words[first..first + buf.len()];
                if array == 0 {
                    for (dst, src) in buf.iter_mut().zip(words) {
                        *dst = src.load(Ordering::Relaxed);
                    }
                } else {
                    for (dst, src) in buf.iter_mut().zip(words) {
                        *dst &= src.load(Ordering::Relaxed);
                    }
                }
            }
        } else {
            let mut acc = (1u64 << g) - 1;
            for (array, &col) in cols.iter().enumerate() {
                acc &= self.packed_column(self.bit_index(cs, array, col, 0));
            }
            buf[0] = acc;
        }
        g - buf.iter().map(|w| w.count_ones()).sum::<u32>()
    }

    /// Bitwise AND of one selected column per array.
    pub fn union_columns(&self, cs: u32, cols: &[u32]) -> UnionColumn {
        let mut words = vec![0u64; self.column_words()];
        let zero_count = self.union_columns_into(cs, cols, &mut words);
        UnionColumn {
            g: self.config.g,
            words,
            zero_count,
        }
    }

    /// Returns a new cube holding the bitwise OR of both inputs.
    ///
    /// Merging is commutative, associative, and idempotent, with the empty
    /// cube as identity, so distributed sketches can be combined in any
    /// order. Refused unless the configurations match exactly, seeds
    /// included.
    pub fn merge(&self, other: &Cube) -> Result<Cube, MergeError> {
        self.check_mergeable(other)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| AtomicU64::new(a.load(Ordering::Relaxed) | b.load(Ordering::Relaxed)))
            .collect();
        Ok(Cube {
            config: self.config.clone(),
            layout: self.layout.clone(),
            cs_bits: self.cs_bits,
            array_offset: self.array_offset.clone(),
            words,
        })
    }

    /// ORs `other` into `self` in place.
    pub fn merge_from(&mut self, other: &Cube) -> Result<(), MergeError> {
        self.check_mergeable(other)?;
        for (dst, src) in self.words.iter_mut().zip(&other.words) {
            *dst.get_mut() |= src.load(Ordering::Relaxed);
        }
        Ok(())
    }

    fn check_mergeable(&self, other: &Cube) -> Result<(), MergeError> {
        match self.config.first_mismatch(&other.config) {
            Some(field) => Err(MergeError::ConfigMismatch(field)),
            None => Ok(()),
        }
    }

    /// Total number of set bits. Mostly useful in tests and reports.
    pub fn count_set_bits(&self) -> u64 {
        self.words
            .iter()
            .map(|w| w.load(Ordering::Relaxed).count_ones() as u64)
            .sum()
    }
}

impl Clone for Cube {
    fn clone(&self) -> Self {
        Cube {
            config: self.config.clone(),
            layout: self.layout.clone(),
            cs_bits: self.cs_bits,
            array_offset: self.array_offset.clone(),
            words: self
                .words
                .iter()
                .map(|w| AtomicU64::new(w.load(Ordering::Relaxed)))
                .collect(),
        }
    }
}

impl PartialEq for Cube {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a.load(Ordering::Relaxed) == b.load(Ordering::Relaxed))
    }
}

impl std::fmt::Debug for Cube {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cube")
            .field("config", &self.config)
            .field("total_bits", &self.total_bits())
            .field("set_bits", &self.count_set_bits())
            .finish()
    }
}

/// The bitwise AND of all columns mapped to one inner address, with its zero
/// count. Bits beyond `g` in the last word are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnionColumn {
    g: u32,
    words: Vec<u64>,
    zero_count: u32,
}

impl UnionColumn {
    pub fn g(&self) -> u32 {
        self.g
    }

    pub fn zero_count(&self) -> u32 {
        self.zero_count
    }

    pub fn bit(&self, row: u32) -> bool {
        assert!(row < self.g);
        self.words[(row / 64) as usize] & (1u64 << (row % 64)) != 0
    }
}
