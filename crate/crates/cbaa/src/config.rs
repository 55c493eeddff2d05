//! Sketch configuration: the structural parameters that fix a sketch family.
//!
//! Two sketches are mergeable only if their configurations are identical,
//! seeds included — the configuration travels in the serialized header so a
//! mismatch can never be silent.

use crate::mapping::ColumnLayout;
use thiserror::Error;

/// Structural parameters of a cube sketch.
///
/// * `r` — count of low-order mangled-IP bits selecting a cardinality sketch;
///   there are `2^r` sketches in the cube.
/// * `g` — rows per column (bits per bit vector), a power of two.
/// * `cbn` — per-array column-index bit width; array `i` has `2^cbn[i]`
///   columns. Restoring arrays come first, then validating arrays.
/// * `clbs` — per-restoring-array start offset of the extracted column index,
///   expressed as a bit position within the left part (`0 <= clbs[i] < 32-r`).
/// * `mangle_a`/`mangle_b` — parameters of the reversible IP mangling
///   bijection; `mangle_a` must be odd.
/// * `va_seeds` — one hash seed per validating array.
/// * `bv_seed` — seed of the row hash applied to the opposite address.
///
/// The number of restoring arrays is `clbs.len()`, the number of validating
/// arrays is `va_seeds.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchConfig {
    pub r: u8,
    pub g: u32,
    pub cbn: Vec<u8>,
    pub clbs: Vec<u8>,
    pub mangle_a: u32,
    pub mangle_b: u32,
    pub bv_seed: u32,
    pub va_seeds: Vec<u32>,
}

/// A configuration rule violation. Each variant names the rule it checks so
/// rejections are actionable.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("at least one restoring array is required")]
    NoRestoringArrays,
    #[error("array counts must fit in a byte: {0} restoring + {1} validating")]
    TooManyArrays(usize, usize),
    #[error("cbn has {got} entries, expected one per array ({expected})")]
    CbnLength { got: usize, expected: usize },
    #[error("r must be at most 31, got {0}")]
    SketchSelectorTooWide(u8),
    #[error("clbs[{0}] = {1} is outside the left part (width {2})")]
    StartOffsetOutOfRange(usize, u8, u8),
    #[error("clbs must be strictly increasing: clbs[{0}] = {1} does not exceed its predecessor")]
    StartOffsetsNotIncreasing(usize, u8),
    #[error(
        "efficient parts must partition the left part: lengths sum to {got}, expected {expected}"
    )]
    EfficientPartsDoNotPartition { got: u32, expected: u32 },
    #[error("cbn[{index}] = {cbn} is narrower than the array's efficient part ({ep_len})")]
    ColumnIndexTooNarrow { index: usize, cbn: u8, ep_len: u8 },
    #[error(
        "checking part of array {index} ({cp_len} bits) spills past the next efficient part ({next_ep_len} bits)"
    )]
    CheckingPartTooWide {
        index: usize,
        cp_len: u8,
        next_ep_len: u8,
    },
    #[error("g must be a nonzero power of two, got {0}")]
    RowsNotPowerOfTwo(u32),
    #[error("cbn[{0}] = {1} exceeds the 32-bit column-index limit")]
    ColumnIndexTooWide(usize, u8),
    #[error("mangle_a must be odd for the mangling to be invertible, got {0:#x}")]
    MangleNotInvertible(u32),
    #[error("cube size overflows a 64-bit bit count")]
    SizeOverflow,
    #[error("total bit count {0} is not a whole number of bytes")]
    NotByteAligned(u64),
}

impl SketchConfig {
    /// Number of restoring arrays.
    pub fn num_ra(&self) -> usize {
        self.clbs.len()
    }

    /// Number of validating arrays.
    pub fn num_va(&self) -> usize {
        self.va_seeds.len()
    }

    /// Total number of bit arrays per cardinality sketch.
    pub fn num_arrays(&self) -> usize {
        self.cbn.len()
    }

    /// Width of the left part in bits (`32 - r`).
    pub fn lp_bits(&self) -> u8 {
        32 - self.r
    }

    /// Number of cardinality sketches in the cube (`2^r`).
    pub fn num_sketches(&self) -> u32 {
        1u32 << self.r
    }

    /// Column count of array `i` (`2^cbn[i]`).
    pub fn columns(&self, i: usize) -> u64 {
        1u64 << self.cbn[i]
    }

    /// Checks every configuration rule and derives the column layout.
    pub fn validate(&self) -> Result<ColumnLayout, ConfigError> {
        let num_ra = self.num_ra();
        let num_va = self.num_va();
        if num_ra == 0 {
            return Err(ConfigError::NoRestoringArrays);
        }
        if num_ra > u8::MAX as usize || num_va > u8::MAX as usize {
            return Err(ConfigError::TooManyArrays(num_ra, num_va));
        }
        if self.cbn.len() != num_ra + num_va {
            return Err(ConfigError::CbnLength {
                got: self.cbn.len(),
                expected: num_ra + num_va,
            });
        }
        if self.r > 31 {
            return Err(ConfigError::SketchSelectorTooWide(self.r));
        }

        let layout = ColumnLayout::derive(self.lp_bits(), &self.clbs, &self.cbn[..num_ra])?;

        if self.g == 0 || !self.g.is_power_of_two() {
            return Err(ConfigError::RowsNotPowerOfTwo(self.g));
        }
        for (i, &cbn) in self.cbn.iter().enumerate() {
            if cbn > 32 {
                return Err(ConfigError::ColumnIndexTooWide(i, cbn));
            }
        }
        if self.mangle_a & 1 == 0 {
            return Err(ConfigError::MangleNotInvertible(self.mangle_a));
        }

        let total = self.checked_total_bits().ok_or(ConfigError::SizeOverflow)?;
        if total % 8 != 0 {
            return Err(ConfigError::NotByteAligned(total));
        }
        Ok(layout)
    }

    fn checked_total_bits(&self) -> Option<u64> {
        let mut cs_bits: u64 = 0;
        for &cbn in &self.cbn {
            if cbn > 32 {
                return None;
            }
            cs_bits = cs_bits.checked_add((1u64 << cbn).checked_mul(self.g as u64)?)?;
        }
        cs_bits.checked_mul(1u64 << self.r)
    }

    /// Total number of bits in a cube with this configuration.
    /// Only meaningful on a validated configuration.
    pub fn total_bits(&self) -> u64 {
        self.checked_total_bits().expect("validated config")
    }

    /// Serialized payload size in bytes.
    pub fn payload_bytes(&self) -> u64 {
        self.total_bits() / 8
    }

    /// Name of the first field on which `self` and `other` differ, if any.
    /// Used to explain refused merges.
    pub fn first_mismatch(&self, other: &SketchConfig) -> Option<&'static str> {
        if self.r != other.r {
            return Some("r");
        }
        if self.g != other.g {
            return Some("g");
        }
        if self.cbn != other.cbn {
            return Some("cbn");
        }
        if self.clbs != other.clbs {
            return Some("clbs");
        }
        if self.mangle_a != other.mangle_a {
            return Some("mangle_a");
        }
        if self.mangle_b != other.mangle_b {
            return Some("mangle_b");
        }
        if self.bv_seed != other.bv_seed {
            return Some("bv_seed");
        }
        if self.va_seeds != other.va_seeds {
            return Some("va_seeds");
        }
        None
    }
}

impl Default for SketchConfig {
    /// The standard deployment shape: 16 cardinality sketches, three
    /// restoring arrays and one validating array of 4096 columns each,
    /// 4096-bit columns (a 128 MiB cube).
    fn default() -> Self {
        SketchConfig {
            r: 4,
            g: 4096,
            cbn: vec![12, 12, 12, 12],
            clbs: vec![0, 10, 20],
            mangle_a: 0x9E37_79B1,
            mangle_b: 0x7FEB_352D,
            bv_seed: 0x846C_A68B,
            va_seeds: vec![0xB529_7A4D],
        }
    }
}
