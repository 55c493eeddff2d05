//! Pure address arithmetic: reversible mangling, right/left part split,
//! restoring-array column extraction, validating-array and row hashing, and
//! left-part reconstruction from a column tuple.
//!
//! Bit conventions are fixed so that independently built sketches are
//! mergeable and byte-identical:
//!
//! * Left-part offsets count from the most significant left-part bit, so
//!   "extract `cbn` bits from offset `clbs`" is a contiguous window of the
//!   left part read as a bit string, wrapping from the last offset back to
//!   offset zero.
//! * The bit at offset `clbs[i]` becomes the most significant bit of the
//!   column index.
//! * Column indexes split into an efficient part (high `ep_len` bits, the
//!   bits owned by this array) and a checking part (low `cp_len` bits,
//!   duplicating the head of the next array's efficient part).

use crate::config::{ConfigError, SketchConfig};

/// The fixed 32-bit avalanche mix used by every seeded hash in the sketch.
/// Pinned so sketches built by different implementations agree bit for bit.
pub fn mix32(x: u32) -> u32 {
    let mut h = x;
    h ^= h >> 16;
    h = h.wrapping_mul(0x045D_9F3B);
    h ^= h >> 16;
    h = h.wrapping_mul(0x045D_9F3B);
    h ^= h >> 16;
    h
}

/// Multiplicative inverse of an odd `a` modulo 2^32 (Newton iteration).
pub(crate) fn mul_inverse(a: u32) -> u32 {
    debug_assert!(a & 1 == 1, "only odd multipliers are invertible");
    let mut inv = a; // correct mod 2^3; each step doubles the valid bits
    for _ in 0..4 {
        inv = inv.wrapping_mul(2u32.wrapping_sub(a.wrapping_mul(inv)));
    }
    inv
}

/// An IP address after the mangling bijection. Kept as a distinct type so a
/// raw address cannot be fed where a mangled one is expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MangledIp(pub u32);

/// Split of a mangled address: `rp` selects the cardinality sketch, `lp` is
/// everything the restoring arrays must be able to reconstruct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpParts {
    /// Right part: the low `r` bits.
    pub rp: u32,
    /// Left part: the high `32 - r` bits.
    pub lp: u32,
}

impl SketchConfig {
    /// Mangles an address: `mangle_a * ip + mangle_b (mod 2^32)`.
    pub fn mangle(&self, ip: u32) -> MangledIp {
        MangledIp(self.mangle_a.wrapping_mul(ip).wrapping_add(self.mangle_b))
    }

    /// Inverts [`SketchConfig::mangle`].
    pub fn unmangle(&self, m: MangledIp) -> u32 {
        mul_inverse(self.mangle_a).wrapping_mul(m.0.wrapping_sub(self.mangle_b))
    }

    /// Splits a mangled address into right and left parts.
    pub fn split_ip(&self, m: MangledIp) -> IpParts {
        IpParts {
            rp: m.0 & ((1u32 << self.r) - 1),
            lp: m.0 >> self.r,
        }
    }

    /// Reassembles a mangled address from its parts: `(lp << r) | rp`.
    pub fn combine_parts(&self, lp: u32, rp: u32) -> MangledIp {
        debug_assert!((rp as u64) < (1u64 << self.r));
        MangledIp((lp << self.r) | rp)
    }

    /// Column index of validating array `j` for a left part.
    pub fn va_column_index(&self, lp: u32, j: usize) -> u32 {
        debug_assert!(j < self.num_va());
        let cbn = self.cbn[self.num_ra() + j] as u32;
        (mix32(lp ^ self.va_seeds[j]) as u64 & ((1u64 << cbn) - 1)) as u32
    }

    /// Row selected by an opposite address (callers pass the mangled form).
    pub fn row_index(&self, oip: MangledIp) -> u32 {
        mix32(oip.0 ^ self.bv_seed) & (self.g - 1)
    }
}

/// Derived per-restoring-array extraction geometry. Only depends on the
/// left-part width, the start offsets, and the restoring-array index widths,
/// so tests can instantiate narrow analogues directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    lp_bits: u8,
    clbs: Vec<u8>,
    cbn: Vec<u8>,
    ep_len: Vec<u8>,
    cp_len: Vec<u8>,
}

impl ColumnLayout {
    /// Derives the efficient/checking split from start offsets and index
    /// widths, validating every layout rule.
    pub fn derive(lp_bits: u8, clbs: &[u8], cbn: &[u8]) -> Result<Self, ConfigError> {
        assert!(
            (1..=32).contains(&lp_bits),
            "left part must be 1..=32 bits wide"
        );
        assert_eq!(clbs.len(), cbn.len());
        let n = clbs.len();
        if n == 0 {
            return Err(ConfigError::NoRestoringArrays);
        }
        for (i, &off) in clbs.iter().enumerate() {
            if off >= lp_bits {
                return Err(ConfigError::StartOffsetOutOfRange(i, off, lp_bits));
            }
            if i > 0 && off <= clbs[i - 1] {
                return Err(ConfigError::StartOffsetsNotIncreasing(i, off));
            }
        }

        let mut ep_len = vec![0u8; n];
        for i in 0..n {
            let next = clbs[(i + 1) % n] as u32;
            let cur = clbs[i] as u32;
            ep_len[i] = ((next + lp_bits as u32 - cur) % lp_bits as u32) as u8;
        }
        let covered: u32 = ep_len.iter().map(|&e| e as u32).sum();
        if covered != lp_bits as u32 {
            return Err(ConfigError::EfficientPartsDoNotPartition {
                got: covered,
                expected: lp_bits as u32,
            });
        }

        let mut cp_len = vec![0u8; n];
        for i in 0..n {
            if cbn[i] < ep_len[i] {
                return Err(ConfigError::ColumnIndexTooNarrow {
                    index: i,
                    cbn: cbn[i],
                    ep_len: ep_len[i],
                });
            }
            cp_len[i] = cbn[i] - ep_len[i];
            let next_ep = ep_len[(i + 1) % n];
            if cp_len[i] > next_ep {
                return Err(ConfigError::CheckingPartTooWide {
                    index: i,
                    cp_len: cp_len[i],
                    next_ep_len: next_ep,
                });
            }
        }

        Ok(ColumnLayout {
            lp_bits,
            clbs: clbs.to_vec(),
            cbn: cbn.to_vec(),
            ep_len,
            cp_len,
        })
    }

    pub fn lp_bits(&self) -> u8 {
        self.lp_bits
    }

    pub fn num_restoring(&self) -> usize {
        self.clbs.len()
    }

    /// Efficient-part length per restoring array.
    pub fn ep_len(&self) -> &[u8] {
        &self.ep_len
    }

    /// Checking-part length per restoring array.
    pub fn cp_len(&self) -> &[u8] {
        &self.cp_len
    }

    pub fn clbs(&self) -> &[u8] {
        &self.clbs
    }

    /// Column index of restoring array `i`: the `cbn[i]`-bit window of the
    /// left part starting at offset `clbs[i]`, wrapping past the end.
    pub fn column_index(&self, lp: u32, i: usize) -> u32 {
        self.window(lp, self.clbs[i], self.cbn[i])
    }

    /// All restoring-array column indexes of a left part.
    pub fn column_tuple(&self, lp: u32) -> Vec<u32> {
        (0..self.num_restoring())
            .map(|i| self.column_index(lp, i))
            .collect()
    }

    /// Reconstructs the left part encoded by a column tuple.
    ///
    /// Returns `None` when the tuple is inconsistent, i.e. some column's
    /// checking part does not match the head of the next column's efficient
    /// part — the filter that rejects tuples not produced by a single
    /// address.
    pub fn lp_from_tuple(&self, cols: &[u32]) -> Option<u32> {
        let n = self.num_restoring();
        assert_eq!(cols.len(), n, "one column index per restoring array");

        for (i, &col) in cols.iter().enumerate() {
            let cp = col as u64 & low_mask(self.cp_len[i]);
            let next = (i + 1) % n;
            let ep_head = cols[next] as u64 >> (self.cbn[next] - self.cp_len[i]);
            if cp != ep_head {
                return None;
            }
        }

        let mut lp = 0u32;
        let mut seen = 0u64;
        for (i, &col) in cols.iter().enumerate() {
            let ep = col >> self.cp_len[i];
            self.place_ep(ep, self.clbs[i], self.ep_len[i], &mut lp, &mut seen);
        }
        debug_assert_eq!(seen, low_mask(self.lp_bits), "efficient parts cover LP");
        Some(lp)
    }

    fn window(&self, lp: u32, start: u8, len: u8) -> u32 {
        if len == 0 {
            return 0;
        }
        let bits = self.lp_bits as u32;
        let (start, len) = (start as u32, len as u32);
        debug_assert!(start < bits && len <= bits);
        if start + len <= bits {
            ((lp as u64 >> (bits - start - len)) & low_mask(len as u8)) as u32
        } else {
            let head_len = bits - start; // low bits of lp
            let tail_len = len - head_len; // wraps to the high end
            let head = lp & low_mask(head_len as u8) as u32;
            let tail = lp >> (bits - tail_len);
            (head << tail_len) | tail
        }
    }

    /// Inverse of `window` restricted to an efficient part: writes `value`
    /// into the offsets `[start, start + len)` of the left part under
    /// construction, tracking coverage to assert the parts never overlap.
    fn place_ep(&self, value: u32, start: u8, len: u8, lp: &mut u32, seen: &mut u64) {
        if len == 0 {
            return;
        }
        let bits = self.lp_bits as u32;
        let (start, len) = (start as u32, len as u32);
        let cover = if start + len <= bits {
            let shift = bits - start - len;
            *lp |= value << shift;
            low_mask(len as u8) << shift
        } else {
            let head_len = bits - start;
            let tail_len = len - head_len;
            *lp |= value >> tail_len;
            *lp |= (value & low_mask(tail_len as u8) as u32) << (bits - tail_len);
            low_mask(head_len as u8) | (low_mask(tail_len as u8) << (bits - tail_len))
        };
        debug_assert_eq!(*seen & cover, 0, "efficient parts overlap");
        *seen |= cover;
    }
}

fn low_mask(len: u8) -> u64 {
    debug_assert!(len <= 32);
    (1u64 << len) - 1
}
