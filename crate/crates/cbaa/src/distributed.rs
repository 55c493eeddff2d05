//! The multi-router deployment surface: a bit-exact sketch file format, trace
//! partitioning policies, and the global merge that combines per-router
//! sketches into one cube.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic  "CBA1"                      4 bytes
//! version u16 = 1
//! r       u8
//! num_ra  u8
//! num_va  u8
//! g       u32
//! cbn     u8  x (num_ra + num_va)
//! clbs    u8  x num_ra
//! mangle_a u32
//! mangle_b u32
//! bv_seed  u32
//! va_seeds u32 x num_va
//! payload length u64 (bytes)
//! payload (raw cube bits, bit 8k+j = bit j of byte k, LSB first)
//! ```
//!
//! The full configuration, seeds included, travels in the header so sketches
//! of different families can never be silently merged.

use crate::config::{ConfigError, SketchConfig};
use crate::cube::Cube;
use crate::mapping::mix32;
use crate::update::IpPair;
use std::io::{self, Read, Write};
use std::str::FromStr;
use std::sync::atomic::Ordering;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CBA1";
pub const VERSION: u16 = 1;

/// Failure to parse a sketch file.
#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}, expected \"CBA1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}, expected {VERSION}")]
    BadVersion(u16),
    #[error("truncated header while reading {0}")]
    TruncatedHeader(&'static str),
    #[error("header config rejected: {0}")]
    Config(#[from] ConfigError),
    #[error("payload length field is {got} bytes but the config implies {expected}")]
    PayloadLengthMismatch { got: u64, expected: u64 },
    #[error("payload truncated: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: u64, got: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Serializes a quiescent cube. The output is byte-identical for equal cubes.
pub fn write_cube<W: Write>(cube: &Cube, mut out: W) -> io::Result<()> {
    let cfg = cube.config();
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[cfg.r, cfg.num_ra() as u8, cfg.num_va() as u8])?;
    out.write_all(&cfg.g.to_le_bytes())?;
    out.write_all(&cfg.cbn)?;
    out.write_all(&cfg.clbs)?;
    out.write_all(&cfg.mangle_a.to_le_bytes())?;
    out.write_all(&cfg.mangle_b.to_le_bytes())?;
    out.write_all(&cfg.bv_seed.to_le_bytes())?;
    for seed in &cfg.va_seeds {
        out.write_all(&seed.to_le_bytes())?;
    }
    let payload_len = cube.payload_bytes();
    out.write_all(&payload_len.to_le_bytes())?;

    // Stream the words out in chunks; the final word may be partial.
    let mut remaining = payload_len as usize;
    let mut chunk = Vec::with_capacity(8192);
    for word in cube.words() {
        let bytes = word.load(Ordering::Relaxed).to_le_bytes();
        let take = remaining.min(8);
        chunk.extend_from_slice(&bytes[..take]);
        remaining -= take;
        if chunk.len() >= 8192 {
            out.write_all(&chunk)?;
            chunk.clear();
        }
    }
    out.write_all(&chunk)?;
    debug_assert_eq!(remaining, 0);
    Ok(())
}

/// Serializes a cube into a byte vector.
pub fn cube_to_bytes(cube: &Cube) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(cube.payload_bytes() as usize + 64);
    write_cube(cube, &mut bytes).expect("writing to a Vec cannot fail");
    bytes
}

fn read_field<R: Read>(input: &mut R, buf: &mut [u8], field: &'static str) -> Result<(), WireError> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            WireError::TruncatedHeader(field)
        } else {
            WireError::Io(e)
        }
    })
}

fn read_u32<R: Read>(input: &mut R, field: &'static str) -> Result<u32, WireError> {
    let mut buf = [0u8; 4];
    read_field(input, &mut buf, field)?;
    Ok(u32::from_le_bytes(buf))
}

/// Parses a sketch file, re-validating the embedded configuration.
pub fn read_cube<R: Read>(mut input: R) -> Result<Cube, WireError> {
    let mut magic = [0u8; 4];
    read_field(&mut input, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let mut version = [0u8; 2];
    read_field(&mut input, &mut version, "version")?;
    let version = u16::from_le_bytes(version);
    if version != VERSION {
        return Err(WireError::BadVersion(version));
    }

    let mut counts = [0u8; 3];
    read_field(&mut input, &mut counts, "array counts")?;
    let (r, num_ra, num_va) = (counts[0], counts[1] as usize, counts[2] as usize);
    let g = read_u32(&mut input, "g")?;

    let mut cbn = vec![0u8; num_ra + num_va];
    read_field(&mut input, &mut cbn, "cbn")?;
    let mut clbs = vec![0u8; num_ra];
    read_field(&mut input, &mut clbs, "clbs")?;
    let mangle_a = read_u32(&mut input, "mangle_a")?;
    let mangle_b = read_u32(&mut input, "mangle_b")?;
    let bv_seed = read_u32(&mut input, "bv_seed")?;
    let mut va_seeds = Vec::with_capacity(num_va);
    for _ in 0..num_va {
        va_seeds.push(read_u32(&mut input, "va_seeds")?);
    }

    let config = SketchConfig {
        r,
        g,
        cbn,
        clbs,
        mangle_a,
        mangle_b,
        bv_seed,
        va_seeds,
    };
    config.validate()?;

    let mut len = [0u8; 8];
    read_field(&mut input, &mut len, "payload length")?;
    let payload_len = u64::from_le_bytes(len);
    if payload_len != config.payload_bytes() {
        return Err(WireError::PayloadLengthMismatch {
            got: payload_len,
            expected: config.payload_bytes(),
        });
    }

    let total_words = config.total_bits().div_ceil(64) as usize;
    let mut words = Vec::with_capacity(total_words);
    let mut remaining = payload_len;
    let mut buf = [0u8; 8192];
    let mut tail: Vec<u8> = Vec::new();
    while remaining > 0 {
        let want = remaining.min(buf.len() as u64) as usize;
        let got = read_full(&mut input, &mut buf[..want])?;
        if got < want {
            return Err(WireError::TruncatedPayload {
                expected: payload_len,
                got: payload_len - remaining + got as u64,
            });
        }
        remaining -= want as u64;
        tail.extend_from_slice(&buf[..want]);
        let whole = tail.len() / 8 * 8;
        for chunk in tail[..whole].chunks_exact(8) {
            words.push(u64::from_le_bytes(chunk.try_into().unwrap()));
        }
        tail.drain(..whole);
    }
    if !tail.is_empty() {
        let mut last = [0u8; 8];
        last[..tail.len()].copy_from_slice(&tail);
        words.push(u64::from_le_bytes(last));
    }
    debug_assert_eq!(words.len(), total_words);

    Ok(Cube::from_words(config, words).expect("config already validated"))
}

fn read_full<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<usize, WireError> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(WireError::Io(e)),
        }
    }
    Ok(filled)
}

/// Parses a sketch from an in-memory byte slice.
pub fn cube_from_bytes(bytes: &[u8]) -> Result<Cube, WireError> {
    read_cube(bytes)
}

/// How a trace is split across simulated routers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionPolicy {
    /// Same (inner, outer) pair always lands on the same router; one inner
    /// host's flows spread over many routers.
    HashByPair,
    /// All of an inner host's traffic lands on one router.
    HashByInner,
    /// Pairs dealt out in arrival order.
    RoundRobin,
}

impl PartitionPolicy {
    pub const ALL: [PartitionPolicy; 3] = [
        PartitionPolicy::HashByPair,
        PartitionPolicy::HashByInner,
        PartitionPolicy::RoundRobin,
    ];
}

impl FromStr for PartitionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash-by-pair" => Ok(PartitionPolicy::HashByPair),
            "hash-by-inner" => Ok(PartitionPolicy::HashByInner),
            "round-robin" => Ok(PartitionPolicy::RoundRobin),
            other => Err(format!(
                "unknown policy `{other}` (expected hash-by-pair, hash-by-inner, or round-robin)"
            )),
        }
    }
}

impl std::fmt::Display for PartitionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PartitionPolicy::HashByPair => "hash-by-pair",
            PartitionPolicy::HashByInner => "hash-by-inner",
            PartitionPolicy::RoundRobin => "round-robin",
        })
    }
}

/// Assigns every pair to exactly one of `routers` sequences. Hash policies
/// are deterministic functions of the addressed fields.
pub fn partition_trace(
    pairs: &[IpPair],
    policy: PartitionPolicy,
    routers: usize,
) -> Vec<Vec<IpPair>> {
    assert!(routers >= 1, "at least one router");
    let mut out = vec![Vec::new(); routers];
    for (i, &pair) in pairs.iter().enumerate() {
        let router = match policy {
            PartitionPolicy::HashByPair => mix32(pair.iip ^ mix32(pair.oip)) as usize % routers,
            PartitionPolicy::HashByInner => mix32(pair.iip) as usize % routers,
            PartitionPolicy::RoundRobin => i % routers,
        };
        out[router].push(pair);
    }
    out
}

/// Failure to merge a set of per-router sketches.
#[derive(Debug, Error)]
pub enum GlobalMergeError {
    #[error("no sketches to merge")]
    Empty,
    #[error("sketch {index} differs from sketch 0 on field `{field}`")]
    ConfigMismatch { index: usize, field: &'static str },
    #[error("sketch {index}: {source}")]
    Parse { index: usize, source: WireError },
}

/// Folds a set of cubes into one by bitwise OR. All inputs must share one
/// configuration; the error names the offending input and field.
pub fn global_merge(cubes: impl IntoIterator<Item = Cube>) -> Result<Cube, GlobalMergeError> {
    let mut iter = cubes.into_iter();
    let mut merged = iter.next().ok_or(GlobalMergeError::Empty)?;
    for (i, cube) in iter.enumerate() {
        if let Some(field) = merged.config().first_mismatch(cube.config()) {
            return Err(GlobalMergeError::ConfigMismatch {
                index: i + 1,
                field,
            });
        }
        merged.merge_from(&cube).expect("configs match");
    }
    Ok(merged)
}

/// Parses and merges serialized sketches, as the global server does with the
/// files each local server sends.
pub fn global_merge_bytes<'a>(
    files: impl IntoIterator<Item = &'a [u8]>,
) -> Result<Cube, GlobalMergeError> {
    let mut merged: Option<Cube> = None;
    for (index, bytes) in files.into_iter().enumerate() {
        let cube = cube_from_bytes(bytes).map_err(|source| GlobalMergeError::Parse { index, source })?;
        match &mut merged {
            None => merged = Some(cube),
            Some(acc) => {
                if let Some(field) = acc.config().first_mismatch(cube.config()) {
                    return Err(GlobalMergeError::ConfigMismatch { index, field });
                }
                acc.merge_from(&cube).expect("configs match");
            }
        }
    }
    merged.ok_or(GlobalMergeError::Empty)
}
