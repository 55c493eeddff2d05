//! Shared helpers for the crate's tests.

use crate::config::SketchConfig;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small but structurally faithful config: 4 sketches, unequal column counts,
/// nonzero checking parts on two of the three restoring arrays. 256 KiB cube.
pub(crate) fn small_config() -> SketchConfig {
    SketchConfig {
        r: 2,
        g: 64,
        cbn: vec![12, 11, 10, 10],
        clbs: vec![0, 10, 20],
        mangle_a: 0x9E37_79B1,
        mangle_b: 0x1234_5678,
        bv_seed: 0xCAFE_F00D,
        va_seeds: vec![0x0BAD_5EED],
    }
}

/// Config with sub-word columns (g = 16), exercising the packed-column path.
pub(crate) fn narrow_rows_config() -> SketchConfig {
    SketchConfig {
        g: 16,
        ..small_config()
    }
}

/// Large enough columns (g = 1024) for recovery statistics to behave, small
/// enough that tests stay fast. Pair with theta = 256. 4 MiB cube.
pub(crate) fn medium_config() -> SketchConfig {
    SketchConfig {
        g: 1024,
        ..small_config()
    }
}
