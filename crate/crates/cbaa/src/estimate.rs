//! Cardinality math: linear counting on a bit vector, the shared-bit
//! probability of a loaded sketch, the corrected union-column estimate, the
//! hot-column zero-bit threshold, and per-sketch load estimation.
//!
//! All math is double precision. A fully loaded column (zero count 0) yields
//! an infinite sentinel rather than an error; callers decide what saturation
//! means for them.

use crate::config::SketchConfig;
use crate::cube::Cube;

/// Cap applied to the shared-bit probability so downstream formulas never
/// divide by zero: `1 - 2^-20`.
pub const MAX_EPSILON: f64 = 1.0 - 1.0 / (1 << 20) as f64;

/// Linear-counting estimate from the zero-bit count of a `g`-bit vector:
/// `-g * ln(z / g)`.
///
/// Returns `+inf` when `z` is 0 (the vector is saturated).
pub fn linear_estimate(g: u32, zero_bits: u32) -> f64 {
    debug_assert!(zero_bits <= g);
    if zero_bits == 0 {
        return f64::INFINITY;
    }
    let g = g as f64;
    -g * (zero_bits as f64 / g).ln()
}

/// Probability that a union-column bit is set when `eta` flows are projected
/// into the sketch: the product over arrays of `1 - e^(-eta / (c_i * g))`.
pub fn shared_bit_prob(eta: f64, config: &SketchConfig) -> f64 {
    debug_assert!(eta >= 0.0);
    let g = config.g as f64;
    (0..config.num_arrays())
        .map(|i| 1.0 - (-eta / (config.columns(i) as f64 * g)).exp())
        .product()
}

/// Union-column estimate corrected for bits shared with other hosts:
/// `-g * ln(Z / (g * (1 - epsilon)))`.
///
/// Reduces exactly to [`linear_estimate`] when `epsilon` is 0. Returns `+inf`
/// for a saturated column; a zero count larger than the expected noise floor
/// would go negative and is clamped to 0.
pub fn corrected_estimate(zero_bits: u32, epsilon: f64, g: u32) -> f64 {
    debug_assert!((0.0..1.0).contains(&epsilon));
    if zero_bits == 0 {
        return f64::INFINITY;
    }
    let g = g as f64;
    let estimate = -g * (zero_bits as f64 / (g * (1.0 - epsilon))).ln();
    if estimate < 0.0 {
        0.0
    } else {
        estimate
    }
}

/// Which hot-threshold expression to use. The two differ once the shared-bit
/// probability is nonzero; `Paper` is the default, `Inverted` is the direct
/// inversion of the corrected estimate at `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdFormula {
    /// `g * (1 + epsilon) * e^(-theta/g) - g * epsilon`
    #[default]
    Paper,
    /// `g * (1 - epsilon) * e^(-theta/g)`
    Inverted,
}

impl std::str::FromStr for ThresholdFormula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(ThresholdFormula::Paper),
            "inverted" => Ok(ThresholdFormula::Inverted),
            other => Err(format!(
                "unknown threshold formula `{other}` (expected paper or inverted)"
            )),
        }
    }
}

/// Zero-bit threshold equivalent to the cardinality threshold `theta`: a
/// column with at most this many zero bits plausibly hosts a super host.
/// Clamped at 0 for extremely loaded sketches.
pub fn hot_threshold(theta: u32, epsilon: f64, g: u32, formula: ThresholdFormula) -> f64 {
    debug_assert!(theta >= 1);
    debug_assert!((0.0..1.0).contains(&epsilon));
    let g = g as f64;
    let decay = (-(theta as f64) / g).exp();
    let threshold = match formula {
        ThresholdFormula::Paper => g * (1.0 + epsilon) * decay - g * epsilon,
        ThresholdFormula::Inverted => g * (1.0 - epsilon) * decay,
    };
    threshold.max(0.0)
}

/// Estimated load of one cardinality sketch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadEstimate {
    /// Estimated number of flows projected into the sketch.
    pub eta: f64,
    /// Shared-bit probability implied by `eta`, capped at [`MAX_EPSILON`].
    pub epsilon: f64,
}

/// Estimates a sketch's flow load by whole-array linear counting over the
/// first restoring array, then derives the shared-bit probability.
///
/// The cube must be quiescent (no concurrent writers).
pub fn cs_load(cube: &Cube, cs: u32) -> LoadEstimate {
    let cfg = cube.config();
    let columns = cfg.columns(0);
    let mut zero_total = 0u64;
    for col in 0..columns {
        zero_total += cube.zero_count_column(cs, 0, col as u32) as u64;
    }
    let capacity = columns as f64 * cfg.g as f64;
    let eta = if zero_total == 0 {
        f64::INFINITY
    } else {
        -capacity * (zero_total as f64 / capacity).ln()
    };
    let epsilon = shared_bit_prob(eta, cfg).min(MAX_EPSILON);
    LoadEstimate { eta, epsilon }
}
