//! Super-host detection on a mergeable cube of bit arrays.
//!
//! A super host is an inner-network address that contacts at least `theta`
//! distinct outer addresses within a time window. This crate records
//! (inner, outer) address pairs into a fixed-size bit-array cube, merges
//! cubes built independently at many vantage points by bitwise OR, and
//! recovers the super hosts — original addresses plus corrected cardinality
//! estimates — from the merged cube alone, with no candidate address list.
//!
//! The pieces:
//!
//! * [`config`] — the structural parameters fixing a sketch family;
//! * [`cube`] — bit storage and the primitive operations (set, zero count,
//!   column union, merge);
//! * [`mapping`] — reversible address mangling and the column-index
//!   arithmetic that makes recovery possible;
//! * [`update`] — turning a pair stream into bit sets, serially or on many
//!   workers;
//! * [`estimate`] — linear counting and its shared-bit correction;
//! * [`recover`] — hot-column scan, tuple checking, and host reconstruction;
//! * [`distributed`] — the sketch file format, trace partitioning, and the
//!   global merge;
//! * [`metrics`] — exact ground truth and detection scoring;
//! * [`trace`] / [`synth`] — trace ingestion, emission, windowing, and
//!   deterministic synthetic workloads.

pub mod config;
pub mod cube;
pub mod distributed;
pub mod estimate;
pub mod mapping;
pub mod metrics;
pub mod recover;
pub mod synth;
pub mod trace;
pub mod update;

#[cfg(test)]
pub(crate) mod testutil;

pub use config::{ConfigError, SketchConfig};
pub use cube::{Cube, MergeError, UnionColumn};
pub use distributed::{GlobalMergeError, PartitionPolicy, WireError};
pub use estimate::{LoadEstimate, ThresholdFormula};
pub use mapping::{mix32, ColumnLayout, IpParts, MangledIp};
pub use metrics::{GroundTruth, MetricsError, MetricsReport};
pub use recover::{DetectionReport, RecoverOptions, SuperHostRecord, TupleOverflow};
pub use synth::{HostClass, SynthSpec};
pub use trace::{TraceError, TraceFormat, TraceRecord};
pub use update::{IpPair, UpdateOptions};
