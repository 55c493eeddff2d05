//! Ground truth and detection scoring: exact per-host cardinalities from a
//! trace, and the missed/spurious ratios used to grade a detection run.

use crate::recover::SuperHostRecord;
use crate::update::IpPair;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// Exact per-inner-host distinct-opposite counts for one trace window.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    cardinalities: HashMap<u32, u64>,
    flow_count: u64,
}

impl GroundTruth {
    /// Computes exact cardinalities by deduplicating the trace's pairs.
    /// Permutation- and duplication-invariant.
    pub fn from_pairs(pairs: impl IntoIterator<Item = IpPair>) -> GroundTruth {
        let mut flows: Vec<(u32, u32)> = pairs.into_iter().map(|p| (p.iip, p.oip)).collect();
        flows.sort_unstable();
        flows.dedup();
        let mut cardinalities = HashMap::new();
        for (iip, _) in &flows {
            *cardinalities.entry(*iip).or_insert(0u64) += 1;
        }
        GroundTruth {
            flow_count: flows.len() as u64,
            cardinalities,
        }
    }

    /// Builds ground truth from already-exact counts (e.g. a generator plan).
    pub fn from_exact_counts(cardinalities: HashMap<u32, u64>) -> GroundTruth {
        let flow_count = cardinalities.values().sum();
        GroundTruth {
            cardinalities,
            flow_count,
        }
    }

    /// Exact cardinality of a host; 0 if it never appeared.
    pub fn cardinality(&self, iip: u32) -> u64 {
        self.cardinalities.get(&iip).copied().unwrap_or(0)
    }

    /// Total number of distinct flows (the sum of all cardinalities).
    pub fn flow_count(&self) -> u64 {
        self.flow_count
    }

    /// Number of distinct inner hosts seen.
    pub fn host_count(&self) -> usize {
        self.cardinalities.len()
    }

    /// Hosts with cardinality at least `theta`, sorted by descending
    /// cardinality, ties by ascending address.
    pub fn super_hosts(&self, theta: u32) -> Vec<(u32, u64)> {
        let mut hosts: Vec<(u32, u64)> = self
            .cardinalities
            .iter()
            .filter(|(_, &card)| card >= theta as u64)
            .map(|(&ip, &card)| (ip, card))
            .collect();
        hosts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        hosts
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.cardinalities.iter().map(|(&ip, &card)| (ip, card))
    }
}

/// Detection accuracy relative to ground truth.
///
/// The ratios follow the convention that both the missed and the spurious
/// count are normalized by the number of true super hosts, and the total
/// false ratio is their sum. A detected host whose true cardinality is
/// exactly `theta` is simultaneously a true super host and, by the literal
/// spurious-set definition (`<= theta`), a spurious detection; `boundary`
/// counts those occurrences so reports can flag them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// True super hosts at `theta`.
    pub truth_count: u64,
    /// Distinct detected hosts.
    pub detected_count: u64,
    /// True super hosts that were not detected.
    pub missed: u64,
    /// Detected hosts with true cardinality `<= theta`.
    pub spurious: u64,
    /// Detected hosts with true cardinality exactly `theta`.
    pub boundary: u64,
    /// `missed / truth_count`.
    pub fnr: f64,
    /// `spurious / truth_count`.
    pub fpr: f64,
    /// `fnr + fpr`.
    pub ftr: f64,
    /// Conventional precision (`detected true super hosts / detected`);
    /// not part of the ratio family above, reported for convenience.
    /// `None` when nothing was detected.
    pub precision: Option<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no host reaches cardinality {0}; the ratios are undefined")]
    NoTrueSuperHosts(u32),
}

/// Scores a detection run against exact ground truth.
pub fn score_detection(
    detected: &[SuperHostRecord],
    truth: &GroundTruth,
    theta: u32,
) -> Result<MetricsReport, MetricsError> {
    let detected_set: BTreeSet<u32> = detected.iter().map(|r| r.ip).collect();
    let truth_set: BTreeSet<u32> = truth
        .iter()
        .filter(|&(_, card)| card >= theta as u64)
        .map(|(ip, _)| ip)
        .collect();

    let truth_count = truth_set.len() as u64;
    if truth_count == 0 {
        return Err(MetricsError::NoTrueSuperHosts(theta));
    }

    let missed = truth_set.difference(&detected_set).count() as u64;
    let spurious = detected_set
        .iter()
        .filter(|&&ip| truth.cardinality(ip) <= theta as u64)
        .count() as u64;
    let boundary = detected_set
        .iter()
        .filter(|&&ip| truth.cardinality(ip) == theta as u64)
        .count() as u64;

    let fnr = missed as f64 / truth_count as f64;
    let fpr = spurious as f64 / truth_count as f64;
    let true_detections = detected_set.intersection(&truth_set).count() as u64;
    let precision = if detected_set.is_empty() {
        None
    } else {
        Some(true_detections as f64 / detected_set.len() as f64)
    };

    Ok(MetricsReport {
        truth_count,
        detected_count: detected_set.len() as u64,
        missed,
        spurious,
        boundary,
        fnr,
        fpr,
        ftr: fnr + fpr,
        precision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn record(ip: u32) -> SuperHostRecord {
        SuperHostRecord {
            ip,
            estimate: 0.0,
            cs: 0,
        }
    }

    fn truth_with(counts: &[(u32, u64)]) -> GroundTruth {
        GroundTruth::from_exact_counts(counts.iter().copied().collect())
    }

    #[test]
    fn empty_trace_truth() {
        let truth = GroundTruth::from_pairs(std::iter::empty());
        assert_eq!(truth.host_count(), 0);
        assert_eq!(truth.flow_count(), 0);
        assert_eq!(truth.cardinality(1), 0);
    }

    #[test]
    fn duplicates_count_once() {
        let pair = IpPair { iip: 10, oip: 20 };
        let truth = GroundTruth::from_pairs(vec![pair; 7]);
        assert_eq!(truth.cardinality(10), 1);
        assert_eq!(truth.flow_count(), 1);
    }

    #[test]
    fn truth_is_permutation_and_duplication_invariant() {
        let mut rng = rng(1000);
        let mut pairs: Vec<IpPair> = (0..5000)
            .map(|_| IpPair {
                iip: rng.gen::<u32>() % 50,
                oip: rng.gen::<u32>() % 2000,
            })
            .collect();
        let base = GroundTruth::from_pairs(pairs.iter().copied());

        pairs.shuffle(&mut rng);
        let mut doubled = pairs.clone();
        doubled.extend_from_slice(&pairs);
        assert_eq!(GroundTruth::from_pairs(doubled), base);
        assert_eq!(
            base.flow_count(),
            base.iter().map(|(_, c)| c).sum::<u64>()
        );
    }

    #[test]
    fn perfect_detection_scores_zero() {
        let truth = truth_with(&[(1, 200), (2, 300), (3, 50)]);
        let detected = [record(1), record(2)];
        let report = score_detection(&detected, &truth, 100).unwrap();
        assert_eq!(report.truth_count, 2);
        assert_eq!((report.fnr, report.fpr, report.ftr), (0.0, 0.0, 0.0));
        assert_eq!(report.precision, Some(1.0));
    }

    #[test]
    fn missing_everything_scores_full_fnr() {
        let counts: Vec<(u32, u64)> = (0..10).map(|i| (i, 500)).collect();
        let truth = truth_with(&counts);
        let report = score_detection(&[], &truth, 100).unwrap();
        assert_eq!(report.fnr, 1.0);
        assert_eq!(report.fpr, 0.0);
        assert_eq!(report.ftr, 1.0);
        assert_eq!(report.precision, None);
    }

    #[test]
    fn hand_built_ratio_fixture() {
        // 4 true super hosts; detection misses one and adds two
        // below-threshold hosts: fnr = 1/4, fpr = 2/4.
        let truth = truth_with(&[
            (1, 200),
            (2, 200),
            (3, 200),
            (4, 200),
            (90, 10),
            (91, 10),
        ]);
        let detected = [record(1), record(2), record(3), record(90), record(91)];
        let report = score_detection(&detected, &truth, 100).unwrap();
        assert_eq!(report.truth_count, 4);
        assert_eq!(report.missed, 1);
        assert_eq!(report.spurious, 2);
        assert_eq!(report.fnr, 0.25);
        assert_eq!(report.fpr, 0.5);
        assert_eq!(report.ftr, 0.75);
        assert_eq!(report.precision, Some(0.6));
    }

    #[test]
    fn boundary_hosts_are_flagged() {
        // Cardinality exactly theta: a true super host that the literal
        // spurious definition also counts.
        let truth = truth_with(&[(1, 100), (2, 500)]);
        let detected = [record(1), record(2)];
        let report = score_detection(&detected, &truth, 100).unwrap();
        assert_eq!(report.truth_count, 2);
        assert_eq!(report.missed, 0);
        assert_eq!(report.spurious, 1);
        assert_eq!(report.boundary, 1);
        assert_eq!(report.fnr, 0.0);
        assert_eq!(report.fpr, 0.5);
    }

    #[test]
    fn no_true_super_hosts_is_reported_not_divided() {
        let truth = truth_with(&[(1, 10)]);
        assert_eq!(
            score_detection(&[record(1)], &truth, 100),
            Err(MetricsError::NoTrueSuperHosts(100))
        );
    }

    #[test]
    fn never_seen_detection_is_spurious() {
        let truth = truth_with(&[(1, 500)]);
        let detected = [record(1), record(99)];
        let report = score_detection(&detected, &truth, 100).unwrap();
        assert_eq!(report.spurious, 1);
        assert_eq!(report.fpr, 1.0);
    }

    #[test]
    fn super_host_listing_is_sorted() {
        let truth = truth_with(&[(5, 300), (1, 300), (2, 800), (9, 50)]);
        assert_eq!(
            truth.super_hosts(100),
            vec![(2, 800), (1, 300), (5, 300)]
        );
    }
}
