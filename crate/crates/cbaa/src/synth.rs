//! Deterministic synthetic traces with exact ground truth, for evaluation
//! runs where real traffic is unavailable.

use crate::metrics::GroundTruth;
use crate::trace::TraceRecord;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::{HashMap, HashSet};

/// A class of inner hosts with cardinalities drawn uniformly from a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostClass {
    pub hosts: u32,
    pub min_cardinality: u32,
    pub max_cardinality: u32,
}

impl HostClass {
    pub fn new(hosts: u32, min_cardinality: u32, max_cardinality: u32) -> Self {
        assert!(min_cardinality >= 1 && min_cardinality <= max_cardinality);
        HostClass {
            hosts,
            min_cardinality,
            max_cardinality,
        }
    }
}

/// Recipe for a synthetic trace. A spec and its seed fully determine the
/// emitted records and the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Ordinary hosts.
    pub background: HostClass,
    /// Host classes planted to exceed the detection threshold.
    pub planted: Vec<HostClass>,
    /// Mean packets per flow (>= 1); the excess over one packet is Poisson.
    pub duplication: f64,
    pub seed: u64,
}

/// Generates the trace and its exact ground truth.
///
/// All inner addresses are distinct, and each host contacts exactly its drawn
/// number of distinct opposite addresses, so the returned [`GroundTruth`] is
/// exact by construction. Records carry no timestamps and are emitted in a
/// seeded shuffle order.
pub fn synth_trace(spec: &SynthSpec) -> (Vec<TraceRecord>, GroundTruth) {
    assert!(spec.duplication >= 1.0, "duplication is packets per flow");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let classes: Vec<HostClass> = std::iter::once(spec.background)
        .chain(spec.planted.iter().copied())
        .collect();
    let total_hosts: u64 = classes.iter().map(|c| c.hosts as u64).sum();

    let mut inner_seen = HashSet::with_capacity(total_hosts as usize);
    let mut cardinalities = HashMap::with_capacity(total_hosts as usize);
    let mut records = Vec::new();
    let extra_packets = (spec.duplication > 1.0)
        .then(|| Poisson::new(spec.duplication - 1.0).expect("positive mean"));

    for class in &classes {
        for _ in 0..class.hosts {
            let iip = loop {
                let candidate: u32 = rng.gen();
                if inner_seen.insert(candidate) {
                    break candidate;
                }
            };
            let cardinality = rng.gen_range(class.min_cardinality..=class.max_cardinality);
            cardinalities.insert(iip, cardinality as u64);

            let mut opposites = HashSet::with_capacity(cardinality as usize);
            while opposites.len() < cardinality as usize {
                let oip: u32 = rng.gen();
                if !opposites.insert(oip) {
                    continue;
                }
                let copies = 1 + extra_packets
                    .as_ref()
                    .map_or(0, |p| p.sample(&mut rng) as u64);
                for _ in 0..copies {
                    records.push(TraceRecord {
                        iip,
                        oip,
                        ts: None,
                    });
                }
            }
        }
    }

    records.shuffle(&mut rng);
    (records, GroundTruth::from_exact_counts(cardinalities))
}
