//! Message-size threshold learning with two-cluster k-means.
//!
//! The size of the first client message is the only signal available before
//! a request's fate is known, so the split between the two size clusters of
//! those messages becomes the simple/complex decision boundary.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{ActivityType, ContextId, RawActivityRecord};

/// Which of the two centroids a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cluster {
    Low,
    High,
}

/// Result of clustering first-message sizes.
#[derive(Debug, Clone)]
pub struct SizeClusters {
    pub c_low: f64,
    pub c_high: f64,
    /// Per-sample label, in input order.
    pub assignments: Vec<Cluster>,
    /// Assignment passes executed before the labels stabilized.
    pub iterations: u32,
    /// Final within-cluster sum of squared error.
    pub sse: f64,
    /// SSE after each centroid update, for convergence diagnostics.
    pub sse_per_iteration: Vec<f64>,
}

impl SizeClusters {
    pub fn low_count(&self) -> usize {
        self.assignments.iter().filter(|c| **c == Cluster::Low).count()
    }

    pub fn high_count(&self) -> usize {
        self.assignments.len() - self.low_count()
    }
}

/// The learned decision boundary, in bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
}

pub const DEFAULT_MAX_ITERS: u32 = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThresholdError {
    #[error("cannot cluster an empty sample set")]
    EmptySampleSet,
}

/// Pulls the size of each episode's first RECEIVE aimed at the first-tier
/// port out of one node's time-ordered raw stream. Episodes without such a
/// message contribute nothing.
pub fn extract_first_sizes(records: &[RawActivityRecord], first_tier_port: u16) -> Vec<u64> {
    // Per thread: true while inside an episode whose first-tier message has
    // not been seen yet.
    let mut awaiting: HashMap<&ContextId, bool> = HashMap::new();
    let mut sizes = Vec::new();
    for record in records {
        match record.atype {
            ActivityType::Begin => {
                awaiting.insert(&record.ctx, true);
            }
            ActivityType::End => {
                awaiting.insert(&record.ctx, false);
            }
            ActivityType::Receive => {
                let port_matches = record
                    .msg
                    .map(|m| m.dst_port == first_tier_port)
                    .unwrap_or(false);
                if port_matches {
                    if let Some(waiting @ &mut true) = awaiting.get_mut(&record.ctx) {
                        sizes.push(record.size_bytes);
                        *waiting = false;
                    }
                }
            }
            ActivityType::Send => {}
        }
    }
    sizes
}

/// Lloyd-style k-means with k = 2 on one dimension.
///
/// Centroids start at the sample minimum and maximum, each point goes to the
/// nearer centroid (ties to the low one), centroids move to their cluster
/// means, and the loop stops once assignments no longer change or `max_iters`
/// passes have run. Fully deterministic.
pub fn kmeans2(sizes: &[f64], max_iters: u32) -> Result<SizeClusters, ThresholdError> {
    if sizes.is_empty() {
        return Err(ThresholdError::EmptySampleSet);
    }
    let mut c_low = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let mut c_high = sizes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut assignments = vec![Cluster::Low; sizes.len()];
    let mut iterations = 0u32;
    let mut sse_per_iteration = Vec::new();

    while iterations < max_iters.max(1) {
        iterations += 1;
        let mut changed = iterations == 1;
        for (label, &x) in assignments.iter_mut().zip(sizes) {
            let next = if (x - c_low).abs() <= (x - c_high).abs() {
                Cluster::Low
            } else {
                Cluster::High
            };
            if *label != next {
                *label = next;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (mut sum_low, mut n_low) = (0.0f64, 0u64);
        let (mut sum_high, mut n_high) = (0.0f64, 0u64);
        for (label, &x) in assignments.iter().zip(sizes) {
            match label {
                Cluster::Low => {
                    sum_low += x;
                    n_low += 1;
                }
                Cluster::High => {
                    sum_high += x;
                    n_high += 1;
                }
            }
        }
        if n_low > 0 {
            c_low = sum_low / n_low as f64;
        }
        if n_high > 0 {
            c_high = sum_high / n_high as f64;
        }
        debug_assert!(c_low <= c_high);
        sse_per_iteration.push(sse_of(sizes, &assignments, c_low, c_high));
    }

    let sse = sse_of(sizes, &assignments, c_low, c_high);
    Ok(SizeClusters {
        c_low,
        c_high,
        assignments,
        iterations,
        sse,
        sse_per_iteration,
    })
}

fn sse_of(sizes: &[f64], assignments: &[Cluster], c_low: f64, c_high: f64) -> f64 {
    assignments
        .iter()
        .zip(sizes)
        .map(|(label, &x)| {
            let c = match label {
                Cluster::Low => c_low,
                Cluster::High => c_high,
            };
            (x - c) * (x - c)
        })
        .sum()
}

/// Midpoint of the two centroids: the nearest-centroid decision boundary.
pub fn compute_threshold(sizes: &[f64]) -> Result<Threshold, ThresholdError> {
    let clusters = kmeans2(sizes, DEFAULT_MAX_ITERS)?;
    Ok(Threshold {
        value: (clusters.c_low + clusters.c_high) / 2.0,
    })
}
