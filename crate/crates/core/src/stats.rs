//! Approximate-MC statistics over many start points.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::Scenario;
use crate::geometry::Vec2;
use crate::optimizer::substream;
use crate::solution::Solution;
use crate::tracer::{trace, TraceMode};

/// Default share of stalk time above which a trajectory counts as MC-heavy.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `n` points uniform by area on the annulus `ε < |z - f(0)| <= D`.
pub fn sample_starts(scenario: &Scenario, n: usize, seed: u64) -> Vec<Vec2> {
    let center = scenario.path.at(0.0);
    let inner = scenario.distances.chase_trigger;
    let outer = scenario.distances.visual_range;
    let mut rng = substream(seed, &[0x7374_6172]);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        // (0, 1] keeps the radius strictly above the inner circle
        let u: f64 = 1.0 - rng.random::<f64>();
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
        let z = center + Vec2::from_polar(r, angle);
        let d = z.distance(center);
        if d > inner && d <= outer {
            out.push(z);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartResult {
    pub start: Vec2,
    /// `None` when the trace failed or had no counted stalk steps.
    pub amc_fraction: Option<f64>,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchSummary {
    pub n: usize,
    pub threshold: f64,
    /// Starts whose trace failed.
    pub failures: usize,
    /// Starts traced successfully but without any counted stalk step.
    pub without_stalk: usize,
    /// Denominator of the percentage.
    pub counted: usize,
    pub over_threshold: usize,
    pub pct_over_threshold: f64,
    pub samples: Vec<StartResult>,
}

/// Percentage of traced starts whose approximate-MC share exceeds `threshold`.
pub fn batch_amc(scenario: &Scenario, solution: &Solution, n: usize, seed: u64, threshold: f64) -> BatchSummary {
    let starts = sample_starts(scenario, n, seed);
    let samples: Vec<StartResult> = starts
        .par_iter()
        .map(|&start| match trace(scenario, solution, start, TraceMode::Deterministic) {
            Ok(traj) => StartResult { start, amc_fraction: traj.amc_fraction(), failed: false },
            Err(_) => StartResult { start, amc_fraction: None, failed: true },
        })
        .collect();
    summarize(samples, threshold)
}

pub fn summarize(samples: Vec<StartResult>, threshold: f64) -> BatchSummary {
    let failures = samples.iter().filter(|s| s.failed).count();
    let without_stalk = samples.iter().filter(|s| !s.failed && s.amc_fraction.is_none()).count();
    let fractions: Vec<f64> = samples.iter().filter_map(|s| s.amc_fraction).collect();
    let over_threshold = fractions.iter().filter(|&&f| f > threshold).count();
    let counted = fractions.len();
    let pct_over_threshold = if counted == 0 { 0.0 } else { 100.0 * over_threshold as f64 / counted as f64 };
    BatchSummary {
        n: samples.len(),
        threshold,
        failures,
        without_stalk,
        counted,
        over_threshold,
        pct_over_threshold,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_counts() {
        let mk = |f: Option<f64>, failed| StartResult { start: Vec2::ZERO, amc_fraction: f, failed };
        let s = summarize(vec![mk(Some(0.6), false), mk(Some(0.2), false), mk(None, true), mk(None, false)], 0.5);
        assert_eq!(s.failures, 1);
        assert_eq!(s.without_stalk, 1);
        assert_eq!(s.counted, 2);
        assert_eq!(s.pct_over_threshold, 50.0);
        let s = summarize(s.samples, 1.1);
        assert_eq!(s.pct_over_threshold, 0.0);
    }
}
