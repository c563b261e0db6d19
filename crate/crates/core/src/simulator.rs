//! Monte-Carlo rollouts that check the value functions independently.
//!
//! Escape times are drawn from the non-homogeneous process by thinning a
//! homogeneous process of rate `A`, which bounds the escape rate everywhere.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::environment::Scenario;
use crate::geometry::Vec2;
use crate::optimizer::substream;
use crate::solution::Solution;
use crate::tracer::{trace, Phase, TraceError, TraceMode, Trajectory};

/// A piece of path with constant escape rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSegment {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

/// Escape-rate segments of the pre-switch part of a trajectory, with the
/// rate frozen at each step's start.
pub fn rate_segments(scenario: &Scenario, traj: &Trajectory) -> Vec<RateSegment> {
    let escape = scenario.escape_model();
    let focal = scenario.path.focal_point();
    let pre: Vec<_> = traj.samples.iter().filter(|s| s.phase != Phase::Chase).collect();
    pre.iter()
        .enumerate()
        .map(|(i, s)| {
            let end = pre.get(i + 1).map_or(traj.switch_time, |n| n.t);
            RateSegment { start: s.t, end, rate: escape.rate(s.pursuer, s.evader, focal) }
        })
        .filter(|seg| seg.end > seg.start)
        .collect()
}

/// First escape time along `segments` by thinning with bound `bound`;
/// `None` if no proposal is accepted before the path ends.
pub fn sample_escape<R: Rng + ?Sized>(segments: &[RateSegment], bound: f64, rng: &mut R) -> Option<f64> {
    let (first, last) = (segments.first()?, segments.last()?);
    if !(bound > 0.0) {
        return None;
    }
    let gap = Exp::new(bound).expect("positive rate");
    let mut t = first.start;
    let mut seg = 0;
    loop {
        t += gap.sample(rng);
        if t >= last.end {
            return None;
        }
        while segments[seg].end <= t {
            seg += 1;
        }
        let s = &segments[seg];
        if t < s.start {
            continue;
        }
        if rng.random::<f64>() * bound < s.rate {
            return Some(t);
        }
    }
}

/// Outcome of one stochastic rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutResult {
    pub escape_time: Option<f64>,
    pub switch_point: Vec2,
    pub stalk_energy: f64,
    pub chase_energy: f64,
    pub total_cost: f64,
}

impl From<&Trajectory> for RolloutResult {
    fn from(t: &Trajectory) -> Self {
        RolloutResult {
            escape_time: None,
            switch_point: t.switch_point,
            stalk_energy: t.stalk_energy,
            chase_energy: t.chase_energy,
            total_cost: t.total_energy(),
        }
    }
}

/// Simulates one pursuit from `z0`: the deterministic path fixes where the
/// pursuer would be, an escape time is drawn along it, and the trajectory is
/// re-traced switching at that time.
pub fn rollout<R: Rng + ?Sized>(
    scenario: &Scenario,
    solution: &Solution,
    z0: Vec2,
    rng: &mut R,
) -> Result<RolloutResult, TraceError> {
    let nominal = trace(scenario, solution, z0, TraceMode::Deterministic)?;
    rollout_from(scenario, solution, z0, &nominal, rng)
}

/// As [`rollout`], reusing an already traced deterministic trajectory.
pub fn rollout_from<R: Rng + ?Sized>(
    scenario: &Scenario,
    solution: &Solution,
    z0: Vec2,
    nominal: &Trajectory,
    rng: &mut R,
) -> Result<RolloutResult, TraceError> {
    let segments = rate_segments(scenario, nominal);
    match sample_escape(&segments, scenario.rate.amplitude, rng) {
        None => Ok(nominal.into()),
        Some(te) => {
            let traj = trace(scenario, solution, z0, TraceMode::Stochastic { escape_time: Some(te) })?;
            Ok(RolloutResult { escape_time: Some(te), ..(&traj).into() })
        }
    }
}

/// Sample mean and standard error of a set of costs.
pub fn mean_and_stderr(costs: &[f64]) -> (f64, f64) {
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    if costs.len() < 2 {
        return (mean, 0.0);
    }
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `n` independent rollouts, each on its own seed-derived stream, returned
/// in index order.
pub fn rollouts(
    scenario: &Scenario,
    solution: &Solution,
    z0: Vec2,
    n: usize,
    seed: u64,
) -> Result<Vec<RolloutResult>, TraceError> {
    let nominal = trace(scenario, solution, z0, TraceMode::Deterministic)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[0x726f_6c6c, i as u64]);
            rollout_from(scenario, solution, z0, &nominal, &mut rng)
        })
        .collect()
}

/// Monte-Carlo estimate of the expected cost from `z0` at `t = 0`.
pub fn estimate_expected_cost(
    scenario: &Scenario,
    solution: &Solution,
    z0: Vec2,
    n: usize,
    seed: u64,
) -> Result<(f64, f64), TraceError> {
    let results = rollouts(scenario, solution, z0, n, seed)?;
    let costs: Vec<f64> = results.iter().map(|r| r.total_cost).collect();
    Ok(mean_and_stderr(&costs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(rate: f64, horizon: f64, steps: usize) -> Vec<RateSegment> {
        let h = horizon / steps as f64;
        (0..steps).map(|i| RateSegment { start: i as f64 * h, end: (i + 1) as f64 * h, rate }).collect()
    }

    #[test]
    fn zero_rate_never_escapes() {
        let segs = flat(0.0, 10.0, 100);
        let mut rng = substream(3, &[]);
        assert!((0..1000).all(|_| sample_escape(&segs, 5.0, &mut rng).is_none()));
        assert_eq!(sample_escape(&segs, 0.0, &mut rng), None);
        assert_eq!(sample_escape(&[], 5.0, &mut rng), None);
    }

    #[test]
    fn escape_lands_inside_positive_rate_segment() {
        let mut segs = flat(0.0, 1.0, 10);
        segs[7].rate = 4.0;
        let mut rng = substream(9, &[]);
        for _ in 0..500 {
            if let Some(t) = sample_escape(&segs, 4.0, &mut rng) {
                assert!((0.7..0.8).contains(&t), "{t}");
            }
        }
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_and_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
