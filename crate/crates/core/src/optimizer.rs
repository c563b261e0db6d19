//! Derivative-free minimization over the velocity ball `|v| <= F_P`: a coarse
//! polar grid search followed by hit-and-run refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitAndRunParams {
    /// Angular divisions `a` of the coarse search.
    pub angular_samples: usize,
    /// Speed divisions `b` of the coarse search.
    pub speed_samples: usize,
    /// Stop once an accepted candidate improves on the previous one by less than this.
    pub tolerance: f64,
    /// Maximum number of refinement proposals.
    pub max_iterations: usize,
}

impl Default for HitAndRunParams {
    fn default() -> Self {
        Self { angular_samples: 30, speed_samples: 15, tolerance: 1e-4, max_iterations: 100 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("objective is +∞ at every coarse sample")]
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub velocity: Vec2,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    IterationCap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refined {
    pub best: Candidate,
    pub proposals: usize,
    pub stop: StopReason,
}

/// Evaluates `objective` at `v = s_n (cos θ_l, sin θ_l)` for
/// `θ_l = 2πl/a, l = 0..=a` and `s_n = F_P n / b, n = 0..=b`, returning the
/// smallest value. Ties go to the smallest `(n, l)`.
pub fn coarse_search<F>(objective: &F, max_speed: f64, params: &HitAndRunParams) -> Result<Candidate, OptimizerError>
where
    F: Fn(Vec2) -> f64,
{
    let (a, b) = (params.angular_samples, params.speed_samples);
    let mut best = Candidate { velocity: Vec2::ZERO, value: f64::INFINITY };
    for n in 0..=b {
        let speed = max_speed * n as f64 / b as f64;
        for l in 0..=a {
            let theta = std::f64::consts::TAU * l as f64 / a as f64;
            let v = Vec2::from_polar(speed, theta);
            let value = objective(v);
            if value < best.value {
                best = Candidate { velocity: v, value };
            }
        }
    }
    if best.value.is_finite() {
        Ok(best)
    } else {
        Err(OptimizerError::Infeasible)
    }
}

/// Hit-and-run improvement of `incumbent`. Each proposal steps from the
/// newest accepted point in a uniform direction by a uniform length in
/// `[0, 1]`, clipped radially into the ball; only improvements are accepted.
pub fn refine<F, R>(incumbent: Candidate, objective: &F, max_speed: f64, params: &HitAndRunParams, rng: &mut R) -> Refined
where
    F: Fn(Vec2) -> f64,
    R: Rng + ?Sized,
{
    let mut best = incumbent;
    for proposal in 1..=params.max_iterations {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let step: f64 = rng.random_range(0.0..=1.0);
        let v = (best.velocity + Vec2::from_polar(step, theta)).clamp_norm(max_speed);
        let value = objective(v);
        if value < best.value {
            let gain = best.value - value;
            best = Candidate { velocity: v, value };
            if gain < params.tolerance {
                return Refined { best, proposals: proposal, stop: StopReason::Tolerance };
            }
        }
    }
    Refined { best, proposals: params.max_iterations, stop: StopReason::IterationCap }
}

/// Coarse search followed by refinement.
pub fn minimize<F, R>(objective: &F, max_speed: f64, params: &HitAndRunParams, rng: &mut R) -> Result<Candidate, OptimizerError>
where
    F: Fn(Vec2) -> f64,
    R: Rng + ?Sized,
{
    let coarse = coarse_search(objective, max_speed, params)?;
    Ok(refine(coarse, objective, max_speed, params, rng).best)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for one stream, keyed by a base seed and a tuple
/// of indices, so results do not depend on scheduling.
pub fn substream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ k);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Generator for grid node `(i, j, k)`.
pub fn node_rng(seed: u64, i: usize, j: usize, k: usize) -> ChaCha8Rng {
    substream(seed, &[i as u64, j as u64, k as u64])
}
