//! Independent reference values for checking the solvers.
//!
//! Everything here is computed without the solver code paths: closed forms
//! written out from the reference parameters, and a brute-force chase
//! integrator. The `acceptance` test target runs the end-to-end checks.

use camo_core::environment::{GridParams, PursuitConfig, Scenario};
use camo_core::escape::RateParams;
use camo_core::geometry::Vec2;
use camo_core::validate_config;

/// Reference speeds (m/s), idle power (W) and distances (m).
pub mod reference {
    pub const STALK_SPEED: f64 = 4.0;
    pub const CHASE_SPEED_PURSUER: f64 = 20.0;
    pub const CHASE_SPEED_EVADER: f64 = 10.0;
    pub const IDLE_POWER: f64 = 3.0;
    pub const CHASE_TRIGGER: f64 = 0.05;
    pub const CAPTURE_RADIUS: f64 = 0.025;
}

/// Expected energy without escape risk from distance `r` to a parked
/// evader: straight flight at full stalk speed to the trigger circle, then
/// the chase from there.
pub fn free_value(r: f64) -> f64 {
    use reference::*;
    let fly = (r - CHASE_TRIGGER) / STALK_SPEED * (IDLE_POWER + STALK_SPEED * STALK_SPEED / 2.0);
    let chase = (CHASE_TRIGGER - CAPTURE_RADIUS) / (CHASE_SPEED_PURSUER - CHASE_SPEED_EVADER)
        * (IDLE_POWER + CHASE_SPEED_PURSUER * CHASE_SPEED_PURSUER / 2.0);
    fly + chase
}

/// Capture time of the direct chase by explicit integration with step `h`:
/// both move along the line of centres until the gap is within the capture
/// radius.
pub fn simulated_capture_time(pursuer: Vec2, evader: Vec2, h: f64) -> f64 {
    use reference::*;
    let (mut p, mut e) = (pursuer, evader);
    let mut steps = 0u64;
    while p.distance(e) > CAPTURE_RADIUS {
        let los = (e - p) * (1.0 / p.distance(e));
        p += los * (CHASE_SPEED_PURSUER * h);
        e += los * (CHASE_SPEED_EVADER * h);
        steps += 1;
    }
    steps as f64 * h
}

/// Reference scenario on the reduced 100 × 100 × 400 grid.
pub fn reduced(amplitude: f64, acuity: f64, tolerance: f64) -> Scenario {
    let mut cfg = PursuitConfig::with_rate(RateParams { amplitude, acuity, tolerance });
    cfg.grid = GridParams { extent: 4.0, cells: 100, time_cells: 400 };
    cfg.seed = 1;
    validate_config(&cfg).expect("reduced config is valid")
}
