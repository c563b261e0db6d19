//! Problem parameters, the evader's route, and the validated [`Scenario`]
//! every solver works from.
//!
//! A [`PursuitConfig`] is the raw, serializable document. Every section
//! except `rate` has defaults equal to the reference hover-fly experiment,
//! so `{"rate": {...}}` alone is a complete configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chase::ChaseModel;
use crate::escape::{EscapeModel, RateParams};
use crate::geometry::Vec2;
use crate::optimizer::HitAndRunParams;

/// Speeds in m/s and idle power in J/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedParams {
    /// Maximum pursuer speed while stalking.
    pub stalk_speed: f64,
    /// Pursuer speed during the direct chase.
    pub chase_speed_pursuer: f64,
    /// Evader speed during the direct chase.
    pub chase_speed_evader: f64,
    /// Operational power drawn regardless of motion.
    pub idle_power: f64,
}

impl Default for SpeedParams {
    fn default() -> Self {
        Self { stalk_speed: 4.0, chase_speed_pursuer: 20.0, chase_speed_evader: 10.0, idle_power: 3.0 }
    }
}

impl SpeedParams {
    /// Control energy rate `W + |v|^2 / 2` at speed `speed`.
    #[inline]
    pub fn energy_rate(&self, speed: f64) -> f64 {
        self.idle_power + 0.5 * speed * speed
    }
}

/// Critical distances around the evader, in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceParams {
    pub visual_range: f64,
    pub tracking_distance: f64,
    pub chase_trigger: f64,
    pub capture_radius: f64,
}

impl Default for DistanceParams {
    fn default() -> Self {
        Self { visual_range: 0.75, tracking_distance: 0.15, chase_trigger: 0.05, capture_radius: 0.025 }
    }
}

/// How the evader's route is described in the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// `f(t) = [2 + 0.05 t - cos t, 1 + 0.05 t^2 + sin t]` on `[0, arrival_time]`.
    #[serde(rename = "paper_route")]
    ReferenceRoute {
        #[serde(default = "default_arrival_time")]
        arrival_time: f64,
        #[serde(default = "default_focal_point")]
        focal_point: Vec2,
    },
    /// Piecewise-linear route through `(t, x, y)` rows; the first row must be
    /// at `t = 0` and the last row defines the arrival time and the flower.
    Samples { rows: Vec<[f64; 3]>, focal_point: Vec2 },
}

fn default_arrival_time() -> f64 {
    2.0
}

fn default_focal_point() -> Vec2 {
    Vec2::new(1.5, 0.6)
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec::ReferenceRoute { arrival_time: default_arrival_time(), focal_point: default_focal_point() }
    }
}

/// Requested grid resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    /// Side length of the square spatial domain `[0, extent]^2`.
    pub extent: f64,
    /// Cells per spatial axis (`N_d`).
    pub cells: usize,
    /// Time cells on `[0, T*]` (`N_t`).
    pub time_cells: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { extent: 4.0, cells: 200, time_cells: 800 }
    }
}

/// The full serializable configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PursuitConfig {
    #[serde(default)]
    pub speeds: SpeedParams,
    #[serde(default)]
    pub distances: DistanceParams,
    #[serde(default)]
    pub path: PathSpec,
    pub rate: RateParams,
    #[serde(default)]
    pub grid: GridParams,
    #[serde(default)]
    pub optimizer: HitAndRunParams,
    #[serde(default)]
    pub seed: u64,
}

impl PursuitConfig {
    /// Reference experiment parameters with the given escape-rate constants.
    pub fn with_rate(rate: RateParams) -> Self {
        Self {
            speeds: SpeedParams::default(),
            distances: DistanceParams::default(),
            path: PathSpec::default(),
            rate,
            grid: GridParams::default(),
            optimizer: HitAndRunParams::default(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Content hash of the normalized document (defaults filled in).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Errors from evaluating the route.
#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("negative time {0} s")]
    NegativeTime(f64),
}

#[derive(Clone, Debug, PartialEq)]
enum Route {
    Reference,
    Samples(Vec<(f64, Vec2)>),
}

/// The evader's stalk-phase route `f` on `[0, T*]` together with the flower
/// `z*` and the focal point `z#`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaderPath {
    route: Route,
    arrival_time: f64,
    flower: Vec2,
    focal_point: Vec2,
}

fn reference_route(t: f64) -> Vec2 {
    Vec2::new(2.0 + 0.05 * t - t.cos(), 1.0 + 0.05 * t * t + t.sin())
}

impl EvaderPath {
    pub fn reference(arrival_time: f64, focal_point: Vec2) -> Self {
        Self { route: Route::Reference, arrival_time, flower: reference_route(arrival_time), focal_point }
    }

    /// Piecewise-linear route through `(t, point)` samples. Times are assumed
    /// to start at zero and increase strictly; see [`validate_config`].
    pub fn sampled(samples: Vec<(f64, Vec2)>, focal_point: Vec2) -> Self {
        let (arrival_time, flower) = samples.last().copied().unwrap_or((0.0, Vec2::ZERO));
        Self { route: Route::Samples(samples), arrival_time, flower, focal_point }
    }

    pub fn arrival_time(&self) -> f64 {
        self.arrival_time
    }

    pub fn flower(&self) -> Vec2 {
        self.flower
    }

    pub fn focal_point(&self) -> Vec2 {
        self.focal_point
    }

    /// Evader position at `t`; stationary at the flower after arrival.
    pub fn position(&self, t: f64) -> Result<Vec2, PathError> {
        if t < 0.0 || t.is_nan() {
            return Err(PathError::NegativeTime(t));
        }
        Ok(self.at(t))
    }

    /// Infallible variant of [`position`](Self::position) for solver loops;
    /// negative times clamp to the start of the route.
    #[inline]
    pub fn at(&self, t: f64) -> Vec2 {
        if t >= self.arrival_time {
            return self.flower;
        }
        let t = t.max(0.0);
        match &self.route {
            Route::Reference => reference_route(t),
            Route::Samples(rows) => {
                let k = rows.partition_point(|(s, _)| *s <= t).clamp(1, rows.len() - 1);
                let (t0, p0) = rows[k - 1];
                let (t1, p1) = rows[k];
                let w = (t - t0) / (t1 - t0);
                p0 + (p1 - p0) * w
            }
        }
    }

    /// Route positions at `n + 1` evenly spaced times on `[0, T*]`.
    pub fn sample_uniform(&self, n: usize) -> impl Iterator<Item = (f64, Vec2)> + '_ {
        let h = self.arrival_time / n as f64;
        (0..=n).map(move |k| {
            let t = if k == n { self.arrival_time } else { k as f64 * h };
            (t, self.at(t))
        })
    }
}

/// Tolerated ratio between the route's sampled speed and the evader's
/// maximum speed `G_E`.
pub const ROUTE_SPEED_SAFETY_FACTOR: f64 = 1.0;

const ROUTE_CHECK_SAMPLES: usize = 2000;

/// One violated configuration invariant.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConfigViolation {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
    #[error("pursuer not faster in chase (G_P = {pursuer}, G_E = {evader})")]
    PursuerNotFaster { pursuer: f64, evader: f64 },
    #[error("stalk speed must stay below chase speed (F_P = {stalk}, G_P = {chase})")]
    StalkNotSlower { stalk: f64, chase: f64 },
    #[error("capture_radius ≥ chase_trigger")]
    CaptureNotInsideTrigger,
    #[error("chase_trigger ≥ tracking_distance")]
    TriggerNotInsideTracking,
    #[error("tracking_distance ≥ visual_range")]
    TrackingNotInsideVisual,
    #[error("grid needs at least 2 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("grid needs at least 1 time cell")]
    NoTimeCells,
    #[error("time step {dt} s exceeds the CFL bound {bound} s")]
    Cfl { dt: f64, bound: f64 },
    #[error("domain [0, {extent}]^2 does not contain every point within visual range of the route")]
    DomainTooSmall { extent: f64 },
    #[error("route samples: {0}")]
    BadSamples(String),
    #[error("route moves at {speed} m/s near t = {time} s, faster than the evader's maximum {max}")]
    RouteTooFast { time: f64, speed: f64, max: f64 },
    #[error("focal point coincides with the flower")]
    FocalAtFlower,
    #[error("optimizer: {0}")]
    Optimizer(&'static str),
}

/// All violations found by [`validate_config`].
#[derive(Clone, Debug, Error, PartialEq)]
#[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigErrors(pub Vec<ConfigViolation>);

/// Validated, immutable problem description shared by every solver.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: PursuitConfig,
    pub speeds: SpeedParams,
    pub distances: DistanceParams,
    pub path: EvaderPath,
    pub rate: RateParams,
}

/// Largest time step allowed by the CFL bound for spatial step `dx`.
pub fn cfl_time_step(dx: f64, stalk_speed: f64) -> f64 {
    (2.0 * dx * dx).sqrt() / stalk_speed
}

fn build_path(spec: &PathSpec, errors: &mut Vec<ConfigViolation>) -> Option<EvaderPath> {
    match spec {
        PathSpec::ReferenceRoute { arrival_time, focal_point } => {
            if !(*arrival_time > 0.0 && arrival_time.is_finite()) {
                errors.push(ConfigViolation::NonPositive("path.arrival_time"));
                return None;
            }
            Some(EvaderPath::reference(*arrival_time, *focal_point))
        }
        PathSpec::Samples { rows, focal_point } => {
            if rows.len() < 2 {
                errors.push(ConfigViolation::BadSamples("need at least two rows".into()));
                return None;
            }
            if rows[0][0] != 0.0 {
                errors.push(ConfigViolation::BadSamples("first row must be at t = 0".into()));
                return None;
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                errors.push(ConfigViolation::BadSamples("non-finite value".into()));
                return None;
            }
            if let Some(w) = rows.windows(2).find(|w| w[1][0] <= w[0][0]) {
                errors.push(ConfigViolation::BadSamples(format!("times not strictly increasing at t = {}", w[1][0])));
                return None;
            }
            let samples = rows.iter().map(|r| (r[0], Vec2::new(r[1], r[2]))).collect();
            Some(EvaderPath::sampled(samples, *focal_point))
        }
    }
}

/// Checks every invariant of `cfg` and returns the validated scenario, or
/// every violation found.
pub fn validate_config(cfg: &PursuitConfig) -> Result<Scenario, ConfigErrors> {
    let mut errors = Vec::new();
    let s = &cfg.speeds;
    for (name, v) in [
        ("speeds.stalk_speed", s.stalk_speed),
        ("speeds.chase_speed_pursuer", s.chase_speed_pursuer),
        ("speeds.chase_speed_evader", s.chase_speed_evader),
        ("speeds.idle_power", s.idle_power),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            errors.push(ConfigViolation::NonPositive(name));
        }
    }
    if !(s.chase_speed_pursuer > s.chase_speed_evader) {
        errors.push(ConfigViolation::PursuerNotFaster { pursuer: s.chase_speed_pursuer, evader: s.chase_speed_evader });
    }
    if !(s.stalk_speed < s.chase_speed_pursuer) {
        errors.push(ConfigViolation::StalkNotSlower { stalk: s.stalk_speed, chase: s.chase_speed_pursuer });
    }

    let d = &cfg.distances;
    if !(d.capture_radius > 0.0) {
        errors.push(ConfigViolation::NonPositive("distances.capture_radius"));
    }
    if !(d.capture_radius < d.chase_trigger) {
        errors.push(ConfigViolation::CaptureNotInsideTrigger);
    }
    if !(d.chase_trigger < d.tracking_distance) {
        errors.push(ConfigViolation::TriggerNotInsideTracking);
    }
    if !(d.tracking_distance < d.visual_range) {
        errors.push(ConfigViolation::TrackingNotInsideVisual);
    }

    let r = &cfg.rate;
    if !(r.amplitude >= 0.0 && r.amplitude.is_finite()) {
        errors.push(ConfigViolation::Negative("rate.amplitude"));
    }
    if !(r.acuity > 0.0 && r.acuity.is_finite()) {
        errors.push(ConfigViolation::NonPositive("rate.acuity"));
    }
    if !(r.tolerance >= 0.0 && r.tolerance.is_finite()) {
        errors.push(ConfigViolation::Negative("rate.tolerance"));
    }

    let o = &cfg.optimizer;
    if o.angular_samples < 1 {
        errors.push(ConfigViolation::Optimizer("angular_samples must be ≥ 1"));
    }
    if o.speed_samples < 1 {
        errors.push(ConfigViolation::Optimizer("speed_samples must be ≥ 1"));
    }
    if !(o.tolerance > 0.0) {
        errors.push(ConfigViolation::Optimizer("tolerance must be > 0"));
    }

    let path = build_path(&cfg.path, &mut errors);

    let g = &cfg.grid;
    if g.cells < 2 {
        errors.push(ConfigViolation::TooFewCells(g.cells));
    }
    if g.time_cells < 1 {
        errors.push(ConfigViolation::NoTimeCells);
    }
    if !(g.extent > 0.0 && g.extent.is_finite()) {
        errors.push(ConfigViolation::NonPositive("grid.extent"));
    }

    if let Some(path) = &path {
        if path.focal_point().distance(path.flower()) == 0.0 {
            errors.push(ConfigViolation::FocalAtFlower);
        }
        if let Some(v) = route_speed_violation(path, s.chase_speed_evader) {
            errors.push(v);
        }
        if g.cells >= 2 && g.time_cells >= 1 && s.stalk_speed > 0.0 {
            let dx = g.extent / g.cells as f64;
            let dt = path.arrival_time() / g.time_cells as f64;
            let bound = cfl_time_step(dx, s.stalk_speed);
            if dt > bound {
                errors.push(ConfigViolation::Cfl { dt, bound });
            }
        }
        if g.extent > 0.0 && !domain_contains_visibility(path, d.visual_range, g.extent) {
            errors.push(ConfigViolation::DomainTooSmall { extent: g.extent });
        }
    }

    match (errors.is_empty(), path) {
        (true, Some(path)) => Ok(Scenario { config: cfg.clone(), speeds: *s, distances: *d, path, rate: *r }),
        _ => Err(ConfigErrors(errors)),
    }
}

fn route_speed_violation(path: &EvaderPath, max_speed: f64) -> Option<ConfigViolation> {
    let limit = max_speed * ROUTE_SPEED_SAFETY_FACTOR;
    let pts: Vec<_> = path.sample_uniform(ROUTE_CHECK_SAMPLES).collect();
    pts.windows(2).find_map(|w| {
        let (t0, p0) = w[0];
        let (t1, p1) = w[1];
        let speed = p1.distance(p0) / (t1 - t0);
        // sampled routes can only be checked exactly at their own knots
        (speed > limit * (1.0 + 1e-9)).then_some(ConfigViolation::RouteTooFast { time: t0, speed, max: max_speed })
    })
}

/// Whether every point within `visual_range` of the route lies in `[0, extent]^2`.
pub fn domain_contains_visibility(path: &EvaderPath, visual_range: f64, extent: f64) -> bool {
    let mut pts: Vec<Vec2> = path.sample_uniform(ROUTE_CHECK_SAMPLES).map(|(_, p)| p).collect();
    if let Route::Samples(rows) = &path.route {
        pts.extend(rows.iter().map(|(_, p)| *p));
    }
    pts.iter().all(|p| {
        p.x - visual_range >= 0.0
            && p.y - visual_range >= 0.0
            && p.x + visual_range <= extent
            && p.y + visual_range <= extent
    })
}

impl Scenario {
    pub fn from_config(cfg: &PursuitConfig) -> Result<Self, ConfigErrors> {
        validate_config(cfg)
    }

    pub fn escape_model(&self) -> EscapeModel {
        EscapeModel::new(self.rate, self.distances.chase_trigger, self.distances.visual_range)
    }

    pub fn chase_model(&self) -> ChaseModel {
        ChaseModel::new(&self.speeds, self.distances.capture_radius)
    }

    pub fn arrival_time(&self) -> f64 {
        self.path.arrival_time()
    }

    /// Evader position at time `t` (see [`EvaderPath::position`]).
    pub fn evader_position(&self, t: f64) -> Result<Vec2, PathError> {
        self.path.position(t)
    }

    /// Escape rate at pursuer position `z` and time `t`.
    #[inline]
    pub fn escape_rate(&self, z: Vec2, t: f64) -> f64 {
        self.escape_model().rate(z, self.path.at(t), self.path.focal_point())
    }

    /// Direct-chase energy when the chase starts with the pursuer at `z` at time `t`.
    #[inline]
    pub fn chase_energy(&self, z: Vec2, t: f64) -> f64 {
        self.chase_model().chase_energy(z, self.path.at(t))
    }

    /// Angular displacement from the evader's focal line, if defined.
    pub fn angular_displacement(&self, z: Vec2, t: f64) -> Option<f64> {
        crate::escape::angular_displacement(z, self.path.at(t), self.path.focal_point()).ok()
    }

    pub fn hit_and_run(&self) -> HitAndRunParams {
        self.config.optimizer
    }
}
