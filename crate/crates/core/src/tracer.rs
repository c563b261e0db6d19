//! Optimal trajectory reconstruction and approximate-MC labelling.
//!
//! The pursuer first hovers and tracks if it starts out of sight, then
//! follows the interpolated time-dependent policy in steps of `dt`, then the
//! stationary heading at full stalk speed once the evader has landed. The
//! stalk ends on entering the trigger ball or, in stochastic mode, at the
//! end of the step in which the escape happens; the analytic chase follows.

use thiserror::Error;

use crate::environment::Scenario;
use crate::escape::angular_displacement;
use crate::geometry::{first_entry, Vec2};
use crate::solution::Solution;

/// Largest angular displacement counted as approximate MC: 0.5°.
pub const AMC_THRESHOLD: f64 = 0.5 * std::f64::consts::PI / 180.0;

/// Cap on steps spent following the stationary heading.
const MAX_STATIONARY_STEPS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Hover,
    Track,
    Stalk,
    Chase,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Hover => "hover",
            Phase::Track => "track",
            Phase::Stalk => "stalk",
            Phase::Chase => "chase",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceMode {
    /// Never escape; switch only on entering the trigger ball.
    Deterministic,
    /// Escape at the given time (if any) as well.
    Stochastic { escape_time: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchCause {
    Trigger,
    Escape,
}

/// State at the start of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub pursuer: Vec2,
    pub evader: Vec2,
    pub phase: Phase,
    /// Velocity applied over the step.
    pub velocity: Vec2,
    pub theta: Option<f64>,
    /// Whether the step enters the approximate-MC statistic at all.
    pub counted: bool,
    pub amc: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TraceSample>,
    pub switch_time: f64,
    pub switch_point: Vec2,
    pub switch_cause: SwitchCause,
    pub capture_time: f64,
    pub capture_point: Vec2,
    pub stalk_energy: f64,
    pub chase_energy: f64,
}

impl Trajectory {
    pub fn total_energy(&self) -> f64 {
        self.stalk_energy + self.chase_energy
    }

    pub fn amc_fraction(&self) -> Option<f64> {
        amc_fraction(self)
    }

    /// Samples before the switch (hover, track and stalk steps).
    pub fn pre_switch(&self) -> impl Iterator<Item = &TraceSample> {
        self.samples.iter().filter(|s| s.phase != Phase::Chase)
    }
}

/// Share of counted steps flagged approximate-MC; `None` without counted steps.
pub fn amc_fraction(traj: &Trajectory) -> Option<f64> {
    let (mut counted, mut flagged) = (0usize, 0usize);
    for s in &traj.samples {
        if s.counted {
            counted += 1;
            flagged += s.amc as usize;
        }
    }
    (counted > 0).then(|| flagged as f64 / counted as f64)
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("start ({x}, {y}) is never visible to the evader")]
    InfeasibleStart { x: f64, y: f64 },
    #[error("no finite policy around ({x}, {y}) at t = {t}")]
    PolicyUndefined { x: f64, y: f64, t: f64 },
    #[error("stationary phase did not reach the trigger ball")]
    Stalled,
}

struct Tracer<'a> {
    scenario: &'a Scenario,
    solution: &'a Solution,
    escape_time: Option<f64>,
    samples: Vec<TraceSample>,
    stalk_energy: f64,
}

enum Step {
    Continue(Vec2),
    Switch { at: Vec2, time: f64, cause: SwitchCause },
}

impl Tracer<'_> {
    fn record(&mut self, t: f64, pursuer: Vec2, phase: Phase, velocity: Vec2) {
        let sc = self.scenario;
        let evader = sc.path.at(t);
        let theta = angular_displacement(pursuer, evader, sc.path.focal_point()).ok();
        let counted = match phase {
            Phase::Stalk => true,
            Phase::Hover | Phase::Track => pursuer.distance(evader) <= sc.distances.visual_range,
            Phase::Chase => false,
        };
        let amc = phase == Phase::Stalk && theta.is_some_and(|th| th <= AMC_THRESHOLD);
        self.samples.push(TraceSample {
            t,
            pursuer,
            evader,
            phase,
            velocity,
            theta: if phase == Phase::Chase { None } else { theta },
            counted,
            amc,
        });
    }

    /// Advances one step of length `dt` from `(z, t0)` to `t1`.
    fn step(&mut self, z: Vec2, t0: f64, t1: f64, v: Vec2, phase: Phase) -> Step {
        let sc = self.scenario;
        self.record(t0, z, phase, v);
        let dt = t1 - t0;
        let rate = sc.speeds.energy_rate(v.norm());
        let foot = z + v * dt;
        let (e0, e1) = (sc.path.at(t0), sc.path.at(t1));
        if let Some(s) = first_entry(z, foot, e0, e1, sc.distances.chase_trigger) {
            self.stalk_energy += rate * dt * s;
            return Step::Switch { at: z + v * (dt * s), time: t0 + dt * s, cause: SwitchCause::Trigger };
        }
        self.stalk_energy += rate * dt;
        if self.escape_time.is_some_and(|te| te < t1) {
            return Step::Switch { at: foot, time: t1, cause: SwitchCause::Escape };
        }
        Step::Continue(foot)
    }

    fn run(&mut self, z0: Vec2) -> Result<(Vec2, f64, SwitchCause), TraceError> {
        let sc = self.scenario;
        let g = &self.solution.grid;
        let dist = &sc.distances;
        let speed = sc.speeds.stalk_speed;
        let mut z = z0;
        let mut k = 0usize;

        if z.distance(sc.path.at(0.0)) <= dist.chase_trigger {
            return Ok((z, 0.0, SwitchCause::Trigger));
        }
        if self.escape_time.is_some_and(|te| te <= 0.0) {
            return Ok((z, 0.0, SwitchCause::Escape));
        }

        if z.distance(sc.path.at(0.0)) > dist.visual_range {
            while k < g.time_cells && z.distance(sc.path.at(g.time(k))) > dist.visual_range {
                match self.step(z, g.time(k), g.time(k + 1), Vec2::ZERO, Phase::Hover) {
                    Step::Continue(next) => z = next,
                    Step::Switch { at, time, cause } => return Ok((at, time, cause)),
                }
                k += 1;
            }
            while k < g.time_cells && z.distance(sc.path.at(g.time(k))) > dist.tracking_distance {
                let heading = (sc.path.at(g.time(k)) - z).normalized().unwrap_or(Vec2::ZERO);
                match self.step(z, g.time(k), g.time(k + 1), heading * speed, Phase::Track) {
                    Step::Continue(next) => z = next,
                    Step::Switch { at, time, cause } => return Ok((at, time, cause)),
                }
                k += 1;
            }
        }

        while k < g.time_cells {
            let t = g.time(k);
            let v = self
                .solution
                .dynamic
                .velocity_at(g, k, z)
                .ok_or(TraceError::PolicyUndefined { x: z.x, y: z.y, t })?
                .clamp_norm(speed);
            match self.step(z, t, g.time(k + 1), v, Phase::Stalk) {
                Step::Continue(next) => z = next,
                Step::Switch { at, time, cause } => return Ok((at, time, cause)),
            }
            k += 1;
        }

        let t_star = g.final_time;
        let flower = sc.path.flower();
        for m in 0..MAX_STATIONARY_STEPS {
            let t = t_star + m as f64 * g.dt;
            let v = self
                .solution
                .stationary
                .velocity_at(g, z)
                .and_then(Vec2::normalized)
                .or_else(|| (flower - z).normalized())
                .ok_or(TraceError::PolicyUndefined { x: z.x, y: z.y, t })?;
            match self.step(z, t, t + g.dt, v * speed, Phase::Stalk) {
                Step::Continue(next) => z = next,
                Step::Switch { at, time, cause } => return Ok((at, time, cause)),
            }
        }
        Err(TraceError::Stalled)
    }
}

/// Whether `z` is within visual range of the route at some grid time.
pub fn start_is_feasible(scenario: &Scenario, solution: &Solution, z: Vec2) -> bool {
    let g = &solution.grid;
    g.contains(z) && (0..=g.time_cells).any(|k| z.distance(scenario.path.at(g.time(k))) <= scenario.distances.visual_range)
}

/// Traces the pursuer from `z0` at `t = 0` until capture.
pub fn trace(scenario: &Scenario, solution: &Solution, z0: Vec2, mode: TraceMode) -> Result<Trajectory, TraceError> {
    if !start_is_feasible(scenario, solution, z0) {
        return Err(TraceError::InfeasibleStart { x: z0.x, y: z0.y });
    }
    let escape_time = match mode {
        TraceMode::Deterministic => None,
        TraceMode::Stochastic { escape_time } => escape_time,
    };
    let mut tracer = Tracer { scenario, solution, escape_time, samples: Vec::new(), stalk_energy: 0.0 };
    let (switch_point, switch_time, switch_cause) = tracer.run(z0)?;

    let chase = scenario.chase_model();
    let g = &solution.grid;
    let evader = scenario.path.at(switch_time);
    let duration = chase.capture_time(switch_point, evader);
    let heading = (evader - switch_point).normalized().unwrap_or(Vec2::ZERO);
    let (mut p, mut e) = (switch_point, evader);
    let mut elapsed = 0.0;
    while elapsed < duration {
        let h = g.dt.min(duration - elapsed);
        tracer.samples.push(TraceSample {
            t: switch_time + elapsed,
            pursuer: p,
            evader: e,
            phase: Phase::Chase,
            velocity: heading * chase.pursuer_speed,
            theta: None,
            counted: false,
            amc: false,
        });
        p += heading * (chase.pursuer_speed * h);
        e += heading * (chase.evader_speed * h);
        elapsed += h;
    }
    let capture_time = switch_time + duration;
    tracer.samples.push(TraceSample {
        t: capture_time,
        pursuer: p,
        evader: e,
        phase: Phase::Chase,
        velocity: Vec2::ZERO,
        theta: None,
        counted: false,
        amc: false,
    });
    Ok(Trajectory {
        samples: tracer.samples,
        switch_time,
        switch_point,
        switch_cause,
        capture_time,
        capture_point: p,
        stalk_energy: tracer.stalk_energy,
        chase_energy: duration * chase.energy_rate,
    })
}
