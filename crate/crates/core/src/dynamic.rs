//! Time-dependent value `u(z, t)` before the evader reaches the flower,
//! solved backward in time from `u(·, T*) = w`.
//!
//! Each slice classifies its nodes:
//!
//! * capture: inside the trigger ball, value is the chase energy;
//! * visible: within visual range, semi-Lagrangian update minimized over
//!   the velocity ball by hit-and-run;
//! * hovering: not yet visible but visible later, value from hovering in
//!   place and then tracking the evader;
//! * disallowed: never visible again, `+∞`.

use rayon::prelude::*;

use crate::environment::Scenario;
use crate::geometry::{first_entry, Vec2};
use crate::grid::{interp_velocity, Grid, PolicyField, ScalarField3};
use crate::optimizer::{coarse_search, node_rng, refine, HitAndRunParams};
use crate::stationary::StationarySolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NodeClass {
    Disallowed = 0,
    Capture = 1,
    Visible = 2,
    Hovering = 3,
}

impl NodeClass {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Disallowed),
            1 => Some(Self::Capture),
            2 => Some(Self::Visible),
            3 => Some(Self::Hovering),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeDependentSolution {
    pub values: ScalarField3,
    pub policy: PolicyField,
    /// [`NodeClass`] of every node in every slice.
    pub classes: Vec<u8>,
    /// Visible nodes where every velocity candidate was infeasible.
    pub infeasible_nodes: usize,
}

impl TimeDependentSolution {
    /// `u(z, t)` by trilinear interpolation; `+∞` outside the grid.
    pub fn value_at(&self, grid: &Grid, z: Vec2, t: f64) -> f64 {
        self.values.interp(grid, z, t).unwrap_or(f64::INFINITY)
    }

    /// Policy at slice `k`, interpolated over corners with finite value.
    pub fn velocity_at(&self, grid: &Grid, k: usize, z: Vec2) -> Option<Vec2> {
        interp_velocity(grid, self.policy.slice_x(k), self.policy.slice_y(k), self.values.slice(k), z)
    }

    pub fn class(&self, k: usize, idx: usize) -> NodeClass {
        NodeClass::from_u8(self.classes[k * self.values.slice_len + idx]).expect("valid class byte")
    }
}

/// Read-only view of the already solved slices `first..=N_t`.
pub struct LaterSlices<'a> {
    pub grid: &'a Grid,
    pub first: usize,
    pub values: &'a [f64],
}

impl LaterSlices<'_> {
    pub fn slice(&self, k: usize) -> &[f64] {
        let len = self.grid.slice_len();
        let off = (k - self.first) * len;
        &self.values[off..off + len]
    }

    /// Trilinear interpolation restricted to the solved slices, over the
    /// finite corners only.
    pub fn interp(&self, z: Vec2, t: f64) -> f64 {
        let g = self.grid;
        let gt = (t / g.dt).clamp(self.first as f64, g.time_cells as f64);
        let mut k0 = gt.floor() as usize;
        if k0 == g.time_cells {
            k0 -= 1;
        }
        let ft = gt - k0 as f64;
        let at = |k: usize| g.bilinear_finite(self.slice(k), z).unwrap_or(f64::INFINITY);
        if k0 < self.first || ft >= 1.0 - 1e-9 {
            return at(k0 + 1);
        }
        if ft <= 1e-9 {
            return at(k0);
        }
        match (at(k0), at(k0 + 1)) {
            (lo, f64::INFINITY) => lo,
            (f64::INFINITY, hi) => hi,
            (lo, hi) => (1.0 - ft) * lo + ft * hi,
        }
    }
}

/// Fixed inputs of the backward solve.
pub struct TimeContext<'a> {
    pub scenario: &'a Scenario,
    pub grid: &'a Grid,
    pub stationary: &'a StationarySolution,
    pub optimizer: HitAndRunParams,
    pub seed: u64,
}

/// Why a hovering value could not be computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HoverError {
    /// The point is already within visual range.
    AlreadyVisible,
    /// The point never comes within visual range at a later grid time.
    NeverVisible,
}

/// Breakdown of a hovering-point value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoverValue {
    pub value: f64,
    /// Grid index of the first time the point is visible.
    pub visible_slice: usize,
    /// Tracking duration after becoming visible.
    pub tracking_time: f64,
    /// End of tracking.
    pub tracked_to: Vec2,
    /// Probability of no escape along the tracking path.
    pub survival: f64,
}

impl TimeContext<'_> {
    #[inline]
    fn stalk_rate(&self, speed_sq: f64) -> f64 {
        self.scenario.speeds.idle_power + 0.5 * speed_sq
    }

    /// Semi-Lagrangian objective at visible node `z` of slice `k`, given the
    /// values of slice `k + 1`.
    pub fn objective<'s>(&'s self, k: usize, z: Vec2, next: &'s [f64]) -> impl Fn(Vec2) -> f64 + 's {
        let sc = self.scenario;
        let g = self.grid;
        let dt = g.dt;
        let e0 = sc.path.at(g.time(k));
        let e1 = sc.path.at(g.time(k + 1));
        let survive = (-dt * sc.escape_model().rate(z, e0, sc.path.focal_point())).exp();
        let last = k + 1 == g.time_cells;
        let chase = sc.chase_model();
        let trigger = sc.distances.chase_trigger;
        move |v: Vec2| {
            let foot = z + v * dt;
            if !g.contains(foot) {
                return f64::INFINITY;
            }
            let running = self.stalk_rate(v.norm_sq()) * dt;
            if let Some(s) = first_entry(z, foot, e0, e1, trigger) {
                return running * s + chase.chase_energy(z + v * (dt * s), e0 + (e1 - e0) * s);
            }
            let carried = g.bilinear_finite(next, foot).unwrap_or(f64::INFINITY);
            if carried == f64::INFINITY {
                return f64::INFINITY;
            }
            if last {
                running + carried
            } else {
                running + survive * carried + (1.0 - survive) * chase.chase_energy(foot, e1)
            }
        }
    }

    /// Value at a point that is visible later but not at slice `k`: hover
    /// until the first visible grid time, then fly straight at the evader at
    /// `F_P` until within tracking distance.
    pub fn hovering_value(&self, z: Vec2, k: usize, later: &LaterSlices) -> Result<HoverValue, HoverError> {
        let sc = self.scenario;
        let g = self.grid;
        let range = sc.distances.visual_range;
        if z.distance(sc.path.at(g.time(k))) <= range {
            return Err(HoverError::AlreadyVisible);
        }
        let m = (k + 1..=g.time_cells)
            .find(|&m| z.distance(sc.path.at(g.time(m))) <= range)
            .ok_or(HoverError::NeverVisible)?;
        let escape = sc.escape_model();
        let focal = sc.path.focal_point();
        let speed = sc.speeds.stalk_speed;
        let mut pos = z;
        let mut slice = m;
        let mut integral = 0.0;
        loop {
            let e = sc.path.at(g.time(slice));
            if pos.distance(e) <= sc.distances.tracking_distance || slice == g.time_cells {
                break;
            }
            integral += escape.rate(pos, e, focal) * g.dt;
            if let Some(dir) = (e - pos).normalized() {
                pos += dir * (speed * g.dt);
            }
            slice += 1;
        }
        let tracking_time = (slice - m) as f64 * g.dt;
        let survival = (-integral).exp();
        let continuation = if slice == g.time_cells {
            self.stationary.value_at(g, pos)
        } else {
            later.interp(pos, g.time(slice))
        };
        let on_escape = if m == g.time_cells {
            self.stationary.value_at(g, z)
        } else {
            sc.chase_energy(z, g.time(m))
        };
        let hover = sc.speeds.idle_power * (g.time(m) - g.time(k));
        let value = hover
            + survival * (continuation + self.stalk_rate(speed * speed) * tracking_time)
            + (1.0 - survival) * on_escape;
        Ok(HoverValue { value, visible_slice: m, tracking_time, tracked_to: pos, survival })
    }
}

/// One solved slice.
pub struct SliceOutput {
    pub values: Vec<f64>,
    pub velocities: Vec<Vec2>,
    pub classes: Vec<NodeClass>,
    pub infeasible: usize,
}

/// Solves slice `k` from the later slices. `ever_visible` marks nodes
/// visible at some grid time in `[t_k, T*]`.
pub fn sl_step(ctx: &TimeContext, k: usize, later: &LaterSlices, ever_visible: &[bool]) -> SliceOutput {
    let sc = ctx.scenario;
    let g = ctx.grid;
    let e = sc.path.at(g.time(k));
    // Capture nodes of the next slice stand in for the trigger circle when
    // they support a foot point outside the ball.
    let mut next = later.slice(k + 1).to_vec();
    let boundary = sc.chase_model().energy_rate * sc.chase_model().capture_time_from_gap(sc.distances.chase_trigger);
    for idx in g.nodes_within(sc.path.at(g.time(k + 1)), sc.distances.chase_trigger) {
        next[idx] = boundary;
    }
    let next = next.as_slice();
    let speed = sc.speeds.stalk_speed;
    let chase = sc.chase_model();
    let n = g.n();

    let results: Vec<(f64, Vec2, NodeClass, bool)> = (0..g.slice_len())
        .into_par_iter()
        .map(|idx| {
            if !ever_visible[idx] {
                return (f64::INFINITY, Vec2::ZERO, NodeClass::Disallowed, false);
            }
            let z = g.node_at(idx);
            let dist = z.distance(e);
            if dist <= sc.distances.chase_trigger {
                let heading = (e - z).normalized().unwrap_or(Vec2::ZERO);
                return (chase.chase_energy(z, e), heading * speed, NodeClass::Capture, false);
            }
            if dist > sc.distances.visual_range {
                let value = ctx.hovering_value(z, k, later).map(|h| h.value).unwrap_or(f64::INFINITY);
                return (value, Vec2::ZERO, NodeClass::Hovering, false);
            }
            let objective = ctx.objective(k, z, next);
            match coarse_search(&objective, speed, &ctx.optimizer) {
                Ok(coarse) => {
                    let mut rng = node_rng(ctx.seed, idx / n, idx % n, k);
                    let best = refine(coarse, &objective, speed, &ctx.optimizer, &mut rng).best;
                    (best.value, best.velocity, NodeClass::Visible, false)
                }
                Err(_) => (f64::INFINITY, Vec2::ZERO, NodeClass::Visible, true),
            }
        })
        .collect();

    let mut out = SliceOutput {
        values: Vec::with_capacity(results.len()),
        velocities: Vec::with_capacity(results.len()),
        classes: Vec::with_capacity(results.len()),
        infeasible: 0,
    };
    for (v, vel, class, infeasible) in results {
        out.values.push(v);
        out.velocities.push(vel);
        out.classes.push(class);
        out.infeasible += infeasible as usize;
    }
    out
}

/// Backward solve over all slices.
pub fn solve_time_dependent(
    scenario: &Scenario,
    grid: &Grid,
    stationary: &StationarySolution,
    optimizer: HitAndRunParams,
    seed: u64,
) -> TimeDependentSolution {
    solve_time_dependent_with(scenario, grid, stationary, optimizer, seed, |_| {})
}

/// As [`solve_time_dependent`], calling `progress(k)` after each slice.
pub fn solve_time_dependent_with<P: FnMut(usize)>(
    scenario: &Scenario,
    grid: &Grid,
    stationary: &StationarySolution,
    optimizer: HitAndRunParams,
    seed: u64,
    mut progress: P,
) -> TimeDependentSolution {
    let len = grid.slice_len();
    let last = grid.time_cells;
    let mut values = ScalarField3::filled(grid, f64::INFINITY);
    let mut policy = PolicyField::zeros(grid);
    let mut classes = vec![NodeClass::Disallowed as u8; len * grid.slices()];

    let flower = scenario.path.flower();
    let mut ever_visible = vec![false; len];
    for idx in grid.nodes_within(flower, scenario.distances.visual_range) {
        ever_visible[idx] = true;
        let at = last * len + idx;
        values.values[at] = stationary.values.values[idx];
        policy.vx[at] = stationary.policy.vx[idx];
        policy.vy[at] = stationary.policy.vy[idx];
        let capture = grid.node_at(idx).distance(flower) <= scenario.distances.chase_trigger;
        classes[at] = if capture { NodeClass::Capture } else { NodeClass::Visible } as u8;
    }

    let ctx = TimeContext { scenario, grid, stationary, optimizer, seed };
    let mut infeasible_nodes = 0;
    for k in (0..last).rev() {
        for idx in grid.nodes_within(scenario.path.at(grid.time(k)), scenario.distances.visual_range) {
            ever_visible[idx] = true;
        }
        let (head, tail) = values.values.split_at_mut((k + 1) * len);
        let later = LaterSlices { grid, first: k + 1, values: tail };
        let out = sl_step(&ctx, k, &later, &ever_visible);
        head[k * len..].copy_from_slice(&out.values);
        for (idx, v) in out.velocities.iter().enumerate() {
            policy.vx[k * len + idx] = v.x;
            policy.vy[k * len + idx] = v.y;
        }
        for (idx, c) in out.classes.iter().enumerate() {
            classes[k * len + idx] = *c as u8;
        }
        infeasible_nodes += out.infeasible;
        progress(k);
    }
    TimeDependentSolution { values, policy, classes, infeasible_nodes }
}
