//! Stationary value `w` after the evader has settled on the flower.
//!
//! The pursuer moves at exactly `F_P`. Each node is updated from the four
//! right-triangle simplexes of its five-point stencil: the pursuer flies to a
//! point on the far edge of a simplex, paying `K τ`, and either the evader
//! escapes first (chase cost `δ` from the arrival point) or it does not
//! (value interpolated along the edge). Paths that enter the trigger ball
//! part-way along the edge stop there and pay the chase cost from the entry
//! point. Nodes are swept Gauss–Seidel style in the four diagonal orderings
//! until the largest update in a cycle drops below the tolerance.

use rayon::prelude::*;
use thiserror::Error;

use crate::chase::ChaseModel;
use crate::environment::Scenario;
use crate::escape::EscapeModel;
use crate::geometry::{first_entry, Vec2};
use crate::grid::{Grid, ScalarField2, VectorField2};

/// Sample count of the uniform seed search along a simplex edge.
const EDGE_SAMPLES: usize = 11;
/// Tolerance of the golden-section refinement along the edge.
const EDGE_TOLERANCE: f64 = 1e-6;

/// Order in which a Gauss–Seidel sweep visits the nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    /// i ascending, j ascending
    UpUp,
    /// i descending, j ascending
    DownUp,
    /// i descending, j descending
    DownDown,
    /// i ascending, j descending
    UpDown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    GaussSeidel,
    /// Every node updated from the previous iterate, in parallel.
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationaryParams {
    /// Convergence threshold on the largest node update in a cycle (J).
    pub tolerance: f64,
    /// Cap on sweep cycles (Jacobi iterations are capped at four times this).
    pub max_cycles: usize,
    pub mode: SweepMode,
    pub order: [Sweep; 4],
}

impl Default for StationaryParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_cycles: 500,
            mode: SweepMode::GaussSeidel,
            order: [Sweep::UpUp, Sweep::DownUp, Sweep::DownDown, Sweep::UpDown],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationarySolution {
    /// `w` on the grid; `+∞` outside the disk of visual range around the flower.
    pub values: ScalarField2,
    /// Minimizing velocity (speed `F_P`) at every finite node.
    pub policy: VectorField2,
    pub cycles: usize,
    pub residual: f64,
}

impl StationarySolution {
    /// `w(z)` by bilinear interpolation over the finite corners; `+∞` outside the grid or the disk.
    pub fn value_at(&self, grid: &Grid, z: Vec2) -> f64 {
        grid.bilinear_finite(&self.values.values, z).unwrap_or(f64::INFINITY)
    }

    /// Interpolated minimizing velocity from the finite corners around `z`.
    pub fn velocity_at(&self, grid: &Grid, z: Vec2) -> Option<Vec2> {
        crate::grid::interp_velocity(grid, &self.policy.vx, &self.policy.vy, &self.values.values, z)
    }
}

#[derive(Debug, Error)]
pub enum StationaryError {
    #[error("stationary solve did not converge after {cycles} cycles (largest update {residual:e} J)")]
    NotConverged { cycles: usize, residual: f64, solution: Box<StationarySolution> },
}

/// Everything a single node update needs, fixed for the whole solve.
#[derive(Clone, Copy, Debug)]
pub struct StationaryStencil {
    pub flower: Vec2,
    pub focal: Vec2,
    pub visual_range: f64,
    pub chase_trigger: f64,
    pub stalk_speed: f64,
    /// `W + F_P^2 / 2`.
    pub stalk_energy_rate: f64,
    pub chase: ChaseModel,
    pub escape: EscapeModel,
}

/// A simplex vertex: its position and current value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub point: Vec2,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexCandidate {
    pub value: f64,
    /// Weight on the first vertex.
    pub weight: f64,
    /// Unit heading towards the chosen edge point.
    pub direction: Vec2,
}

impl StationaryStencil {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            flower: scenario.path.flower(),
            focal: scenario.path.focal_point(),
            visual_range: scenario.distances.visual_range,
            chase_trigger: scenario.distances.chase_trigger,
            stalk_speed: scenario.speeds.stalk_speed,
            stalk_energy_rate: scenario.speeds.energy_rate(scenario.speeds.stalk_speed),
            chase: scenario.chase_model(),
            escape: scenario.escape_model(),
        }
    }

    #[inline]
    pub fn rate(&self, z: Vec2) -> f64 {
        self.escape.rate(z, self.flower, self.focal)
    }

    #[inline]
    pub fn chase_energy(&self, z: Vec2) -> f64 {
        self.chase.chase_energy(z, self.flower)
    }

    /// Chase energy from the edge of the trigger ball.
    #[inline]
    pub fn trigger_value(&self) -> f64 {
        self.chase.energy_rate * self.chase.capture_time_from_gap(self.chase_trigger)
    }

    /// Candidate value for moving from `z` to `xi a + (1 - xi) b`.
    #[inline]
    fn edge_value(&self, z: Vec2, rate: f64, a: Vertex, b: Vertex, xi: f64) -> f64 {
        let target = a.point * xi + b.point * (1.0 - xi);
        let step = target - z;
        let tau = step.norm() / self.stalk_speed;
        if let Some(s) = first_entry(z, target, self.flower, self.flower, self.chase_trigger) {
            return self.stalk_energy_rate * tau * s + self.chase_energy(z + step * s);
        }
        let mut carried = 0.0;
        for (w, v) in [(xi, a.value), (1.0 - xi, b.value)] {
            if w > 0.0 {
                if v == f64::INFINITY {
                    return f64::INFINITY;
                }
                carried += w * v;
            }
        }
        let survive = (-rate * tau).exp();
        self.stalk_energy_rate * tau + survive * carried + (1.0 - survive) * self.chase_energy(target)
    }

    /// Minimizes the candidate over the simplex edge between `a` and `b`.
    pub fn simplex_update(&self, z: Vec2, rate: f64, a: Vertex, b: Vertex) -> SimplexCandidate {
        let f = |xi: f64| self.edge_value(z, rate, a, b, xi);
        let mut best_xi = 0.0;
        let mut best = f64::INFINITY;
        for m in 0..EDGE_SAMPLES {
            let xi = m as f64 / (EDGE_SAMPLES - 1) as f64;
            let v = f(xi);
            if v < best {
                best = v;
                best_xi = xi;
            }
        }
        if best.is_finite() {
            let half = 1.0 / (EDGE_SAMPLES - 1) as f64;
            let (xi, v) = golden_section(&f, (best_xi - half).max(0.0), (best_xi + half).min(1.0), EDGE_TOLERANCE);
            if v < best {
                best = v;
                best_xi = xi;
            }
        }
        let target = a.point * best_xi + b.point * (1.0 - best_xi);
        SimplexCandidate { value: best, weight: best_xi, direction: (target - z).normalized().unwrap_or(Vec2::ZERO) }
    }
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

struct Problem<'a> {
    grid: &'a Grid,
    stencil: StationaryStencil,
    in_domain: Vec<bool>,
    rates: Vec<f64>,
    /// Nodes updated by the sweeps.
    active: Vec<bool>,
    /// Nodes inside the trigger ball.
    capture: Vec<bool>,
}

impl Problem<'_> {
    /// Vertex for neighbour `(i + di, j + dj)`; neighbours outside the
    /// visible disk are projected radially onto its boundary.
    #[inline]
    fn vertex(&self, values: &[f64], i: usize, j: usize, di: isize, dj: isize) -> Vertex {
        let g = self.grid;
        let (ni, nj) = (i as isize + di, j as isize + dj);
        let (lo, hi) = (0isize, g.cells as isize);
        if (lo..=hi).contains(&ni) && (lo..=hi).contains(&nj) {
            let idx = g.index(ni as usize, nj as usize);
            if self.in_domain[idx] {
                let point = g.node(ni as usize, nj as usize);
                // Capture nodes hold the steep chase cost; as support for a
                // foot point outside the ball they stand in for the boundary.
                let value = if self.capture[idx] { self.stencil.trigger_value() } else { values[idx] };
                return Vertex { point, value };
            }
        }
        let raw = Vec2::new(ni as f64 * g.dx, nj as f64 * g.dx);
        let s = &self.stencil;
        let point = match (raw - s.flower).normalized() {
            Some(dir) => s.flower + dir * s.visual_range,
            None => raw,
        };
        Vertex { point, value: self.rim_value(values, point) }
    }

    /// Interpolates at a point on the disk boundary over the in-domain
    /// corners only. A corner not yet reached by the sweeps keeps the
    /// vertex at `+∞`, so the iteration still starts from above.
    fn rim_value(&self, values: &[f64], point: Vec2) -> f64 {
        let Some(st) = self.grid.stencil(point) else { return f64::INFINITY };
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (idx, w) in st {
            if w > 0.0 && self.in_domain[idx] {
                if values[idx] == f64::INFINITY {
                    return f64::INFINITY;
                }
                acc += w * values[idx];
                wsum += w;
            }
        }
        if wsum > 0.0 {
            acc / wsum
        } else {
            f64::INFINITY
        }
    }

    /// Best value and heading at node `(i, j)` from the current values.
    fn update(&self, values: &[f64], i: usize, j: usize) -> (f64, Vec2) {
        const SIMPLEXES: [((isize, isize), (isize, isize)); 4] =
            [((1, 0), (0, 1)), ((0, 1), (-1, 0)), ((-1, 0), (0, -1)), ((0, -1), (1, 0))];
        let z = self.grid.node(i, j);
        let rate = self.rates[self.grid.index(i, j)];
        let mut best = (f64::INFINITY, Vec2::ZERO);
        for ((ai, aj), (bi, bj)) in SIMPLEXES {
            let a = self.vertex(values, i, j, ai, aj);
            let b = self.vertex(values, i, j, bi, bj);
            let cand = self.stencil.simplex_update(z, rate, a, b);
            if cand.value < best.0 {
                best = (cand.value, cand.direction);
            }
        }
        best
    }
}

fn sweep_indices(n: usize, sweep: Sweep) -> impl Iterator<Item = (usize, usize)> {
    let (i_up, j_up) = match sweep {
        Sweep::UpUp => (true, true),
        Sweep::DownUp => (false, true),
        Sweep::DownDown => (false, false),
        Sweep::UpDown => (true, false),
    };
    (0..n).flat_map(move |a| {
        let i = if i_up { a } else { n - 1 - a };
        (0..n).map(move |b| (i, if j_up { b } else { n - 1 - b }))
    })
}

#[inline]
fn change(old: f64, new: f64) -> f64 {
    if old == new {
        0.0
    } else {
        (old - new).abs()
    }
}

/// Solves for `w` with the default sweeps and no observer.
pub fn solve_stationary(scenario: &Scenario, grid: &Grid, params: &StationaryParams) -> Result<StationarySolution, StationaryError> {
    solve_stationary_with(scenario, grid, params, |_, _| {})
}

/// As [`solve_stationary`], calling `observe(cycle, values)` after every cycle.
pub fn solve_stationary_with<O>(
    scenario: &Scenario,
    grid: &Grid,
    params: &StationaryParams,
    mut observe: O,
) -> Result<StationarySolution, StationaryError>
where
    O: FnMut(usize, &[f64]),
{
    let stencil = StationaryStencil::new(scenario);
    let len = grid.slice_len();
    let mut in_domain = vec![false; len];
    for idx in grid.nodes_within(stencil.flower, stencil.visual_range) {
        in_domain[idx] = true;
    }
    let mut values = vec![f64::INFINITY; len];
    let mut policy = VectorField2::zeros(len);
    let mut active = in_domain.clone();
    let mut rates = vec![0.0; len];
    for idx in 0..len {
        if !in_domain[idx] {
            continue;
        }
        let z = grid.node_at(idx);
        rates[idx] = stencil.rate(z);
        if z.distance(stencil.flower) <= stencil.chase_trigger {
            active[idx] = false;
            values[idx] = stencil.chase_energy(z);
            let heading = (stencil.flower - z).normalized().unwrap_or(Vec2::ZERO);
            policy.set(idx, heading * stencil.stalk_speed);
        }
    }
    let capture: Vec<bool> = active.iter().zip(&in_domain).map(|(&a, &d)| d && !a).collect();
    let problem = Problem { grid, stencil, in_domain, rates, active, capture };
    let n = grid.n();
    let speed = stencil.stalk_speed;

    let mut residual = f64::INFINITY;
    let mut cycles = 0;
    match params.mode {
        SweepMode::GaussSeidel => {
            while cycles < params.max_cycles {
                cycles += 1;
                residual = 0.0;
                for sweep in params.order {
                    for (i, j) in sweep_indices(n, sweep) {
                        let idx = grid.index(i, j);
                        if !problem.active[idx] {
                            continue;
                        }
                        let (v, dir) = problem.update(&values, i, j);
                        residual = residual.max(change(values[idx], v));
                        values[idx] = v;
                        policy.set(idx, dir * speed);
                    }
                }
                observe(cycles, &values);
                if residual < params.tolerance {
                    break;
                }
            }
        }
        SweepMode::Jacobi => {
            let cap = params.max_cycles * 4;
            while cycles < cap {
                cycles += 1;
                let updates: Vec<(usize, f64, Vec2)> = (0..len)
                    .into_par_iter()
                    .filter(|&idx| problem.active[idx])
                    .map(|idx| {
                        let (v, dir) = problem.update(&values, idx / n, idx % n);
                        (idx, v, dir)
                    })
                    .collect();
                residual = 0.0;
                for (idx, v, dir) in updates {
                    residual = residual.max(change(values[idx], v));
                    values[idx] = v;
                    policy.set(idx, dir * speed);
                }
                observe(cycles, &values);
                if residual < params.tolerance {
                    break;
                }
            }
        }
    }

    let solution = StationarySolution { values: ScalarField2 { n, values }, policy, cycles, residual };
    if residual < params.tolerance {
        Ok(solution)
    } else {
        Err(StationaryError::NotConverged { cycles, residual, solution: Box::new(solution) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::PursuitConfig;
    use crate::escape::RateParams;

    fn scenario(amplitude: f64, cells: usize) -> Scenario {
        let mut cfg = PursuitConfig::with_rate(RateParams { amplitude, acuity: 0.05, tolerance: 0.4 });
        cfg.grid.cells = cells;
        cfg.grid.time_cells = 4 * cells;
        Scenario::from_config(&cfg).unwrap()
    }

    fn grid(sc: &Scenario) -> Grid {
        let g = sc.config.grid;
        Grid::build(g.extent, g.cells, g.time_cells, sc.speeds.stalk_speed, &sc.path, sc.distances.visual_range).unwrap()
    }

    #[test]
    fn endpoint_is_axis_step() {
        let sc = scenario(2.0, 200);
        let st = StationaryStencil::new(&sc);
        let z = st.flower + Vec2::new(0.4, 0.0);
        let rate = st.rate(z);
        let dx = 0.02;
        let a = Vertex { point: z + Vec2::new(dx, 0.0), value: 5.0 };
        let b = Vertex { point: z + Vec2::new(0.0, dx), value: f64::INFINITY };
        let cand = st.simplex_update(z, rate, a, b);
        let tau = dx / 4.0;
        let p = (-rate * tau).exp();
        let want = 11.0 * tau + p * 5.0 + (1.0 - p) * st.chase_energy(a.point);
        assert_eq!(cand.weight, 1.0);
        assert!((cand.value - want).abs() < 1e-12);
        assert_eq!(cand.direction, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn rate_free_update_is_travel_plus_value() {
        let sc = scenario(0.0, 200);
        let st = StationaryStencil::new(&sc);
        let z = st.flower + Vec2::new(0.3, 0.3);
        // values of an exactly linear function along the edge
        let a = Vertex { point: z + Vec2::new(-0.02, 0.0), value: 1.0 };
        let b = Vertex { point: z + Vec2::new(0.0, -0.02), value: 1.0 };
        let cand = st.simplex_update(z, 0.0, a, b);
        // best is the edge midpoint, distance 0.02/√2
        let want = 11.0 * (0.02 / 2f64.sqrt()) / 4.0 + 1.0;
        assert!((cand.value - want).abs() < 1e-9, "{} vs {want}", cand.value);
        assert!((cand.weight - 0.5).abs() < 1e-5);
    }

    #[test]
    fn capture_nodes_hold_chase_energy() {
        let sc = scenario(3.0, 100);
        let g = grid(&sc);
        let sol = solve_stationary(&sc, &g, &StationaryParams::default()).unwrap();
        let st = StationaryStencil::new(&sc);
        let mut seen = 0;
        for idx in g.nodes_within(st.flower, st.chase_trigger) {
            assert_eq!(sol.values.values[idx], st.chase_energy(g.node_at(idx)));
            seen += 1;
        }
        assert!(seen > 0);
        for idx in 0..g.slice_len() {
            let v = sol.values.values[idx];
            let inside = g.node_at(idx).distance(st.flower) <= st.visual_range;
            assert_eq!(v.is_finite(), inside);
            if inside {
                assert!(v >= 0.0);
                assert!(sol.policy.get(idx).norm() <= 4.0 + 1e-9);
            }
        }
    }

    #[test]
    fn huge_rate_collapses_to_chase_energy() {
        let mut cfg = PursuitConfig::with_rate(RateParams { amplitude: 1e9, acuity: 0.05, tolerance: 0.0 });
        cfg.grid.cells = 100;
        cfg.grid.time_cells = 400;
        let sc = Scenario::from_config(&cfg).unwrap();
        let g = grid(&sc);
        let sol = solve_stationary(&sc, &g, &StationaryParams::default()).unwrap();
        let st = StationaryStencil::new(&sc);
        for idx in g.nodes_within(st.flower, st.visual_range) {
            let z = g.node_at(idx);
            let d = st.chase_energy(z);
            // within one stalk step of the immediate-chase value
            assert!((sol.values.values[idx] - d).abs() <= 11.0 * 0.04 / 4.0 + 20.3 * 0.04 + 1e-9);
        }
    }

    #[test]
    fn not_converged_reports_residual() {
        let sc = scenario(3.0, 100);
        let g = grid(&sc);
        let params = StationaryParams { max_cycles: 1, ..Default::default() };
        match solve_stationary(&sc, &g, &params) {
            Err(StationaryError::NotConverged { cycles, residual, .. }) => {
                assert_eq!(cycles, 1);
                assert!(residual > 0.0);
            }
            Ok(_) => panic!("one cycle cannot converge from +∞"),
        }
    }
}
