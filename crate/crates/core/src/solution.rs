//! Full solve pipeline: grid, stationary value, then the backward sweep.

use thiserror::Error;

use crate::dynamic::{solve_time_dependent_with, TimeDependentSolution};
use crate::environment::Scenario;
use crate::grid::{Grid, GridError};
use crate::stationary::{solve_stationary, StationaryError, StationaryParams, StationarySolution};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
}

/// Solved value and policy fields for one scenario.
#[derive(Clone, Debug)]
pub struct Solution {
    pub grid: Grid,
    pub stationary: StationarySolution,
    pub dynamic: TimeDependentSolution,
}

/// Grid described by the scenario's config, with the CFL bound enforced.
pub fn scenario_grid(scenario: &Scenario) -> Result<Grid, GridError> {
    let g = scenario.config.grid;
    Grid::build(g.extent, g.cells, g.time_cells, scenario.speeds.stalk_speed, &scenario.path, scenario.distances.visual_range)
}

pub fn solve(scenario: &Scenario, stationary: &StationaryParams) -> Result<Solution, SolveError> {
    solve_with_progress(scenario, stationary, |_| {})
}

/// As [`solve`], reporting each finished time slice index.
pub fn solve_with_progress<P: FnMut(usize)>(
    scenario: &Scenario,
    stationary: &StationaryParams,
    progress: P,
) -> Result<Solution, SolveError> {
    let grid = scenario_grid(scenario)?;
    let w = solve_stationary(scenario, &grid, stationary)?;
    let dynamic =
        solve_time_dependent_with(scenario, &grid, &w, scenario.hit_and_run(), scenario.config.seed, progress);
    Ok(Solution { grid, stationary: w, dynamic })
}

impl Solution {
    /// `u(z, 0)`, the expected energy from `z` at the start.
    pub fn initial_value(&self, z: crate::geometry::Vec2) -> f64 {
        self.dynamic.value_at(&self.grid, z, 0.0)
    }
}
