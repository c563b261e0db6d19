//! Cartesian space-time grid, scalar/vector fields on it, visibility and
//! capture masks, and multilinear interpolation.
//!
//! Node `(i, j, k)` sits at `(i dx, j dx, k dt)`. Spatial arrays are
//! row-major over `(i, j)`: index `i * n + j` with `n = cells + 1`.
//! Disallowed nodes hold `+∞`, and interpolation propagates it.

use thiserror::Error;

use crate::environment::{cfl_time_step, domain_contains_visibility, EvaderPath};
use crate::geometry::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("need at least 2 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("domain [0, {0}]^2 does not contain every point within visual range of the route")]
    DomainTooSmall(f64),
    #[error("query ({x}, {y}, t = {t}) lies outside the grid")]
    OutOfHull { x: f64, y: f64, t: f64 },
}

/// Uniform space-time grid over `[0, extent]^2 × [0, T*]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub extent: f64,
    pub cells: usize,
    pub time_cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub final_time: f64,
}

impl Grid {
    /// Builds the grid, raising `time_cells` as needed to satisfy the CFL
    /// bound `dt <= sqrt(2) dx / F_P`.
    pub fn build(
        extent: f64,
        cells: usize,
        requested_time_cells: usize,
        stalk_speed: f64,
        path: &EvaderPath,
        visual_range: f64,
    ) -> Result<Self, GridError> {
        if cells < 2 {
            return Err(GridError::TooFewCells(cells));
        }
        if !domain_contains_visibility(path, visual_range, extent) {
            return Err(GridError::DomainTooSmall(extent));
        }
        let dx = extent / cells as f64;
        let final_time = path.arrival_time();
        let bound = cfl_time_step(dx, stalk_speed);
        let mut time_cells = requested_time_cells.max(1).max((final_time / bound).ceil() as usize);
        while final_time / time_cells as f64 > bound {
            time_cells += 1;
        }
        Ok(Self { extent, cells, time_cells, dx, dt: final_time / time_cells as f64, final_time })
    }

    /// Rebuilds a grid from stored dimensions without any checks.
    pub fn from_parts(extent: f64, cells: usize, time_cells: usize, final_time: f64) -> Self {
        Self {
            extent,
            cells,
            time_cells,
            dx: extent / cells as f64,
            dt: final_time / time_cells as f64,
            final_time,
        }
    }

    /// Nodes per spatial axis.
    #[inline]
    pub fn n(&self) -> usize {
        self.cells + 1
    }

    /// Nodes per time slice.
    #[inline]
    pub fn slice_len(&self) -> usize {
        self.n() * self.n()
    }

    #[inline]
    pub fn slices(&self) -> usize {
        self.time_cells + 1
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n() + j
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(i as f64 * self.dx, j as f64 * self.dx)
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> Vec2 {
        self.node(idx / self.n(), idx % self.n())
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.time_cells {
            self.final_time
        } else {
            k as f64 * self.dt
        }
    }

    pub fn cfl_bound(&self, stalk_speed: f64) -> f64 {
        cfl_time_step(self.dx, stalk_speed)
    }

    #[inline]
    pub fn contains(&self, z: Vec2) -> bool {
        let slack = 1e-12 * self.extent;
        z.x >= -slack && z.y >= -slack && z.x <= self.extent + slack && z.y <= self.extent + slack
    }

    /// Enclosing cell and fractional offsets for a point inside the hull.
    #[inline]
    fn cell(&self, z: Vec2) -> Option<(usize, usize, f64, f64)> {
        if !self.contains(z) {
            return None;
        }
        let last = self.cells - 1;
        let gx = (z.x / self.dx).max(0.0);
        let gy = (z.y / self.dx).max(0.0);
        let i = (gx.floor() as usize).min(last);
        let j = (gy.floor() as usize).min(last);
        Some((i, j, (gx - i as f64).min(1.0), (gy - j as f64).min(1.0)))
    }

    /// Bilinear weights `(index, weight)` of the four corners around `z`.
    #[inline]
    pub fn stencil(&self, z: Vec2) -> Option<[(usize, f64); 4]> {
        let (i, j, fx, fy) = self.cell(z)?;
        let base = self.index(i, j);
        let n = self.n();
        Some([
            (base, (1.0 - fx) * (1.0 - fy)),
            (base + n, fx * (1.0 - fy)),
            (base + 1, (1.0 - fx) * fy),
            (base + n + 1, fx * fy),
        ])
    }

    /// Bilinear interpolation of a slice; `None` outside the hull. Corners
    /// with non-zero weight holding `+∞` make the result `+∞`.
    #[inline]
    pub fn bilinear(&self, values: &[f64], z: Vec2) -> Option<f64> {
        let st = self.stencil(z)?;
        let mut acc = 0.0;
        for (idx, w) in st {
            if w > 0.0 {
                let v = values[idx];
                if v == f64::INFINITY {
                    return Some(f64::INFINITY);
                }
                acc += w * v;
            }
        }
        Some(acc)
    }

    /// Bilinear interpolation over the finite corners only, with weights
    /// renormalized; `None` if no weighted corner is finite or `z` is
    /// outside the hull.
    pub fn bilinear_finite(&self, values: &[f64], z: Vec2) -> Option<f64> {
        let st = self.stencil(z)?;
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (idx, w) in st {
            if w > 0.0 && values[idx].is_finite() {
                acc += w * values[idx];
                wsum += w;
            }
        }
        (wsum > 0.0).then(|| acc / wsum)
    }

    /// Nodes within `radius` of `center` (closed ball), as slice indices.
    pub fn nodes_within(&self, center: Vec2, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let lo = |c: f64| (((c - radius) / self.dx).ceil().max(0.0)) as usize;
        let hi = |c: f64| ((((c + radius) / self.dx).floor()).max(-1.0) as isize).min(self.cells as isize);
        let (i0, i1) = (lo(center.x), hi(center.x));
        let (j0, j1) = (lo(center.y), hi(center.y));
        let r2 = radius * radius;
        (i0 as isize..=i1).flat_map(move |i| (j0 as isize..=j1).map(move |j| (i as usize, j as usize))).filter_map(
            move |(i, j)| {
                let z = self.node(i, j);
                ((z - center).norm_sq() <= r2).then(|| self.index(i, j))
            },
        )
    }
}

/// Scalar field on one spatial slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField2 {
    pub n: usize,
    pub values: Vec<f64>,
}

impl ScalarField2 {
    pub fn filled(grid: &Grid, value: f64) -> Self {
        Self { n: grid.n(), values: vec![value; grid.slice_len()] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn interp(&self, grid: &Grid, z: Vec2) -> Result<f64, GridError> {
        grid.bilinear(&self.values, z).ok_or(GridError::OutOfHull { x: z.x, y: z.y, t: f64::NAN })
    }
}

/// Scalar field over all time slices, stored slice after slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField3 {
    pub slice_len: usize,
    pub slices: usize,
    pub values: Vec<f64>,
}

impl ScalarField3 {
    pub fn filled(grid: &Grid, value: f64) -> Self {
        Self { slice_len: grid.slice_len(), slices: grid.slices(), values: vec![value; grid.slice_len() * grid.slices()] }
    }

    #[inline]
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k * self.slice_len..(k + 1) * self.slice_len]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.slice_len..(k + 1) * self.slice_len]
    }

    /// Trilinear interpolation in `(x, y, t)`.
    pub fn interp(&self, grid: &Grid, z: Vec2, t: f64) -> Result<f64, GridError> {
        let oob = GridError::OutOfHull { x: z.x, y: z.y, t };
        let slack = 1e-12 * grid.final_time.max(1.0);
        if !(t >= -slack && t <= grid.final_time + slack) {
            return Err(oob);
        }
        let gt = (t / grid.dt).clamp(0.0, grid.time_cells as f64);
        let k = (gt.floor() as usize).min(grid.time_cells - 1);
        let ft = (gt - k as f64).min(1.0);
        let lower = grid.bilinear(self.slice(k), z).ok_or(oob)?;
        if ft == 0.0 {
            return Ok(lower);
        }
        let upper = grid.bilinear(self.slice(k + 1), z).expect("hull already checked");
        if ft == 1.0 {
            return Ok(upper);
        }
        if lower == f64::INFINITY || upper == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok((1.0 - ft) * lower + ft * upper)
    }
}

/// Velocity field on a single slice, split into components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VectorField2 {
    pub fn zeros(len: usize) -> Self {
        Self { vx: vec![0.0; len], vy: vec![0.0; len] }
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Vec2 {
        Vec2::new(self.vx[idx], self.vy[idx])
    }

    #[inline]
    pub fn set(&mut self, idx: usize, v: Vec2) {
        self.vx[idx] = v.x;
        self.vy[idx] = v.y;
    }
}

/// Per-slice optimal velocities, stored slice after slice like [`ScalarField3`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyField {
    pub slice_len: usize,
    pub slices: usize,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl PolicyField {
    pub fn zeros(grid: &Grid) -> Self {
        let len = grid.slice_len() * grid.slices();
        Self { slice_len: grid.slice_len(), slices: grid.slices(), vx: vec![0.0; len], vy: vec![0.0; len] }
    }

    #[inline]
    pub fn get(&self, k: usize, idx: usize) -> Vec2 {
        let at = k * self.slice_len + idx;
        Vec2::new(self.vx[at], self.vy[at])
    }

    pub fn slice_x(&self, k: usize) -> &[f64] {
        &self.vx[k * self.slice_len..(k + 1) * self.slice_len]
    }

    pub fn slice_y(&self, k: usize) -> &[f64] {
        &self.vy[k * self.slice_len..(k + 1) * self.slice_len]
    }
}

/// Interpolates a velocity field at `z`, using only corners whose value in
/// `values` is finite. `None` when no such corner carries weight.
pub fn interp_velocity(grid: &Grid, vx: &[f64], vy: &[f64], values: &[f64], z: Vec2) -> Option<Vec2> {
    let st = grid.stencil(z)?;
    let (mut acc, mut wsum) = (Vec2::ZERO, 0.0);
    for (idx, w) in st {
        if w > 0.0 && values[idx].is_finite() {
            acc += Vec2::new(vx[idx], vy[idx]) * w;
            wsum += w;
        }
    }
    (wsum > 0.0).then(|| acc * (1.0 / wsum))
}

/// Marks nodes within `radius` of `center`.
pub fn disk_mask(grid: &Grid, center: Vec2, radius: f64) -> Vec<bool> {
    let mut mask = vec![false; grid.slice_len()];
    for idx in grid.nodes_within(center, radius) {
        mask[idx] = true;
    }
    mask
}

/// Nodes visible to the evader at some grid time in `[t, T*]` (and at `t`
/// itself).
pub fn ever_visible_mask(grid: &Grid, path: &EvaderPath, visual_range: f64, t: f64) -> Vec<bool> {
    let mut mask = disk_mask(grid, path.at(t), visual_range);
    let first = ((t / grid.dt) - 1e-9).ceil().max(0.0) as usize;
    for k in first..=grid.time_cells {
        for idx in grid.nodes_within(path.at(grid.time(k)), visual_range) {
            mask[idx] = true;
        }
    }
    mask
}

/// Nodes inside the closed trigger ball around the evader at time `t`.
pub fn capture_region_mask(grid: &Grid, path: &EvaderPath, chase_trigger: f64, t: f64) -> Vec<bool> {
    disk_mask(grid, path.at(t), chase_trigger)
}
