//! On-disk formats: gridded field dumps, CSV exports, and atomic writes.
//!
//! A field dump is a pair of files: `<stem>.json` holds a [`FieldHeader`],
//! `<stem>.bin` the raw little-endian values, laid out component by
//! component, then slice by slice, then row-major over `(i, j)` with `j`
//! fastest. `+∞` is stored as the IEEE infinity.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamic::TimeDependentSolution;
use crate::grid::{Grid, PolicyField, ScalarField2, ScalarField3, VectorField2};
use crate::solution::Solution;
use crate::stationary::StationarySolution;
use crate::tracer::Trajectory;

pub const FIELD_FORMAT: &str = "camo-field";
pub const FIELD_FORMAT_VERSION: u32 = 1;
pub const LAYOUT: &str = "component, k, i, j; row-major, j fastest";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad header: {source}")]
    Header { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {reason}")]
    Mismatch { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DumpError + '_ {
    move |source| DumpError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DType {
    F64Le,
    U8,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F64Le => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub dtype: DType,
    pub layout: String,
    /// Component names, e.g. `["value"]` or `["vx", "vy"]`.
    pub components: Vec<String>,
    pub nx: usize,
    pub ny: usize,
    /// Number of time slices stored (1 for a single slice).
    pub slices: usize,
    /// Index of the first stored slice, `None` for stationary fields.
    pub time_index: Option<usize>,
    /// Time of the first stored slice (s), `None` for stationary fields.
    pub time: Option<f64>,
    pub extent: f64,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub time_cells: usize,
    pub final_time: f64,
    pub config_hash: String,
}

impl FieldHeader {
    pub fn new(grid: &Grid, name: &str, components: &[&str], config_hash: &str) -> Self {
        Self {
            format: FIELD_FORMAT.into(),
            version: FIELD_FORMAT_VERSION,
            name: name.into(),
            dtype: DType::F64Le,
            layout: LAYOUT.into(),
            components: components.iter().map(|c| c.to_string()).collect(),
            nx: grid.n(),
            ny: grid.n(),
            slices: 1,
            time_index: None,
            time: None,
            extent: grid.extent,
            dx: grid.dx,
            dy: grid.dx,
            dt: grid.dt,
            time_cells: grid.time_cells,
            final_time: grid.final_time,
            config_hash: config_hash.into(),
        }
    }

    pub fn with_slices(mut self, grid: &Grid, first: usize, count: usize) -> Self {
        self.time_index = Some(first);
        self.time = Some(grid.time(first));
        self.slices = count;
        self
    }

    pub fn grid(&self) -> Grid {
        Grid::from_parts(self.extent, self.nx - 1, self.time_cells, self.final_time)
    }

    fn expected_len(&self) -> usize {
        self.components.len() * self.slices * self.nx * self.ny
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DumpError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn stem_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes a field dump; returns the two paths written.
pub fn write_field(stem: &Path, header: &FieldHeader, components: &[&[f64]]) -> Result<Vec<PathBuf>, DumpError> {
    let (json, bin) = stem_paths(stem);
    let mut bytes = Vec::with_capacity(components.iter().map(|c| c.len() * 8).sum());
    for c in components {
        for v in c.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if bytes.len() != header.expected_len() * 8 {
        return Err(DumpError::Mismatch { path: bin, reason: "data length does not match header".into() });
    }
    write_atomic(&bin, &bytes)?;
    let text = serde_json::to_string_pretty(header).expect("header serializes");
    write_atomic(&json, text.as_bytes())?;
    Ok(vec![json, bin])
}

fn write_bytes_field(stem: &Path, header: &FieldHeader, bytes: &[u8]) -> Result<Vec<PathBuf>, DumpError> {
    let (json, bin) = stem_paths(stem);
    write_atomic(&bin, bytes)?;
    write_atomic(&json, serde_json::to_string_pretty(header).expect("header serializes").as_bytes())?;
    Ok(vec![json, bin])
}

pub fn read_header(stem: &Path) -> Result<FieldHeader, DumpError> {
    let (json, _) = stem_paths(stem);
    let text = fs::read_to_string(&json).map_err(io_err(&json))?;
    let header: FieldHeader =
        serde_json::from_str(&text).map_err(|source| DumpError::Header { path: json.clone(), source })?;
    if header.format != FIELD_FORMAT || header.version != FIELD_FORMAT_VERSION {
        return Err(DumpError::Mismatch { path: json, reason: "unsupported format or version".into() });
    }
    Ok(header)
}

fn read_raw(stem: &Path, header: &FieldHeader) -> Result<Vec<u8>, DumpError> {
    let (_, bin) = stem_paths(stem);
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    if bytes.len() != header.expected_len() * header.dtype.width() {
        return Err(DumpError::Mismatch {
            path: bin,
            reason: format!("expected {} values, found {} bytes", header.expected_len(), bytes.len()),
        });
    }
    Ok(bytes)
}

/// Reads a field dump, one vector per component.
pub fn read_field(stem: &Path) -> Result<(FieldHeader, Vec<Vec<f64>>), DumpError> {
    let header = read_header(stem)?;
    if header.dtype != DType::F64Le {
        let (_, bin) = stem_paths(stem);
        return Err(DumpError::Mismatch { path: bin, reason: "not a float field".into() });
    }
    let bytes = read_raw(stem, &header)?;
    let per = header.slices * header.nx * header.ny;
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let comps = values.chunks(per.max(1)).map(<[f64]>::to_vec).collect();
    Ok((header, comps))
}

/// `i, j, x, y, value` rows for one slice.
pub fn field_csv(grid: &Grid, values: &[f64]) -> String {
    let mut out = String::from("i,j,x,y,value\n");
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            let z = grid.node(i, j);
            let _ = writeln!(out, "{i},{j},{},{},{}", z.x, z.y, values[grid.index(i, j)]);
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per trajectory sample.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,x_P,y_P,x_E,y_E,phase,vx,vy,theta_sharp,amc\n");
    for s in &traj.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.t,
            s.pursuer.x,
            s.pursuer.y,
            s.evader.x,
            s.evader.y,
            s.phase.as_str(),
            s.velocity.x,
            s.velocity.y,
            opt(s.theta),
            s.amc as u8
        );
    }
    out
}

/// `x0, y0, amc_fraction` for every traced start (empty fraction when undefined).
pub fn scatter_csv(samples: &[crate::stats::StartResult]) -> String {
    let mut out = String::from("x0,y0,amc_fraction\n");
    for s in samples {
        let _ = writeln!(out, "{},{},{}", s.start.x, s.start.y, opt(s.amc_fraction));
    }
    out
}

/// `seed_index, escape_time, total_cost`.
pub fn rollout_csv(results: &[crate::simulator::RolloutResult]) -> String {
    let mut out = String::from("seed_index,escape_time,total_cost\n");
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", opt(r.escape_time), r.total_cost);
    }
    out
}

/// Stems of the full solution dump inside `dir`.
pub mod names {
    pub const STATIONARY_VALUE: &str = "stationary_value";
    pub const STATIONARY_POLICY: &str = "stationary_policy";
    pub const VALUE: &str = "value";
    pub const POLICY: &str = "policy";
    pub const CLASSES: &str = "node_class";
}

/// Writes the stationary value and heading fields.
pub fn write_stationary(dir: &Path, grid: &Grid, w: &StationarySolution, hash: &str) -> Result<Vec<PathBuf>, DumpError> {
    let mut files = write_field(
        &dir.join(names::STATIONARY_VALUE),
        &FieldHeader::new(grid, names::STATIONARY_VALUE, &["value"], hash),
        &[&w.values.values],
    )?;
    files.extend(write_field(
        &dir.join(names::STATIONARY_POLICY),
        &FieldHeader::new(grid, names::STATIONARY_POLICY, &["vx", "vy"], hash),
        &[&w.policy.vx, &w.policy.vy],
    )?);
    Ok(files)
}

/// Writes every field of a solution.
pub fn write_solution(dir: &Path, sol: &Solution, hash: &str) -> Result<Vec<PathBuf>, DumpError> {
    let g = &sol.grid;
    let mut files = write_stationary(dir, g, &sol.stationary, hash)?;
    let all = g.slices();
    files.extend(write_field(
        &dir.join(names::VALUE),
        &FieldHeader::new(g, names::VALUE, &["value"], hash).with_slices(g, 0, all),
        &[&sol.dynamic.values.values],
    )?);
    files.extend(write_field(
        &dir.join(names::POLICY),
        &FieldHeader::new(g, names::POLICY, &["vx", "vy"], hash).with_slices(g, 0, all),
        &[&sol.dynamic.policy.vx, &sol.dynamic.policy.vy],
    )?);
    let mut header = FieldHeader::new(g, names::CLASSES, &["class"], hash).with_slices(g, 0, all);
    header.dtype = DType::U8;
    files.extend(write_bytes_field(&dir.join(names::CLASSES), &header, &sol.dynamic.classes)?);
    Ok(files)
}

/// Writes slice `k` of the value and policy fields as standalone dumps.
pub fn write_slice(dir: &Path, sol: &Solution, k: usize, hash: &str) -> Result<Vec<PathBuf>, DumpError> {
    let g = &sol.grid;
    let vname = format!("{}_k{k}", names::VALUE);
    let pname = format!("{}_k{k}", names::POLICY);
    let mut files = write_field(
        &dir.join(&vname),
        &FieldHeader::new(g, &vname, &["value"], hash).with_slices(g, k, 1),
        &[sol.dynamic.values.slice(k)],
    )?;
    files.extend(write_field(
        &dir.join(&pname),
        &FieldHeader::new(g, &pname, &["vx", "vy"], hash).with_slices(g, k, 1),
        &[sol.dynamic.policy.slice_x(k), sol.dynamic.policy.slice_y(k)],
    )?);
    Ok(files)
}

fn check_hash(stem: &Path, header: &FieldHeader, hash: &str) -> Result<(), DumpError> {
    if header.config_hash != hash {
        return Err(DumpError::Mismatch {
            path: stem.to_path_buf(),
            reason: format!("config hash {} does not match {hash}", header.config_hash),
        });
    }
    Ok(())
}

pub fn read_stationary(dir: &Path, hash: &str) -> Result<(Grid, StationarySolution), DumpError> {
    let stem = dir.join(names::STATIONARY_VALUE);
    let (h, mut w) = read_field(&stem)?;
    check_hash(&stem, &h, hash)?;
    let pstem = dir.join(names::STATIONARY_POLICY);
    let (ph, mut p) = read_field(&pstem)?;
    check_hash(&pstem, &ph, hash)?;
    let grid = h.grid();
    let vy = p.pop().unwrap_or_default();
    let vx = p.pop().unwrap_or_default();
    let values = w.pop().unwrap_or_default();
    Ok((
        grid,
        StationarySolution {
            values: ScalarField2 { n: grid.n(), values },
            policy: VectorField2 { vx, vy },
            cycles: 0,
            residual: 0.0,
        },
    ))
}

/// Loads a solution written by [`write_solution`], checking it belongs to
/// the config with hash `hash`.
pub fn read_solution(dir: &Path, hash: &str) -> Result<Solution, DumpError> {
    let (grid, stationary) = read_stationary(dir, hash)?;
    let vstem = dir.join(names::VALUE);
    let (vh, mut v) = read_field(&vstem)?;
    check_hash(&vstem, &vh, hash)?;
    let pstem = dir.join(names::POLICY);
    let (ph, mut p) = read_field(&pstem)?;
    check_hash(&pstem, &ph, hash)?;
    let cstem = dir.join(names::CLASSES);
    let ch = read_header(&cstem)?;
    check_hash(&cstem, &ch, hash)?;
    let classes = read_raw(&cstem, &ch)?;
    if vh.slices != grid.slices() || ph.slices != grid.slices() {
        return Err(DumpError::Mismatch { path: vstem, reason: "slice count does not match grid".into() });
    }
    let vy = p.pop().unwrap_or_default();
    let vx = p.pop().unwrap_or_default();
    let dynamic = TimeDependentSolution {
        values: ScalarField3 { slice_len: grid.slice_len(), slices: grid.slices(), values: v.pop().unwrap_or_default() },
        policy: PolicyField { slice_len: grid.slice_len(), slices: grid.slices(), vx, vy },
        classes,
        infeasible_nodes: 0,
    };
    Ok(Solution { grid, stationary, dynamic })
}
