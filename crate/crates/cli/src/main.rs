use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use camo_core::dump::{self, DumpError, FieldHeader};
use camo_core::environment::ConfigErrors;
use camo_core::grid::Grid;
use camo_core::simulator::{mean_and_stderr, rollout, rollouts};
use camo_core::solution::{scenario_grid, Solution};
use camo_core::stationary::{solve_stationary, StationaryParams};
use camo_core::stats::{batch_amc, DEFAULT_THRESHOLD};
use camo_core::tracer::{start_is_feasible, trace, TraceError, TraceMode};
use camo_core::{optimizer::substream, solution::solve_with_progress, validate_config, PursuitConfig, Scenario, Vec2};
use clap::{Parser, Subcommand};
use serde::Serialize;

const MANIFEST_VERSION: u32 = 1;
const CSV_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "camo", version, about = "Solve and analyse energy-optimal stalking under escape risk")]
struct Cli {
    /// Scenario config (JSON).
    #[arg(long, env = "CAMO_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// Root directory for artifacts; each config gets its own subdirectory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the command's own sampling (default: the config seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone, Copy)]
struct SweepArgs {
    /// Convergence threshold of the stationary sweeps (J).
    #[arg(long, default_value_t = 1e-6)]
    tol_w: f64,
    /// Cap on stationary sweep cycles.
    #[arg(long, default_value_t = 500)]
    max_cycles: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the post-arrival problem only.
    SolveStationary {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Solve both value functions and dump every field.
    Solve {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Also dump these time slices as standalone files.
        #[arg(long, value_delimiter = ',')]
        slices: Vec<usize>,
    },
    /// Follow the optimal policy from a start point.
    Trace {
        #[arg(allow_negative_numbers = true)]
        x0: f64,
        #[arg(allow_negative_numbers = true)]
        y0: f64,
        /// Draw a random escape time with this seed instead of never escaping.
        #[arg(long)]
        escape_seed: Option<u64>,
    },
    /// Approximate-MC statistics over random start points.
    Stats {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Compare the solved value at a point with Monte-Carlo rollouts.
    Validate {
        #[arg(allow_negative_numbers = true)]
        x0: f64,
        #[arg(allow_negative_numbers = true)]
        y0: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveStationary { .. } => "solve-stationary",
            Command::Solve { .. } => "solve",
            Command::Trace { .. } => "trace",
            Command::Stats { .. } => "stats",
            Command::Validate { .. } => "validate",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    MissingArtifact(String),
    InfeasibleStart(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Config(_) => 3,
            Failure::MissingArtifact(_) => 4,
            Failure::InfeasibleStart(_) => 5,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Config(m) => write!(f, "invalid config: {m}"),
            Failure::MissingArtifact(m) => write!(f, "missing artifact: {m}"),
            Failure::InfeasibleStart(m) => write!(f, "infeasible start: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<DumpError> for Failure {
    fn from(e: DumpError) -> Self {
        Failure::Other(e.into())
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::InfeasibleStart { .. } => Failure::InfeasibleStart(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    tool_version: &'a str,
    command: &'a str,
    arguments: Vec<String>,
    config_hash: &'a str,
    config_path: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    formats: Formats,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct Formats {
    field: u32,
    csv: u32,
}

struct Run {
    scenario: Scenario,
    hash: String,
    dir: PathBuf,
    config_path: PathBuf,
    seed: u64,
    outputs: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
}

impl Run {
    fn write(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        dump::write_atomic(&path, text.as_bytes())?;
        self.outputs.push(path);
        Ok(())
    }

    fn load_solution(&mut self) -> Result<Solution, Failure> {
        let marker = self.dir.join(format!("{}.json", dump::names::CLASSES));
        if !marker.exists() {
            return Err(Failure::MissingArtifact(format!(
                "no solution in {}; run `camo solve` with this config first",
                self.dir.display()
            )));
        }
        let sol = dump::read_solution(&self.dir, &self.hash)?;
        let expected = scenario_grid(&self.scenario).map_err(|e| Failure::Config(e.to_string()))?;
        if sol.grid.n() != expected.n() || sol.grid.time_cells != expected.time_cells {
            return Err(Failure::MissingArtifact("stored grid does not match the config".into()));
        }
        for name in [dump::names::STATIONARY_VALUE, dump::names::STATIONARY_POLICY, dump::names::VALUE, dump::names::POLICY, dump::names::CLASSES] {
            self.inputs.push(self.dir.join(format!("{name}.bin")));
        }
        Ok(sol)
    }
}

fn load_config(path: &Path) -> Result<(Scenario, String), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = PursuitConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let hash = cfg.hash();
    let scenario = validate_config(&cfg).map_err(|ConfigErrors(v)| {
        Failure::Config(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    Ok((scenario, hash))
}

fn sweep_params(s: SweepArgs) -> Result<StationaryParams, Failure> {
    if !(s.tol_w > 0.0) || s.max_cycles == 0 {
        return Err(Failure::Usage("--tol-w and --max-cycles must be positive".into()));
    }
    Ok(StationaryParams { tolerance: s.tol_w, max_cycles: s.max_cycles, ..StationaryParams::default() })
}

fn rate_field(scenario: &Scenario, grid: &Grid) -> Vec<f64> {
    (0..grid.slice_len()).map(|idx| scenario.escape_rate(grid.node_at(idx), 0.0)).collect()
}

fn fmt_coord(v: f64) -> String {
    v.to_string().replace('-', "m")
}

#[derive(Serialize)]
struct StatsSummary {
    n: usize,
    seed: u64,
    threshold: f64,
    failures: usize,
    without_stalk: usize,
    counted: usize,
    over_threshold: usize,
    pct_over_threshold: f64,
}

#[derive(Serialize)]
struct ValidationReport {
    point: Vec2,
    n: usize,
    seed: u64,
    mean: f64,
    stderr: f64,
    value: f64,
    z_score: f64,
    escapes: usize,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let config_path =
        cli.config.clone().ok_or_else(|| Failure::Usage("no config given (--config or CAMO_CONFIG)".into()))?;
    if let Command::Stats { n: 0, .. } | Command::Validate { n: 0, .. } = cli.command {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("thread pool")?;
    }
    let (scenario, hash) = load_config(&config_path)?;
    let seed = cli.seed.unwrap_or(scenario.config.seed);
    let dir = cli.out.join(&hash);
    let mut run = Run { scenario, hash, dir, config_path, seed, outputs: Vec::new(), inputs: Vec::new() };
    run.inputs.push(run.config_path.clone());

    match &cli.command {
        Command::SolveStationary { sweep } => {
            let params = sweep_params(*sweep)?;
            let grid = scenario_grid(&run.scenario).map_err(|e| Failure::Config(e.to_string()))?;
            let w = solve_stationary(&run.scenario, &grid, &params).context("stationary solve")?;
            eprintln!("stationary: {} cycles, last update {:e} J", w.cycles, w.residual);
            let files = dump::write_stationary(&run.dir, &grid, &w, &run.hash)?;
            run.outputs.extend(files);
            run.write("config.json", &run.scenario.config.to_json_pretty())?;
        }
        Command::Solve { sweep, slices } => {
            let params = sweep_params(*sweep)?;
            let grid = scenario_grid(&run.scenario).map_err(|e| Failure::Config(e.to_string()))?;
            if let Some(&k) = slices.iter().find(|&&k| k > grid.time_cells) {
                return Err(Failure::Usage(format!("slice {k} beyond the last index {}", grid.time_cells)));
            }
            let total = grid.time_cells;
            let mut done = 0usize;
            let sol = solve_with_progress(&run.scenario, &params, |_| {
                done += 1;
                if done.is_multiple_of((total / 10).max(1)) {
                    eprintln!("solve: {done}/{total} slices");
                }
            })
            .context("solve")?;
            eprintln!(
                "stationary: {} cycles; dynamic: {} infeasible nodes",
                sol.stationary.cycles, sol.dynamic.infeasible_nodes
            );
            let files = dump::write_solution(&run.dir, &sol, &run.hash)?;
            run.outputs.extend(files);
            for &k in slices {
                let files = dump::write_slice(&run.dir, &sol, k, &run.hash)?;
                run.outputs.extend(files);
            }
            let header = FieldHeader::new(&sol.grid, "escape_rate_t0", &["rate"], &run.hash).with_slices(&sol.grid, 0, 1);
            let files = dump::write_field(&run.dir.join("escape_rate_t0"), &header, &[&rate_field(&run.scenario, &sol.grid)])?;
            run.outputs.extend(files);
            run.write("config.json", &run.scenario.config.to_json_pretty())?;
        }
        &Command::Trace { x0, y0, escape_seed } => {
            let sol = run.load_solution()?;
            let z0 = Vec2::new(x0, y0);
            if !start_is_feasible(&run.scenario, &sol, z0) {
                return Err(TraceError::InfeasibleStart { x: x0, y: y0 }.into());
            }
            let traj = match escape_seed {
                None => trace(&run.scenario, &sol, z0, TraceMode::Deterministic)?,
                Some(s) => {
                    let mut rng = substream(s, &[0x7472_6163]);
                    let r = rollout(&run.scenario, &sol, z0, &mut rng)?;
                    trace(&run.scenario, &sol, z0, TraceMode::Stochastic { escape_time: r.escape_time })?
                }
            };
            let name = match escape_seed {
                None => format!("trace_{}_{}.csv", fmt_coord(x0), fmt_coord(y0)),
                Some(s) => format!("trace_{}_{}_s{s}.csv", fmt_coord(x0), fmt_coord(y0)),
            };
            run.write(&name, &dump::trajectory_csv(&traj))?;
        }
        &Command::Stats { n, threshold } => {
            let sol = run.load_solution()?;
            let summary = batch_amc(&run.scenario, &sol, n, run.seed, threshold);
            let report = StatsSummary {
                n: summary.n,
                seed: run.seed,
                threshold,
                failures: summary.failures,
                without_stalk: summary.without_stalk,
                counted: summary.counted,
                over_threshold: summary.over_threshold,
                pct_over_threshold: summary.pct_over_threshold,
            };
            eprintln!("{:.4}% of {} traced starts above {threshold}", report.pct_over_threshold, report.counted);
            run.write(&format!("scatter_n{n}_s{}.csv", run.seed), &dump::scatter_csv(&summary.samples))?;
            run.write(
                &format!("stats_n{n}_s{}.json", run.seed),
                &serde_json::to_string_pretty(&report).context("summary")?,
            )?;
        }
        &Command::Validate { x0, y0, n } => {
            let sol = run.load_solution()?;
            let z0 = Vec2::new(x0, y0);
            let results = rollouts(&run.scenario, &sol, z0, n, run.seed)?;
            let costs: Vec<f64> = results.iter().map(|r| r.total_cost).collect();
            let (mean, stderr) = mean_and_stderr(&costs);
            let value = sol.initial_value(z0);
            let report = ValidationReport {
                point: z0,
                n,
                seed: run.seed,
                mean,
                stderr,
                value,
                z_score: if stderr > 0.0 { (mean - value) / stderr } else { 0.0 },
                escapes: results.iter().filter(|r| r.escape_time.is_some()).count(),
            };
            eprintln!("mean {mean} ± {stderr} J against U = {value} J");
            let stem = format!("validate_{}_{}_n{n}_s{}", fmt_coord(x0), fmt_coord(y0), run.seed);
            run.write(&format!("{stem}.csv"), &dump::rollout_csv(&results))?;
            run.write(&format!("{stem}.json"), &serde_json::to_string_pretty(&report).context("report")?)?;
        }
    }

    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        arguments: std::env::args().skip(1).collect(),
        config_hash: &run.hash,
        config_path: run.config_path.display().to_string(),
        inputs: run.inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: run.outputs.iter().map(|p| p.display().to_string()).collect(),
        formats: Formats { field: dump::FIELD_FORMAT_VERSION, csv: CSV_VERSION },
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let path = run.dir.join(format!("manifest_{}.json", cli.command.name()));
    dump::write_atomic(&path, serde_json::to_string_pretty(&manifest).context("manifest")?.as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("camo: {f}");
            ExitCode::from(f.code())
        }
    }
}
