use std::sync::OnceLock;

use camo_core::environment::{PursuitConfig, Scenario};
use camo_core::escape::RateParams;
use camo_core::geometry::Vec2;
use camo_core::optimizer::substream;
use camo_core::simulator::{mean_and_stderr, rollouts, sample_escape, RateSegment};
use camo_core::solution::{solve, Solution};
use camo_core::stationary::StationaryParams;
use camo_core::tracer::{trace, TraceMode};
use camo_core::validate_config;

fn solved(amplitude: f64) -> (Scenario, Solution) {
    let mut cfg = PursuitConfig::with_rate(RateParams { amplitude, acuity: 0.05, tolerance: 0.4 });
    cfg.grid.cells = 40;
    cfg.grid.time_cells = 160;
    let sc = validate_config(&cfg).unwrap();
    let sol = solve(&sc, &StationaryParams::default()).unwrap();
    (sc, sol)
}

fn risky() -> &'static (Scenario, Solution) {
    static CELL: OnceLock<(Scenario, Solution)> = OnceLock::new();
    CELL.get_or_init(|| solved(5.0))
}

#[test]
fn two_rate_survival_matches_the_exponential() {
    let segments = [
        RateSegment { start: 0.0, end: 0.3, rate: 1.0 },
        RateSegment { start: 0.3, end: 0.5, rate: 0.0 },
        RateSegment { start: 0.5, end: 0.9, rate: 2.5 },
    ];
    let n = 20_000;
    let mut rng = substream(11, &[]);
    let mut survived = 0usize;
    for _ in 0..n {
        match sample_escape(&segments, 3.0, &mut rng) {
            None => survived += 1,
            Some(t) => assert!(!(0.3..0.5).contains(&t), "escape at {t} in a zero-rate segment"),
        }
    }
    let p = (-(1.0 * 0.3 + 2.5 * 0.4f64)).exp();
    let got = survived as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((got - p).abs() <= 3.0 * se, "{got} vs {p}");
}

#[test]
fn rollouts_are_reproducible_per_seed() {
    let (sc, sol) = risky();
    let z0 = sc.path.at(0.0) + Vec2::new(0.5, -0.3);
    let a = rollouts(sc, sol, z0, 200, 5).unwrap();
    let b = rollouts(sc, sol, z0, 200, 5).unwrap();
    let c = rollouts(sc, sol, z0, 200, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.iter().any(|r| r.escape_time.is_some()));
}

#[test]
fn escaped_rollouts_chase_from_the_end_of_the_escape_step() {
    let (sc, sol) = risky();
    let z0 = sc.path.at(0.0) + Vec2::new(0.5, -0.3);
    let nominal = trace(sc, sol, z0, TraceMode::Deterministic).unwrap();
    let chase = sc.chase_model();
    for r in rollouts(sc, sol, z0, 300, 9).unwrap() {
        match r.escape_time {
            None => assert_eq!(r.total_cost, nominal.total_energy()),
            Some(te) => {
                assert!(te < nominal.switch_time);
                assert!(r.stalk_energy <= nominal.stalk_energy);
                let traj = trace(sc, sol, z0, TraceMode::Stochastic { escape_time: Some(te) }).unwrap();
                assert!(traj.switch_time >= te && traj.switch_time <= te + sol.grid.dt + 1e-12);
                assert_eq!(traj.switch_point, r.switch_point);
                let evader = sc.path.at(traj.switch_time);
                assert!((r.chase_energy - chase.chase_energy(r.switch_point, evader)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn no_risk_means_no_spread() {
    let (sc, sol) = solved(0.0);
    let z0 = sc.path.at(0.0) + Vec2::new(-0.4, 0.4);
    let results = rollouts(&sc, &sol, z0, 50, 1).unwrap();
    assert!(results.iter().all(|r| r.escape_time.is_none()));
    let costs: Vec<f64> = results.iter().map(|r| r.total_cost).collect();
    let (mean, se) = mean_and_stderr(&costs);
    assert_eq!(se, 0.0);
    assert_eq!(mean, trace(&sc, &sol, z0, TraceMode::Deterministic).unwrap().total_energy());
}
