//! Energy-optimal pursuit under an uncertain escape time.
//!
//! A pursuer approaches an evader that flies a known route to a flower and
//! may try to escape at any moment, with a rate that grows as the pursuer
//! gets closer and strays from her line of sight to a fixed focal point.
//! Once she tries to escape, or the pursuer gets within the trigger
//! distance, a direct chase at top speed follows.
//!
//! The crate solves for the pursuer's minimal expected energy in two parts:
//!
//! * [`stationary`]: after the evader lands, by semi-Lagrangian fixed-point
//!   sweeps on a five-point stencil;
//! * [`dynamic`]: before she lands, backward in time, with a hit-and-run
//!   search over the velocity ball at each node ([`optimizer`]).
//!
//! [`tracer`] follows the resulting policy from a start point and marks the
//! steps that are approximately motion-camouflaged; [`stats`] aggregates this
//! over many starts and [`simulator`] checks the values by Monte Carlo.

pub mod chase;
pub mod dump;
pub mod dynamic;
pub mod environment;
pub mod escape;
pub mod geometry;
pub mod grid;
pub mod optimizer;
pub mod simulator;
pub mod solution;
pub mod stationary;
pub mod stats;
pub mod tracer;

pub use environment::{validate_config, PursuitConfig, Scenario};
pub use geometry::Vec2;
pub use solution::{solve, Solution};
