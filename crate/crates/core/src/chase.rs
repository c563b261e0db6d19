//! Closed-form direct chase: both players run at top speed along the line of
//! centres, the pursuer straight at the evader and the evader straight away.

use thiserror::Error;

use crate::environment::SpeedParams;
use crate::geometry::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum ChaseError {
    #[error("pursuer and evader coincide; chase direction undefined")]
    Coincident,
}

/// Result of a direct chase started from a given pair of positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChaseOutcome {
    /// Time from the start of the chase to capture (s).
    pub capture_time: f64,
    /// Pursuer energy spent during the chase (J).
    pub chase_energy: f64,
    /// Pursuer heading; zero when capture is immediate and the players coincide.
    pub direction: Vec2,
    /// Pursuer position at capture.
    pub capture_point: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChaseModel {
    pub pursuer_speed: f64,
    pub evader_speed: f64,
    pub capture_radius: f64,
    /// Energy rate `W + G_P^2 / 2` while chasing (J/s).
    pub energy_rate: f64,
}

impl ChaseModel {
    pub fn new(speeds: &SpeedParams, capture_radius: f64) -> Self {
        Self {
            pursuer_speed: speeds.chase_speed_pursuer,
            evader_speed: speeds.chase_speed_evader,
            capture_radius,
            energy_rate: speeds.energy_rate(speeds.chase_speed_pursuer),
        }
    }

    #[inline]
    pub fn closing_speed(&self) -> f64 {
        self.pursuer_speed - self.evader_speed
    }

    /// Time to capture from separation `|pursuer - evader|`.
    #[inline]
    pub fn capture_time(&self, pursuer: Vec2, evader: Vec2) -> f64 {
        self.capture_time_from_gap(pursuer.distance(evader))
    }

    #[inline]
    pub fn capture_time_from_gap(&self, separation: f64) -> f64 {
        ((separation - self.capture_radius) / self.closing_speed()).max(0.0)
    }

    #[inline]
    pub fn chase_energy(&self, pursuer: Vec2, evader: Vec2) -> f64 {
        self.capture_time(pursuer, evader) * self.energy_rate
    }

    pub fn chase_direction(&self, pursuer: Vec2, evader: Vec2) -> Result<Vec2, ChaseError> {
        (evader - pursuer).normalized().ok_or(ChaseError::Coincident)
    }

    pub fn outcome(&self, pursuer: Vec2, evader: Vec2) -> ChaseOutcome {
        let capture_time = self.capture_time(pursuer, evader);
        let direction = self.chase_direction(pursuer, evader).unwrap_or(Vec2::ZERO);
        ChaseOutcome {
            capture_time,
            chase_energy: capture_time * self.energy_rate,
            direction,
            capture_point: pursuer + direction * (self.pursuer_speed * capture_time),
        }
    }
}
