//! Escape-attempt model: angular MC violation, pointwise escape rate and
//! survival probabilities along sampled paths.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Radii below this are treated as degenerate when measuring angles.
pub const DEGENERATE_RADIUS: f64 = 1e-12;

/// Constants shaping the escape rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    /// Overall strength `A` (1/s); also the global upper bound on the rate.
    pub amplitude: f64,
    /// Acuity `B` (rad); smaller means sharper angular resolution.
    pub acuity: f64,
    /// Tolerance `C` (1/m^2); larger means the evader tolerates closer approach.
    pub tolerance: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum EscapeError {
    #[error("degenerate geometry: pursuer or focal point coincides with the evader")]
    DegenerateGeometry,
    #[error("timestamps must increase strictly (index {0})")]
    NonIncreasingTime(usize),
}

/// Angle between the evader's focal line `z# - z_E` and the line of sight
/// `z - z_E`, in `[0, π]`.
pub fn angular_displacement(z: Vec2, evader: Vec2, focal: Vec2) -> Result<f64, EscapeError> {
    let r = z - evader;
    let rf = focal - evader;
    let (nr, nf) = (r.norm(), rf.norm());
    if nr < DEGENERATE_RADIUS || nf < DEGENERATE_RADIUS {
        return Err(EscapeError::DegenerateGeometry);
    }
    Ok((r.dot(rf) / (nr * nf)).clamp(-1.0, 1.0).acos())
}

/// Pointwise escape rate with the distance thresholds it depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EscapeModel {
    pub rate: RateParams,
    pub chase_trigger: f64,
    pub visual_range: f64,
}

impl EscapeModel {
    pub fn new(rate: RateParams, chase_trigger: f64, visual_range: f64) -> Self {
        Self { rate, chase_trigger, visual_range }
    }

    /// Escape rate for a pursuer at `z`, evader at `evader`, focal point `focal`.
    ///
    /// Cases are tested in order: inside the trigger radius the rate is `A`;
    /// beyond the visual range it is zero; in between it decays with distance,
    /// sharpened by the angular violation when the evader can see her focal
    /// point and independent of angle when she cannot.
    #[inline]
    pub fn rate(&self, z: Vec2, evader: Vec2, focal: Vec2) -> f64 {
        let RateParams { amplitude: a, acuity: b, tolerance: c } = self.rate;
        let r = z - evader;
        let dist = r.norm();
        if dist <= self.chase_trigger {
            return a;
        }
        if dist > self.visual_range {
            return 0.0;
        }
        let excess = dist - self.chase_trigger;
        let rf = focal - evader;
        let nf = rf.norm();
        if nf <= self.visual_range && nf >= DEGENERATE_RADIUS {
            let theta = (r.dot(rf) / (dist * nf)).clamp(-1.0, 1.0).acos();
            a * (-c * excess * excess / (b + theta)).exp()
        } else {
            a * (-c * excess * excess).exp()
        }
    }

    /// Survival probability `exp(-∫λ ds)` along a path sampled as
    /// `(t, pursuer, evader)` triples, using left-endpoint quadrature.
    pub fn survival_probability(&self, samples: &[(f64, Vec2, Vec2)], focal: Vec2) -> Result<f64, EscapeError> {
        let mut integral = 0.0;
        for (idx, w) in samples.windows(2).enumerate() {
            let (t0, z, e) = w[0];
            let dt = w[1].0 - t0;
            if !(dt > 0.0) {
                return Err(EscapeError::NonIncreasingTime(idx + 1));
            }
            integral += self.rate(z, e, focal) * dt;
        }
        Ok((-integral).exp())
    }
}
