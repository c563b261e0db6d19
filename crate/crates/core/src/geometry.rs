//! Plane vectors.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in the plane, in metres (or m/s for velocities).
///
/// Serialized as a two-element array `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn from_polar(radius: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(radius * c, radius * s)
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    #[inline]
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| self * (1.0 / n))
    }

    /// Shrinks the vector radially so its length does not exceed `max_len`.
    #[inline]
    pub fn clamp_norm(self, max_len: f64) -> Vec2 {
        let n = self.norm();
        if n > max_len {
            self * (max_len / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Parameter `s ∈ [0, 1]` at which the segment `from + s (to - from)` first
/// enters the closed ball `|z - center| <= radius`, given that `from` starts
/// outside it. The ball centre may itself move linearly from `center0` to
/// `center1` over the same parameter range.
pub fn first_entry(from: Vec2, to: Vec2, center0: Vec2, center1: Vec2, radius: f64) -> Option<f64> {
    // relative position r(s) = r0 + s * dr
    let r0 = from - center0;
    let dr = (to - from) - (center1 - center0);
    let c = r0.norm_sq() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let a = dr.norm_sq();
    if a == 0.0 {
        return None;
    }
    let b = 2.0 * r0.dot(dr);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    // c > 0 so the two roots share a sign; the smaller one is the entry.
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let (s1, s2) = (q / a, c / q);
    let s = s1.min(s2);
    (b < 0.0 && (0.0..=1.0).contains(&s)).then_some(s)
}
