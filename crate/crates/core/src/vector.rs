use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plain Cartesian 3-vector in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Unit propagation direction. The wavevector magnitude 2π/λ comes from
/// whichever ensemble the direction is used with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction(Vec3);

const UNIT_TOLERANCE: f64 = 1e-12;
const RENORMALIZE_TOLERANCE: f64 = 1e-6;

impl Direction {
    pub const PLUS_Z: Direction = Direction(Vec3::new(0.0, 0.0, 1.0));

    /// Accepts vectors within 1e-6 of unit length (renormalized); rejects the rest.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !v.is_finite() || (n - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::validation(
                "direction",
                format!("not a unit vector (norm {n})"),
            ));
        }
        Ok(Direction(v * (1.0 / n)))
    }

    /// Normalizes any nonzero finite vector.
    pub fn normalize(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !v.is_finite() || n == 0.0 {
            return Err(Error::validation("direction", "zero or non-finite vector"));
        }
        Ok(Direction(v * (1.0 / n)))
    }

    /// Direction at polar angle `theta` and azimuth `phi` measured about `axis`.
    pub fn from_polar(axis: Direction, theta: f64, phi: f64) -> Direction {
        let (u, v) = axis.orthonormal_frame();
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Direction::from_frame(axis, u, v, ct, st * cp, st * sp)
    }

    /// Same as [`Direction::from_polar`] but parametrized by `t = 1 - cos θ`,
    /// which stays accurate arbitrarily close to the axis.
    pub fn from_axis_offset(axis: Direction, t: f64, phi: f64) -> Direction {
        let (u, v) = axis.orthonormal_frame();
        let ct = 1.0 - t;
        let st = (t * (2.0 - t)).max(0.0).sqrt();
        let (sp, cp) = phi.sin_cos();
        Direction::from_frame(axis, u, v, ct, st * cp, st * sp)
    }

    fn from_frame(axis: Direction, u: Vec3, v: Vec3, a: f64, b: f64, c: f64) -> Direction {
        let w = axis.0 * a + u * b + v * c;
        let n = w.norm();
        debug_assert!((n - 1.0).abs() < 1e-9);
        Direction(w * (1.0 / n))
    }

    /// Two unit vectors completing a right-handed frame with `self`.
    pub fn orthonormal_frame(self) -> (Vec3, Vec3) {
        let a = self.0;
        let helper = if a.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let u = a.cross(helper);
        let u = u * (1.0 / u.norm());
        let v = a.cross(u);
        (u, v)
    }

    pub fn vector(self) -> Vec3 {
        self.0
    }

    pub fn cos_angle(self, other: Direction) -> f64 {
        self.0.dot(other.0).clamp(-1.0, 1.0)
    }

    /// Angle to `other` in [0, π], accurate for nearly parallel vectors.
    pub fn angle_to(self, other: Direction) -> f64 {
        let c = self.0.cross(other.0).norm();
        let d = self.0.dot(other.0);
        c.atan2(d)
    }

    pub fn is_unit(self) -> bool {
        (self.0.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }
}

/// Wavenumber 2π/λ.
pub fn wavenumber(wavelength: f64) -> f64 {
    2.0 * PI / wavelength
}
