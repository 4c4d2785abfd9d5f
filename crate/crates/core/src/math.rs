//! Small 3-vector type used by the simulator (64-bit throughout).

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero-length.
pub const NORMALIZE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Distance in the ground (x, z) plane.
    pub fn horizontal_distance(self, other: Vec3) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Unit vector parallel to `self`.
    pub fn normalize(self) -> Result<Vec3> {
        normalize(self)
    }
}

/// Returns `v / ‖v‖₂`, or `DegenerateVector` when `‖v‖₂ ≤ 1e-9`.
pub fn normalize(v: Vec3) -> Result<Vec3> {
    let norm = v.norm();
    if !(norm > NORMALIZE_TOLERANCE) {
        return Err(Error::DegenerateVector { norm });
    }
    Ok(v * (1.0 / norm))
}

/// Unit forward direction for a yaw angle (radians) about +y; yaw 0 faces +z
/// and increasing yaw turns toward +x.
pub fn forward_from_yaw(yaw: f64) -> Vec3 {
    Vec3::new(yaw.sin(), 0.0, yaw.cos())
}

/// Unit right direction for a yaw angle, perpendicular to [`forward_from_yaw`].
pub fn right_from_yaw(yaw: f64) -> Vec3 {
    Vec3::new(yaw.cos(), 0.0, -yaw.sin())
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_three_four_five() {
        let n = normalize(Vec3::new(3.0, 0.0, 4.0)).unwrap();
        assert!((n.x - 0.6).abs() < 1e-12);
        assert_eq!(n.y, 0.0);
        assert!((n.z - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_unit_is_identity() {
        assert_eq!(normalize(Vec3::UP).unwrap(), Vec3::UP);
    }

    #[test]
    fn normalize_rejects_tiny() {
        assert!(matches!(
            normalize(Vec3::new(1e-12, 0.0, 0.0)),
            Err(Error::DegenerateVector { .. })
        ));
        assert!(normalize(Vec3::ZERO).is_err());
    }

    #[test]
    fn forward_and_right_are_orthonormal() {
        for yaw in [-3.0, -1.0, 0.0, 0.4, 2.5] {
            let f = forward_from_yaw(yaw);
            let r = right_from_yaw(yaw);
            assert!((f.norm() - 1.0).abs() < 1e-12);
            assert!(f.dot(r).abs() < 1e-12);
            // right-handed screen convention: up × forward = right
            let rr = Vec3::UP.cross(f);
            assert!((rr - r).norm() < 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn normalize_is_unit_and_scale_invariant(v in arb_vec(), k in 1e-3..1e3f64) {
            prop_assume!(v.norm() > 1e-6);
            let a = normalize(v).unwrap();
            let b = normalize(v * k).unwrap();
            prop_assert!((a.norm() - 1.0).abs() < 1e-7);
            prop_assert!((a - b).norm() < 1e-9);
            // parallel: cross product vanishes
            prop_assert!(a.cross(v).norm() <= 1e-9 * v.norm());
        }
    }
}
