//! Small geometric primitives shared by every module.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform. `Pose` values named `T_A_B` map points from frame B into frame A.
pub type Pose = Isometry3<f64>;

/// Axis-aligned box in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_corners(a: [f64; 3], b: [f64; 3]) -> Self {
        let min = Point3::new(a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2]));
        let max = Point3::new(a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2]));
        Self { min, max }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// Closed containment; points on a face count as inside.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Euclidean distance from `p` to the box; zero inside.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
            d2 += d * d;
        }
        d2.sqrt()
    }

    /// Slab test. Returns the entry distance along `dir` (which need not be unit length)
    /// if the ray enters the box within `[0, t_max]`. Origins inside the box report 0.
    pub fn ray_entry(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let inv = inv_dir[i];
            if inv.is_infinite() {
                // Ray parallel to this slab.
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let mut ta = (self.min[i] - origin[i]) * inv;
            let mut tb = (self.max[i] - origin[i]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Component-wise reciprocal used by [`Aabb::ray_entry`]; zero components map to infinity.
pub fn inverse_direction(dir: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(recip(dir.x), recip(dir.y), recip(dir.z))
}

fn recip(v: f64) -> f64 {
    if v == 0.0 {
        f64::INFINITY
    } else {
        1.0 / v
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Pose with the given position and a pure yaw rotation.
pub fn pose_from_yaw(position: Point3<f64>, yaw: f64) -> Pose {
    Isometry3::from_parts(
        Translation3::from(position.coords),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
    )
}

/// Yaw of a rotation, i.e. the heading of its x axis projected on the horizontal plane.
pub fn yaw_of(rotation: &UnitQuaternion<f64>) -> f64 {
    let x = rotation * Vector3::x();
    x.y.atan2(x.x)
}

/// Translation magnitude and rotation angle of `a^-1 * b`.
pub fn pose_delta(a: &Pose, b: &Pose) -> (f64, f64) {
    let d = a.inverse() * b;
    (d.translation.vector.norm(), d.rotation.angle())
}
