use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

use super::Environment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Lidar,
    DepthCamera,
}

/// Range sensor description. Sensor frame: x forward, y left, z up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub kind: SensorKind,
    /// Horizontal field of view, radians in (0, 2pi].
    pub alpha_h: f64,
    /// Vertical field of view, radians in (0, pi].
    pub alpha_v: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub rays_h: usize,
    pub rays_v: usize,
    pub rate: f64,
    /// Standard deviation of additive range noise in meters.
    pub noise_sigma: f64,
}

impl SensorModel {
    /// 360 x 180 ray LiDAR, 360 deg x 90 deg field of view, 1-10 m range.
    pub fn lidar() -> Self {
        Self {
            kind: SensorKind::Lidar,
            alpha_h: 2.0 * PI,
            alpha_v: PI / 2.0,
            d_min: 1.0,
            d_max: 10.0,
            rays_h: 360,
            rays_v: 180,
            rate: 10.0,
            noise_sigma: 0.0,
        }
    }

    /// Stereo depth camera, 87 x 58 deg, 0.2-4 m range.
    pub fn depth_camera() -> Self {
        Self {
            kind: SensorKind::DepthCamera,
            alpha_h: 87f64.to_radians(),
            alpha_v: 58f64.to_radians(),
            d_min: 0.2,
            d_max: 4.0,
            rays_h: 160,
            rays_v: 106,
            rate: 30.0,
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("sensor: {m}")));
        if !(self.alpha_h > 0.0 && self.alpha_h <= 2.0 * PI + 1e-12) {
            return bad("alpha_h must be in (0, 2pi]");
        }
        if !(self.alpha_v > 0.0 && self.alpha_v <= PI + 1e-12) {
            return bad("alpha_v must be in (0, pi]");
        }
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return bad("range must satisfy 0 < d_min < d_max");
        }
        if self.rays_h < 2 || self.rays_v < 2 {
            return bad("at least 2 rays per axis");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if self.kind == SensorKind::DepthCamera && (self.alpha_h >= PI || self.alpha_v >= PI) {
            return bad("pinhole field of view must be below 180 deg");
        }
        Ok(())
    }

    pub fn is_omnidirectional(&self) -> bool {
        self.alpha_h >= 2.0 * PI - 1e-9
    }

    /// Unit ray directions in the sensor frame, row-major (elevation rows, azimuth columns).
    pub fn ray_directions(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.rays_h * self.rays_v);
        match self.kind {
            SensorKind::Lidar => {
                let omni = self.is_omnidirectional();
                for i in 0..self.rays_v {
                    let el = -self.alpha_v / 2.0 + self.alpha_v * i as f64 / (self.rays_v - 1) as f64;
                    for j in 0..self.rays_h {
                        let az = if omni {
                            2.0 * PI * j as f64 / self.rays_h as f64
                        } else {
                            -self.alpha_h / 2.0 + self.alpha_h * j as f64 / (self.rays_h - 1) as f64
                        };
                        out.push(Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()));
                    }
                }
            }
            SensorKind::DepthCamera => {
                let th = (self.alpha_h / 2.0).tan();
                let tv = (self.alpha_v / 2.0).tan();
                for i in 0..self.rays_v {
                    let v = tv * (1.0 - 2.0 * i as f64 / (self.rays_v - 1) as f64);
                    for j in 0..self.rays_h {
                        let u = th * (1.0 - 2.0 * j as f64 / (self.rays_h - 1) as f64);
                        out.push(Vector3::new(1.0, u, v).normalize());
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayKind {
    /// Return within `[d_min, d_max]`.
    Hit,
    /// Nothing within `d_max`; the point sits at `d_max` and free space is carved up to it.
    MaxRange,
    /// Return nearer than `d_min`; discarded by integration.
    TooNear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRay {
    /// Endpoint in the sensor frame.
    pub point: Point3<f64>,
    pub kind: RayKind,
}

/// One record per sensor ray.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scan {
    pub rays: Vec<ScanRay>,
}

impl Scan {
    /// Endpoints of hits and max-range rays transformed into another frame.
    pub fn endpoints(&self, t: &Pose) -> Vec<Point3<f64>> {
        self.rays
            .iter()
            .filter(|r| r.kind != RayKind::TooNear)
            .map(|r| t * r.point)
            .collect()
    }
}

/// Scan simulator with cached ray directions.
#[derive(Clone, Debug)]
pub struct Scanner {
    sensor: SensorModel,
    dirs: Vec<Vector3<f64>>,
}

impl Scanner {
    pub fn new(sensor: SensorModel) -> Self {
        let dirs = sensor.ray_directions();
        Self { sensor, dirs }
    }

    pub fn sensor(&self) -> &SensorModel {
        &self.sensor
    }

    /// Simulates a scan at `t_w_s`. Range noise is applied only when the sensor has a
    /// positive `noise_sigma` and a seed is given.
    pub fn scan(&self, env: &Environment, t_w_s: &Pose, noise_seed: Option<u64>) -> Scan {
        let s = &self.sensor;
        let origin = Point3::from(t_w_s.translation.vector);
        let mut noise = match noise_seed {
            Some(seed) if s.noise_sigma > 0.0 => Some((
                ChaCha8Rng::seed_from_u64(seed),
                Normal::new(0.0, s.noise_sigma).expect("valid sigma"),
            )),
            _ => None,
        };
        let ranges: Vec<Option<f64>> = self
            .dirs
            .par_iter()
            .map(|d| env.raycast(&origin, &(t_w_s.rotation * d), s.d_max))
            .collect();
        let rays = self
            .dirs
            .iter()
            .zip(ranges)
            .map(|(d, range)| {
                let range = range.map(|t| match &mut noise {
                    Some((rng, n)) => t + n.sample(rng),
                    None => t,
                });
                match range {
                    Some(t) if t < s.d_min => ScanRay {
                        point: Point3::from(d * t.max(0.0)),
                        kind: RayKind::TooNear,
                    },
                    Some(t) if t <= s.d_max => ScanRay {
                        point: Point3::from(d * t),
                        kind: RayKind::Hit,
                    },
                    _ => ScanRay {
                        point: Point3::from(d * s.d_max),
                        kind: RayKind::MaxRange,
                    },
                }
            })
            .collect();
        Scan { rays }
    }
}

/// One-shot scan simulation; prefer [`Scanner`] when scanning repeatedly.
pub fn simulate_scan(env: &Environment, sensor: &SensorModel, t_w_s: &Pose, noise_seed: Option<u64>) -> Scan {
    Scanner::new(sensor.clone()).scan(env, t_w_s, noise_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pose_from_yaw, Aabb};

    fn closed_box() -> Environment {
        // 4 m interior enclosed by 0.2 m walls.
        let mut solids = Vec::new();
        for a in 0..3 {
            let mut lo = [-0.2; 3];
            let mut hi = [4.2; 3];
            hi[a] = 0.0;
            solids.push(Aabb::from_corners(lo, hi));
            lo[a] = 4.0;
            hi[a] = 4.2;
            solids.push(Aabb::from_corners(lo, hi));
        }
        Environment::new(Aabb::from_corners([-0.2; 3], [4.2; 3]), solids, 0.1).unwrap()
    }

    #[test]
    fn lidar_ray_count() {
        let s = SensorModel::lidar();
        s.validate().unwrap();
        assert_eq!(s.ray_directions().len(), 64_800);
        for d in s.ray_directions() {
            assert!((d.norm() - 1.0).abs() < 1e-12);
            assert!(d.z.abs() <= (PI / 4.0).sin() + 1e-12);
        }
    }

    #[test]
    fn enclosed_sensor_always_hits() {
        let env = closed_box();
        let mut s = SensorModel::lidar();
        s.rays_h = 36;
        s.rays_v = 18;
        s.d_min = 0.1;
        let scan = simulate_scan(&env, &s, &pose_from_yaw(Point3::new(2.0, 2.0, 2.0), 0.3), None);
        assert_eq!(scan.rays.len(), 36 * 18);
        for r in &scan.rays {
            assert_eq!(r.kind, RayKind::Hit);
            assert!(r.point.coords.norm() <= 4.0 * 3f64.sqrt());
        }
    }

    #[test]
    fn open_sky_reports_max_range() {
        let env = Environment::new(Aabb::from_corners([0.0; 3], [50.0; 3]), vec![], 0.5).unwrap();
        let s = SensorModel::lidar();
        let scan = simulate_scan(&env, &s, &pose_from_yaw(Point3::new(25.0, 25.0, 25.0), 0.0), None);
        assert!(scan.rays.iter().all(|r| r.kind == RayKind::MaxRange));
        assert!(scan.rays.iter().all(|r| (r.point.coords.norm() - s.d_max).abs() < 1e-9));
    }

    #[test]
    fn near_returns_flagged() {
        let env = closed_box();
        let s = SensorModel::lidar();
        let scan = simulate_scan(&env, &s, &pose_from_yaw(Point3::new(0.5, 2.0, 2.0), 0.0), None);
        assert!(scan.rays.iter().any(|r| r.kind == RayKind::TooNear));
    }

    #[test]
    fn noise_is_seeded() {
        let env = closed_box();
        let mut s = SensorModel::lidar();
        s.rays_h = 20;
        s.rays_v = 10;
        s.noise_sigma = 0.01;
        let pose = pose_from_yaw(Point3::new(2.0, 2.0, 2.0), 0.0);
        let a = simulate_scan(&env, &s, &pose, Some(3));
        let b = simulate_scan(&env, &s, &pose, Some(3));
        let c = simulate_scan(&env, &s, &pose, None);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn depth_camera_frustum() {
        let s = SensorModel::depth_camera();
        s.validate().unwrap();
        let dirs = s.ray_directions();
        assert_eq!(dirs.len(), s.rays_h * s.rays_v);
        let max_az = dirs.iter().map(|d| d.y.atan2(d.x).abs()).fold(0.0, f64::max);
        assert!((max_az - s.alpha_h / 2.0).abs() < 1e-9);
    }
}
