//! Mission configuration: presets, `key = value` files and validation.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::occupancy::OccupancyParams;
use crate::planner::{MavModel, PlannerParams};
use crate::submaps::{CreationPolicy, DriftParams, LoopParams};
use crate::world::{SensorKind, SensorModel};

#[derive(Clone, Debug, PartialEq)]
pub struct MissionConfig {
    /// Scene file; `None` selects the built-in depot analog.
    pub scene: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub sensor: SensorModel,
    pub mav: MavModel,
    pub resolution: f64,
    pub submap_dim: i32,
    pub occupancy: OccupancyParams,
    pub planner: PlannerParams,
    pub policy: CreationPolicy,
    pub drift: DriftParams,
    pub loop_closure: LoopParams,
    pub sense_period: f64,
    pub kf_period: f64,
    pub dt: f64,
    pub max_sim_time: f64,
    pub start: [f64; 3],
    pub start_yaw: f64,
    /// Radius of the sphere around the start marked free before the first scan.
    pub start_free_radius: f64,
    /// True clearance below which the mission aborts.
    pub collision_radius: f64,
    /// Sensor-position stride, in voxels, of the observable-volume oracle.
    pub obs_stride: u32,
    /// Record the reconstruction RMSE before and after every loop closure.
    pub eval_closure_rmse: bool,
}

impl MissionConfig {
    /// LiDAR simulation preset.
    pub fn lidar() -> Self {
        Self {
            scene: None,
            out: None,
            seed: 0,
            sensor: SensorModel::lidar(),
            mav: MavModel {
                radius: 0.5,
                v_max: 0.5,
                w_max: 0.5,
            },
            resolution: 0.1,
            submap_dim: 256,
            occupancy: OccupancyParams::default(),
            planner: PlannerParams::default(),
            policy: CreationPolicy::LidarOverlap { tau: 0.8 },
            drift: DriftParams::default(),
            loop_closure: LoopParams::default(),
            sense_period: 0.5,
            kf_period: 1.0,
            dt: 0.05,
            max_sim_time: 1200.0,
            start: [2.0, 2.0, 1.5],
            start_yaw: 0.0,
            start_free_radius: 1.5,
            collision_radius: 0.25,
            obs_stride: 4,
            eval_closure_rmse: false,
        }
    }

    /// Depth-camera preset.
    pub fn depth() -> Self {
        Self {
            sensor: SensorModel::depth_camera(),
            mav: MavModel {
                radius: 0.6,
                v_max: 0.5,
                w_max: 0.785,
            },
            policy: CreationPolicy::CameraKeyframe {
                d_t: 2.0,
                d_r: 30f64.to_radians(),
            },
            ..Self::lidar()
        }
    }

    pub fn preset(kind: SensorKind) -> Self {
        match kind {
            SensorKind::Lidar => Self::lidar(),
            SensorKind::DepthCamera => Self::depth(),
        }
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped; relative
    /// paths resolve against `base`.
    pub fn apply_text(&mut self, text: &str, source: &Path, base: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: source.to_path_buf(),
                line: n + 1,
                message,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            self.set(k.trim(), v.trim(), base).map_err(|e| match e {
                Error::InvalidConfig(m) => err(m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.apply_text(&text, path, base)
    }

    /// Sets one key. Angles in keys ending in `_deg` are degrees.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value `{v}` for `{key}`")))
        }
        let f = |v: &str| num::<f64>(key, v);
        let deg = |v: &str| num::<f64>(key, v).map(f64::to_radians);
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        match key {
            "scene" => self.scene = if value == "depot_analog" { None } else { Some(path(value)) },
            "out" => self.out = Some(path(value)),
            "seed" => self.seed = num(key, value)?,
            "sensor.kind" => {
                self.sensor.kind = match value {
                    "lidar" => SensorKind::Lidar,
                    "depth" | "depth_camera" => SensorKind::DepthCamera,
                    _ => return Err(Error::InvalidConfig(format!("unknown sensor kind `{value}`"))),
                }
            }
            "sensor.alpha_h_deg" => self.sensor.alpha_h = deg(value)?,
            "sensor.alpha_v_deg" => self.sensor.alpha_v = deg(value)?,
            "sensor.d_min" => self.sensor.d_min = f(value)?,
            "sensor.d_max" => self.sensor.d_max = f(value)?,
            "sensor.rays_h" => self.sensor.rays_h = num(key, value)?,
            "sensor.rays_v" => self.sensor.rays_v = num(key, value)?,
            "sensor.rate" => self.sensor.rate = f(value)?,
            "sensor.noise_sigma" => self.sensor.noise_sigma = f(value)?,
            "mav.radius" => self.mav.radius = f(value)?,
            "mav.v_max" => self.mav.v_max = f(value)?,
            "mav.w_max" => self.mav.w_max = f(value)?,
            "map.resolution" => self.resolution = f(value)?,
            "map.submap_dim" => self.submap_dim = num(key, value)?,
            "map.l_occ" => self.occupancy.hit = num(key, value)?,
            "map.l_free" => self.occupancy.miss = num(key, value)?,
            "map.l_min" => self.occupancy.min = num(key, value)?,
            "map.l_max" => self.occupancy.max = num(key, value)?,
            "planner.n_c" => self.planner.n_c = num(key, value)?,
            "planner.shell_min" => self.planner.shell_min = f(value)?,
            "planner.shell_max" => self.planner.shell_max = f(value)?,
            "planner.max_tries" => self.planner.max_tries = num(key, value)?,
            "planner.gain_az" => self.planner.gain_az = num(key, value)?,
            "planner.gain_el" => self.planner.gain_el = num(key, value)?,
            "planner.window_360_deg" => self.planner.window_360 = deg(value)?,
            "planner.margin" => self.planner.margin = f(value)?,
            "planner.unknown_traversable" => self.planner.unknown_traversable = num(key, value)?,
            "planner.min_gain" => self.planner.min_gain = f(value)?,
            "submap.policy" => {
                self.policy = match value {
                    "lidar_overlap" => CreationPolicy::LidarOverlap { tau: 0.8 },
                    "camera_keyframe" => CreationPolicy::CameraKeyframe {
                        d_t: 2.0,
                        d_r: 30f64.to_radians(),
                    },
                    _ => return Err(Error::InvalidConfig(format!("unknown submap policy `{value}`"))),
                }
            }
            "submap.overlap_tau" => match &mut self.policy {
                CreationPolicy::LidarOverlap { tau } => *tau = f(value)?,
                _ => {
                    return Err(Error::InvalidConfig(
                        "`submap.overlap_tau` needs the lidar_overlap policy".into(),
                    ))
                }
            },
            "submap.kf_dist" => match &mut self.policy {
                CreationPolicy::CameraKeyframe { d_t, .. } => *d_t = f(value)?,
                _ => {
                    return Err(Error::InvalidConfig(
                        "`submap.kf_dist` needs the camera_keyframe policy".into(),
                    ))
                }
            },
            "submap.kf_angle_deg" => match &mut self.policy {
                CreationPolicy::CameraKeyframe { d_r, .. } => *d_r = deg(value)?,
                _ => {
                    return Err(Error::InvalidConfig(
                        "`submap.kf_angle_deg` needs the camera_keyframe policy".into(),
                    ))
                }
            },
            "drift.sigma_t" => self.drift.sigma_t = f(value)?,
            "drift.sigma_r" => self.drift.sigma_r = f(value)?,
            "loop.enabled" => self.loop_closure.enabled = num(key, value)?,
            "loop.revisit_radius" => self.loop_closure.revisit_radius = f(value)?,
            "loop.min_gap" => self.loop_closure.min_gap = num(key, value)?,
            "loop.residual_sigma" => self.loop_closure.residual_sigma = f(value)?,
            "sense_period" => self.sense_period = f(value)?,
            "kf_period" => self.kf_period = f(value)?,
            "dt" => self.dt = f(value)?,
            "max_sim_time" => self.max_sim_time = f(value)?,
            "start" => {
                let parts: Vec<f64> = value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(f)
                    .collect::<Result<_>>()?;
                self.start = parts
                    .try_into()
                    .map_err(|_| Error::InvalidConfig("`start` needs three numbers".into()))?;
            }
            "start_yaw_deg" => self.start_yaw = deg(value)?,
            "start_free_radius" => self.start_free_radius = f(value)?,
            "collision_radius" => self.collision_radius = f(value)?,
            "eval.obs_stride" => self.obs_stride = num(key, value)?,
            "eval.closure_rmse" => self.eval_closure_rmse = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.mav.validate()?;
        self.planner.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.resolution > 0.0) {
            return bad("map.resolution must be positive");
        }
        if self.submap_dim <= 0 || self.submap_dim % 8 != 0 {
            return bad("map.submap_dim must be a positive multiple of 8");
        }
        let o = &self.occupancy;
        if !(o.hit > 0.0 && o.miss < 0.0 && o.min < 0.0 && o.max > 0.0) {
            return bad("log-odds increments and clamps must straddle zero");
        }
        if !(self.dt > 0.0 && self.sense_period >= self.dt && self.kf_period >= self.dt) {
            return bad("dt, sense_period and kf_period must be positive and periods at least dt");
        }
        if !(self.max_sim_time >= 0.0) {
            return bad("max_sim_time must be non-negative");
        }
        if self.drift.sigma_t < 0.0 || self.drift.sigma_r < 0.0 || self.loop_closure.residual_sigma < 0.0 {
            return bad("noise parameters must be non-negative");
        }
        if self.start_free_radius < 0.0 || self.collision_radius < 0.0 || self.obs_stride == 0 {
            return bad("start_free_radius, collision_radius and eval.obs_stride out of range");
        }
        match self.policy {
            CreationPolicy::LidarOverlap { tau } if !(0.0..=1.0).contains(&tau) => bad("submap.overlap_tau must be in [0, 1]"),
            CreationPolicy::CameraKeyframe { d_t, d_r } if !(d_t > 0.0 && d_r > 0.0) => {
                bad("submap.kf_dist and kf_angle must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Steps per sensing and keyframe period.
    pub(crate) fn step_counts(&self) -> (u64, u64, u64) {
        let per = |p: f64| ((p / self.dt).round() as u64).max(1);
        let total = (self.max_sim_time / self.dt).round() as u64;
        (per(self.sense_period), per(self.kf_period), total)
    }
}
