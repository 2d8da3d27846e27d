//! Keyframe-anchored submaps, simulated odometry drift and loop closure.
//!
//! Every submap stores a fixed transform `T_KS` relative to the keyframe it is anchored to.
//! Its world pose is `T_WS = T_WK * T_KS` with the keyframe's current estimate, so a
//! keyframe correction moves every anchored submap rigidly and leaves its voxels untouched.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontiers::{finalize_local_frontiers, update_local_frontiers, FrontierUpdate, LocalFrontierSet};
use crate::geometry::{pose_delta, Pose};
use crate::occupancy::{IntegrationStats, OccupancyParams, OccupancySubmap};
use crate::world::Scan;

#[derive(Clone, Copy, Debug)]
pub struct Keyframe {
    pub id: u32,
    pub t_w_k_est: Pose,
    pub t_w_k_true: Pose,
}

/// Per-keyframe odometry noise: translation std in m per axis, rotation std in rad per axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub sigma_t: f64,
    pub sigma_r: f64,
}

impl DriftParams {
    pub fn is_zero(&self) -> bool {
        self.sigma_t == 0.0 && self.sigma_r == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopParams {
    pub enabled: bool,
    pub revisit_radius: f64,
    /// Minimum keyframe-id gap to the matched keyframe and to the previous closure.
    pub min_gap: u32,
    /// Translation std of the corrected estimates.
    pub residual_sigma: f64,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            enabled: true,
            revisit_radius: 2.0,
            min_gap: 30,
            residual_sigma: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopClosure {
    pub kf: u32,
    pub matched_kf: u32,
    pub delta_t: f64,
    pub delta_r: f64,
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// Keyframes with ground-truth and estimated poses.
#[derive(Clone, Debug)]
pub struct KeyframeGraph {
    keyframes: Vec<Keyframe>,
    drift: DriftParams,
    loop_params: LoopParams,
    rng: ChaCha8Rng,
    last_closure: Option<u32>,
}

impl KeyframeGraph {
    pub fn new(drift: DriftParams, loop_params: LoopParams, seed: u64) -> Self {
        Self {
            keyframes: Vec::new(),
            drift,
            loop_params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_closure: None,
        }
    }

    pub fn drift(&self) -> &DriftParams {
        &self.drift
    }

    pub fn loop_params(&self) -> &LoopParams {
        &self.loop_params
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Keyframe> {
        self.keyframes.get(id as usize)
    }

    pub fn latest(&self) -> Option<&Keyframe> {
        self.keyframes.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Keyframe> {
        self.keyframes.iter()
    }

    /// Estimate for a new keyframe at `true_pose`: the true relative motion since the
    /// previous keyframe composed with one noise increment. The first keyframe is exact.
    pub fn step_drift(&mut self, true_pose: &Pose) -> Pose {
        let Some(prev) = self.keyframes.last().copied() else {
            return *true_pose;
        };
        let base = if prev.t_w_k_est == prev.t_w_k_true {
            *true_pose
        } else {
            prev.t_w_k_est * (prev.t_w_k_true.inverse() * true_pose)
        };
        if self.drift.is_zero() {
            return base;
        }
        let t = gaussian(&mut self.rng, self.drift.sigma_t);
        let r = gaussian(&mut self.rng, self.drift.sigma_r);
        let mut est = base * Isometry3::from_parts(Translation3::from(t), UnitQuaternion::from_scaled_axis(r));
        est.rotation.renormalize();
        est
    }

    /// Appends a keyframe and returns its id.
    pub fn add_keyframe(&mut self, true_pose: Pose) -> u32 {
        let est = self.step_drift(&true_pose);
        let id = self.keyframes.len() as u32;
        self.keyframes.push(Keyframe {
            id,
            t_w_k_est: est,
            t_w_k_true: true_pose,
        });
        id
    }

    /// Transform taking true world coordinates to the estimated frame of keyframe `id`.
    pub fn correction(&self, id: u32) -> Pose {
        self.get(id)
            .map(|k| {
                if k.t_w_k_est == k.t_w_k_true {
                    Pose::identity()
                } else {
                    k.t_w_k_est * k.t_w_k_true.inverse()
                }
            })
            .unwrap_or_else(Pose::identity)
    }

    /// Applies `g` on the left of every estimate, re-expressing the estimated world frame.
    pub fn transform_estimates(&mut self, g: &Pose) {
        for k in &mut self.keyframes {
            k.t_w_k_est = g * k.t_w_k_est;
        }
    }

    /// Revisit check for `current`. On a match every estimate is reset to its ground truth
    /// composed with a translation-only residual.
    pub fn try_loop_closure(&mut self, current: u32) -> Option<LoopClosure> {
        let lp = self.loop_params;
        if !lp.enabled {
            return None;
        }
        if let Some(last) = self.last_closure {
            if current < last + lp.min_gap {
                return None;
            }
        }
        let cur = *self.get(current)?;
        let matched = self
            .keyframes
            .iter()
            .take_while(|k| k.id + lp.min_gap <= current)
            .find(|k| (k.t_w_k_true.translation.vector - cur.t_w_k_true.translation.vector).norm() <= lp.revisit_radius)?
            .id;
        for k in &mut self.keyframes {
            let res = gaussian(&mut self.rng, lp.residual_sigma);
            k.t_w_k_est = if res == Vector3::zeros() {
                k.t_w_k_true
            } else {
                Translation3::from(res) * k.t_w_k_true
            };
        }
        self.last_closure = Some(current);
        let (delta_t, delta_r) = pose_delta(&cur.t_w_k_est, &self.keyframes[current as usize].t_w_k_est);
        Some(LoopClosure {
            kf: current,
            matched_kf: matched,
            delta_t,
            delta_r,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CreationPolicy {
    /// New submap when the fraction of scan endpoints inside the active cube drops below `tau`.
    LidarOverlap { tau: f64 },
    /// New submap when the current keyframe is more than `d_t` m or `d_r` rad from the
    /// active submap's anchor keyframe.
    CameraKeyframe { d_t: f64, d_r: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubmapConfig {
    pub resolution: f64,
    pub dim: i32,
    pub occupancy: OccupancyParams,
    pub policy: CreationPolicy,
}

#[derive(Clone, Debug)]
pub struct Submap {
    pub map: OccupancySubmap,
    pub frontiers: LocalFrontierSet,
}

/// All submaps plus the keyframe graph that anchors them. Exactly one submap is active.
#[derive(Clone, Debug)]
pub struct SubmapCollection {
    submaps: Vec<Submap>,
    active: usize,
    graph: KeyframeGraph,
    config: SubmapConfig,
}

impl SubmapCollection {
    /// Creates the collection with a first submap anchored at keyframe `kf`, centred on the
    /// estimated sensor position.
    pub fn new(config: SubmapConfig, graph: KeyframeGraph, kf: u32, t_w_sensor: &Pose) -> Result<Self> {
        if !(config.resolution > 0.0) || config.dim <= 0 || config.dim % 8 != 0 {
            return Err(Error::InvalidConfig(
                "submap resolution must be positive and dim a positive multiple of 8".into(),
            ));
        }
        let mut c = Self {
            submaps: Vec::new(),
            active: 0,
            graph,
            config,
        };
        c.push_submap(kf, t_w_sensor)?;
        Ok(c)
    }

    pub fn config(&self) -> &SubmapConfig {
        &self.config
    }

    pub fn graph(&self) -> &KeyframeGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut KeyframeGraph {
        &mut self.graph
    }

    pub fn submaps(&self) -> &[Submap] {
        &self.submaps
    }

    pub fn len(&self) -> usize {
        self.submaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submaps.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Submap> {
        self.submaps.get(id as usize)
    }

    pub fn active_id(&self) -> u32 {
        self.active as u32
    }

    pub fn active(&self) -> &Submap {
        &self.submaps[self.active]
    }

    pub fn active_mut(&mut self) -> &mut Submap {
        &mut self.submaps[self.active]
    }

    pub fn allocated_blocks(&self) -> usize {
        self.submaps.iter().map(|s| s.map.allocated_blocks()).sum()
    }

    fn push_submap(&mut self, kf: u32, t_w_sensor: &Pose) -> Result<u32> {
        let anchor = self.graph.get(kf).ok_or(Error::UnknownSubmap(kf))?;
        let res = self.config.resolution;
        let half = (self.config.dim / 2) as f64;
        let p = t_w_sensor.translation.vector;
        let origin = Vector3::new(
            ((p.x / res).floor() - half) * res,
            ((p.y / res).floor() - half) * res,
            ((p.z / res).floor() - half) * res,
        );
        let t_ws = Pose::from_parts(Translation3::from(origin), UnitQuaternion::identity());
        let t_ks = anchor.t_w_k_est.inverse() * t_ws;
        let id = self.submaps.len() as u32;
        self.submaps.push(Submap {
            map: OccupancySubmap::new(id, res, self.config.dim, kf, t_ks, self.config.occupancy),
            frontiers: LocalFrontierSet::new(id),
        });
        self.active = id as usize;
        Ok(id)
    }

    /// `T_WS` of submap `id` under the current keyframe estimates.
    pub fn world_pose(&self, id: u32) -> Result<Pose> {
        let s = self.get(id).ok_or(Error::UnknownSubmap(id))?;
        Ok(self.pose_of(&s.map))
    }

    fn pose_of(&self, map: &OccupancySubmap) -> Pose {
        let k = self.graph.get(map.anchor_kf()).expect("anchor keyframe exists");
        k.t_w_k_est * map.t_ks()
    }

    /// World poses of all submaps, in id order.
    pub fn world_poses(&self) -> Vec<Pose> {
        self.submaps.iter().map(|s| self.pose_of(&s.map)).collect()
    }

    /// Integrates a scan taken at estimated world pose `t_w_sensor` into the active submap.
    pub fn integrate(&mut self, scan: &Scan, t_w_sensor: &Pose) -> Result<IntegrationStats> {
        let t_s_sensor = self.pose_of(&self.active().map).inverse() * t_w_sensor;
        self.active_mut().map.integrate_scan(scan, &t_s_sensor)
    }

    /// Marks a sphere around an estimated world position as free in the active submap.
    pub fn integrate_free_sphere(&mut self, center_world: &Point3<f64>, radius: f64) -> Result<IntegrationStats> {
        let c = self.pose_of(&self.active().map).inverse() * center_world;
        self.active_mut().map.integrate_free_sphere(&c, radius)
    }

    pub fn update_active_frontiers(&mut self, step: u64) -> Result<FrontierUpdate> {
        let s = &mut self.submaps[self.active];
        update_local_frontiers(&mut s.map, &mut s.frontiers, step)
    }

    /// Applies the creation policy; on creation the active submap's frontiers are finalized,
    /// its map frozen, and a new submap anchored at `current_kf` becomes active.
    /// `endpoints_world` are the latest scan's endpoints in the estimated world frame.
    pub fn maybe_create_submap(
        &mut self,
        endpoints_world: &[Point3<f64>],
        current_kf: u32,
        t_w_sensor: &Pose,
        step: u64,
    ) -> Result<Option<u32>> {
        let create = match self.config.policy {
            CreationPolicy::LidarOverlap { tau } => {
                if endpoints_world.is_empty() {
                    false
                } else {
                    let map = &self.active().map;
                    let inv = self.pose_of(map).inverse();
                    let inside = endpoints_world.iter().filter(|p| map.key_of(&(inv * *p)).is_some()).count();
                    (inside as f64) / (endpoints_world.len() as f64) < tau
                }
            }
            CreationPolicy::CameraKeyframe { d_t, d_r } => {
                let anchor = self.graph.get(self.active().map.anchor_kf());
                let cur = self.graph.get(current_kf);
                match (anchor, cur) {
                    (Some(a), Some(c)) if a.id != c.id => {
                        let (dt, dr) = pose_delta(&a.t_w_k_est, &c.t_w_k_est);
                        dt > d_t || dr > d_r
                    }
                    _ => false,
                }
            }
        };
        if !create {
            return Ok(None);
        }
        let s = &mut self.submaps[self.active];
        finalize_local_frontiers(&mut s.map, &mut s.frontiers, step)?;
        s.map.freeze();
        self.push_submap(current_kf, t_w_sensor).map(Some)
    }

    /// Loop-closure check for `current_kf`; submap poses follow their anchors implicitly.
    pub fn apply_loop_closure(&mut self, current_kf: u32) -> Option<LoopClosure> {
        self.graph.try_loop_closure(current_kf)
    }
}
