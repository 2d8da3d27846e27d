//! The mission loop: kinematic flight, sensing and keyframe schedules, planning, metrics.

use std::time::{Duration, Instant};

use nalgebra::Point3;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::frontiers::{compute_global_frontiers, GlobalFrontierSet};
use crate::geometry::{pose_from_yaw, wrap_angle, yaw_of, Pose};
use crate::occupancy::OccupancySubmap;
use crate::planner::{select_next_view, CompletionReason, Outcome, PlanState};
use crate::submaps::{KeyframeGraph, SubmapCollection, SubmapConfig};
use crate::world::{
    depot_analog, load_scene, observable_volume, Environment, ObservableVolume, Scanner, SensorKind, VisibilityParams,
};

use super::config::MissionConfig;
use super::metrics::{
    fused_surface, reconstruction_metrics_with, safety_histogram, ObservedGrid, ReconstructionMetrics, SafetyHistogram,
};

const DRIFT_STREAM: u64 = 0x6b65_7966_7261_6d65;
const NOISE_STREAM: u64 = 0x7363_616e_6e6f_6973;
const PLAN_STREAM: u64 = 0x706c_616e_6e65_7273;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    ExplorationComplete { reason: CompletionReason },
    MaxSimTime,
    Collision,
    ScriptFinished,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolumeSample {
    pub t: f64,
    pub observed: usize,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClearanceSample {
    pub t: f64,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Point3<f64>,
    pub yaw: f64,
    pub estimate: Point3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollisionReport {
    pub t: f64,
    pub position: [f64; 3],
    pub clearance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosureRecord {
    pub t: f64,
    pub kf: u32,
    pub matched_kf: u32,
    pub delta_t: f64,
    pub delta_r: f64,
    /// Reconstruction RMSE under the submap poses just before and just after the correction.
    pub rmse_before: Option<f64>,
    pub rmse_after: Option<f64>,
    /// Largest difference between a submap's pose change and its anchor keyframe's
    /// change (translation in m plus rotation in rad).
    pub rigidity_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MemoryProxy {
    pub blocks: usize,
    pub bytes: usize,
}

/// Wall-clock seconds per code section. Kept out of the deterministic report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timing {
    pub frontier_s: f64,
    pub utility_s: f64,
    pub planning_s: f64,
    pub sensing_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scene: String,
    pub sensor: SensorKind,
    pub seed: u64,
    pub termination: Termination,
    pub sim_time: f64,
    pub steps: u64,
    pub scans: u64,
    pub planner_iterations: u64,
    pub path_length: f64,
    pub observable_voxels: usize,
    pub observed_voxels: usize,
    pub fraction: f64,
    /// First time the observed fraction reached 0.95.
    pub t_95: Option<f64>,
    pub submaps: usize,
    pub keyframes: usize,
    pub loop_closures: Vec<ClosureRecord>,
    pub rmse: Option<f64>,
    pub completeness_02: Option<f64>,
    pub completeness_04: Option<f64>,
    pub reconstruction: Option<ReconstructionMetrics>,
    pub min_clearance: Option<f64>,
    pub safety_histogram: SafetyHistogram,
    pub peak_memory_proxy: MemoryProxy,
    pub collision: Option<CollisionReport>,
    pub volume_series: Vec<VolumeSample>,
    pub min_clearance_series: Vec<ClearanceSample>,
    #[serde(skip)]
    pub timing: Timing,
}

/// Everything a mission produces.
#[derive(Clone, Debug)]
pub struct MissionOutput {
    pub report: MetricsReport,
    pub trajectory: Vec<TrajectorySample>,
    pub frontiers: GlobalFrontierSet,
    pub surface: Vec<Point3<f64>>,
    /// JSON event lines.
    pub log: Vec<String>,
    pub collection: SubmapCollection,
}

/// Loads the configured scene.
pub fn load_environment(cfg: &MissionConfig) -> Result<Environment> {
    match &cfg.scene {
        None => Ok(depot_analog(cfg.resolution)),
        Some(p) => load_scene(p, cfg.resolution),
    }
}

pub fn visibility_params(cfg: &MissionConfig) -> VisibilityParams {
    VisibilityParams {
        mav_radius: cfg.mav.radius,
        d_min: cfg.sensor.d_min,
        d_max: cfg.sensor.d_max,
        position_stride: cfg.obs_stride,
    }
}

/// Runs an autonomous mission on the configured scene.
pub fn run_mission(cfg: &MissionConfig) -> Result<MissionOutput> {
    cfg.validate()?;
    let env = load_environment(cfg)?;
    let vobs = observable_volume(&env, &Point3::from(cfg.start), &visibility_params(cfg))?;
    run_mission_in(cfg, &env, &vobs)
}

/// Runs an autonomous mission on a prepared scene and observable volume. The observable
/// volume depends only on the scene, start and visibility parameters, so it can be shared
/// across seeds.
pub fn run_mission_in(cfg: &MissionConfig, env: &Environment, vobs: &ObservableVolume) -> Result<MissionOutput> {
    Sim::new(cfg, env, vobs)?.run(Driver::Autonomous)
}

/// Flies straight segments through `waypoints` (true world frame) without planning, with
/// the sensing, keyframe, drift and loop-closure schedules of a normal mission. Every loop
/// closure records the reconstruction RMSE before and after the correction.
pub fn run_scripted(
    cfg: &MissionConfig,
    env: &Environment,
    vobs: &ObservableVolume,
    waypoints: &[Point3<f64>],
) -> Result<MissionOutput> {
    let mut sim = Sim::new(cfg, env, vobs)?;
    sim.closure_rmse = true;
    sim.run(Driver::Scripted(waypoints.to_vec()))
}

enum Driver {
    Autonomous,
    Scripted(Vec<Point3<f64>>),
}

/// Active motion command: fly `path` at `v_max`, then yaw to `psi` at `w_max`.
struct Motion {
    path: Vec<Point3<f64>>,
    next: usize,
    psi: Option<f64>,
}

struct Sim<'a> {
    cfg: &'a MissionConfig,
    env: &'a Environment,
    vobs: &'a ObservableVolume,
    scanner: Scanner,
    coll: SubmapCollection,
    observed: ObservedGrid,
    true_pose: Pose,
    closure_rmse: bool,
    log: Vec<String>,
    volume: Vec<VolumeSample>,
    clearance: Vec<ClearanceSample>,
    trajectory: Vec<TrajectorySample>,
    closures: Vec<ClosureRecord>,
    scans: u64,
    iterations: u64,
    path_length: f64,
    peak_blocks: usize,
    t_95: Option<f64>,
    frontier_time: Duration,
    utility_time: Duration,
    planning_time: Duration,
    sensing_time: Duration,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a MissionConfig, env: &'a Environment, vobs: &'a ObservableVolume) -> Result<Self> {
        cfg.validate()?;
        let start = Point3::from(cfg.start);
        let c0 = env.clearance(&start);
        if !env.bounds().contains(&start) || c0 < cfg.mav.radius {
            return Err(Error::StartInCollision(cfg.start, c0));
        }
        let true_pose = pose_from_yaw(start, cfg.start_yaw);
        let mut graph = KeyframeGraph::new(cfg.drift, cfg.loop_closure, cfg.seed ^ DRIFT_STREAM);
        let kf = graph.add_keyframe(true_pose);
        let est = graph.correction(kf) * true_pose;
        let config = SubmapConfig {
            resolution: cfg.resolution,
            dim: cfg.submap_dim,
            occupancy: cfg.occupancy,
            policy: cfg.policy,
        };
        let mut coll = SubmapCollection::new(config, graph, kf, &est)?;
        let r = cfg.start_free_radius.min(c0 - cfg.resolution);
        if r > 0.0 {
            coll.integrate_free_sphere(&Point3::from(est.translation.vector), r)?;
        }
        Ok(Self {
            cfg,
            env,
            vobs,
            scanner: Scanner::new(cfg.sensor.clone()),
            coll,
            observed: ObservedGrid::new(env),
            true_pose,
            closure_rmse: cfg.eval_closure_rmse,
            log: Vec::new(),
            volume: Vec::new(),
            clearance: Vec::new(),
            trajectory: Vec::new(),
            closures: Vec::new(),
            scans: 0,
            iterations: 0,
            path_length: 0.0,
            peak_blocks: 0,
            t_95: None,
            frontier_time: Duration::ZERO,
            utility_time: Duration::ZERO,
            planning_time: Duration::ZERO,
            sensing_time: Duration::ZERO,
        })
    }

    fn correction(&self) -> Pose {
        let g = self.coll.graph();
        g.latest().map_or_else(Pose::identity, |k| g.correction(k.id))
    }

    fn estimate(&self) -> Pose {
        let c = self.correction();
        if c == Pose::identity() {
            self.true_pose
        } else {
            c * self.true_pose
        }
    }

    fn event(&mut self, t: f64, kind: &str, mut body: serde_json::Value) {
        let mut line = json!({ "t": round6(t), "event": kind });
        if let (Some(l), Some(b)) = (line.as_object_mut(), body.as_object_mut()) {
            l.append(b);
        }
        self.log.push(line.to_string());
    }

    fn keyframe(&mut self, t: f64) -> Result<bool> {
        let kf = self.coll.graph_mut().add_keyframe(self.true_pose);
        let kf_before: Vec<Pose> = self.coll.graph().iter().map(|k| k.t_w_k_est).collect();
        let before = self.coll.world_poses();
        let Some(c) = self.coll.apply_loop_closure(kf) else {
            return Ok(false);
        };
        let after = self.coll.world_poses();
        let rigidity_error = self
            .coll
            .submaps()
            .iter()
            .zip(before.iter().zip(&after))
            .map(|(s, (b, a))| {
                let anchor = s.map.anchor_kf();
                let k_after = self.coll.graph().get(anchor).expect("anchor exists").t_w_k_est;
                let d_sub = a * b.inverse();
                let d_kf = k_after * kf_before[anchor as usize].inverse();
                let e = d_sub.inverse() * d_kf;
                e.translation.vector.norm() + e.rotation.angle()
            })
            .fold(0.0, f64::max);
        let (rmse_before, rmse_after) = if self.closure_rmse {
            (
                reconstruction_metrics_with(self.coll.submaps(), &before, self.env)
                    .ok()
                    .map(|m| m.rmse),
                reconstruction_metrics_with(self.coll.submaps(), &after, self.env)
                    .ok()
                    .map(|m| m.rmse),
            )
        } else {
            (None, None)
        };
        let rec = ClosureRecord {
            t,
            kf: c.kf,
            matched_kf: c.matched_kf,
            delta_t: c.delta_t,
            delta_r: c.delta_r,
            rmse_before,
            rmse_after,
            rigidity_error,
        };
        self.closures.push(rec);
        self.event(t, "loop_closure", serde_json::to_value(rec)?);
        Ok(true)
    }

    fn sense(&mut self, t: f64, step: u64) -> Result<()> {
        let clock = Instant::now();
        let noise_seed = self.cfg.seed ^ NOISE_STREAM ^ self.scans.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let scan = self.scanner.scan(self.env, &self.true_pose, Some(noise_seed));
        self.scans += 1;
        let est = self.estimate();
        let latest = self.coll.graph().latest().expect("keyframe exists").id;
        let endpoints = scan.endpoints(&est);
        if let Some(id) = self.coll.maybe_create_submap(&endpoints, latest, &est, step)? {
            self.event(
                t,
                "submap_created",
                json!({ "id": id, "kf": latest, "submaps": self.coll.len() }),
            );
        }
        let (coll, observed) = (&mut self.coll, &mut self.observed);
        let (integrated, ()) = rayon::join(
            || coll.integrate(&scan, &est),
            || observed.integrate(&scan, &self.true_pose, Some(self.vobs)),
        );
        integrated?;
        self.peak_blocks = self.peak_blocks.max(self.coll.allocated_blocks());
        let fraction = if self.vobs.count() == 0 {
            0.0
        } else {
            self.observed.count_observable() as f64 / self.vobs.count() as f64
        };
        if self.t_95.is_none() && fraction >= 0.95 {
            self.t_95 = Some(t);
        }
        self.volume.push(VolumeSample {
            t,
            observed: self.observed.count(),
            fraction,
        });
        self.sensing_time += clock.elapsed();
        Ok(())
    }

    fn plan(&mut self, t: f64, step: u64) -> Result<std::result::Result<Motion, CompletionReason>> {
        let clock = Instant::now();
        self.coll.update_active_frontiers(step)?;
        let gf = compute_global_frontiers(&self.coll, step);
        self.frontier_time += clock.elapsed();
        let est = self.estimate();
        let current = PlanState {
            r: Point3::from(est.translation.vector),
            psi: yaw_of(&est.rotation),
        };
        let seed = self.cfg.seed ^ PLAN_STREAM ^ self.iterations.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let sel = select_next_view(
            &self.coll,
            self.env.bounds(),
            &gf,
            &current,
            &self.cfg.mav,
            &self.cfg.sensor,
            &self.cfg.planner,
            seed,
        );
        self.planning_time += sel.timing.planning;
        self.utility_time += sel.timing.utility;
        self.iterations += 1;
        let outcome = match &sel.outcome {
            Outcome::Next(v) => json!({ "next": [v.r.x, v.r.y, v.r.z], "psi": v.psi, "g": v.g, "u": v.u, "t_est": v.t }),
            Outcome::Complete(r) => json!({ "complete": r }),
        };
        self.event(
            t,
            "plan",
            json!({ "iteration": self.iterations - 1, "frontiers": gf.len(), "candidates": sel.trace, "outcome": outcome }),
        );
        Ok(match sel.outcome {
            Outcome::Next(v) => Ok(Motion {
                path: v.path,
                next: 1,
                psi: Some(v.psi),
            }),
            Outcome::Complete(r) => Err(r),
        })
    }

    /// Advances the MAV by one time step. Autonomous motion is commanded in the estimated
    /// frame and scripted motion in the true frame. Returns whether the command finished.
    fn advance(&mut self, m: &mut Motion, in_estimate: bool) -> bool {
        let dt = self.cfg.dt;
        let c = if in_estimate { self.correction() } else { Pose::identity() };
        let frame = if c == Pose::identity() {
            self.true_pose
        } else {
            c * self.true_pose
        };
        let mut p = Point3::from(frame.translation.vector);
        let mut yaw = yaw_of(&frame.rotation);
        let start = p;
        if m.next < m.path.len() {
            let mut budget = self.cfg.mav.v_max * dt;
            while m.next < m.path.len() && budget > 0.0 {
                let d = m.path[m.next] - p;
                let n = d.norm();
                if n <= budget {
                    p = m.path[m.next];
                    budget -= n;
                    m.next += 1;
                } else {
                    p += d * (budget / n);
                    budget = 0.0;
                }
            }
        } else if let Some(psi) = m.psi {
            let e = wrap_angle(psi - yaw);
            let step = self.cfg.mav.w_max * dt;
            if e.abs() <= step {
                yaw = psi;
                m.psi = None;
            } else {
                yaw += step * e.signum();
            }
        }
        self.path_length += (p - start).norm();
        let target = pose_from_yaw(p, yaw);
        self.true_pose = if c == Pose::identity() { target } else { c.inverse() * target };
        self.true_pose.rotation.renormalize();
        m.next >= m.path.len() && m.psi.is_none()
    }

    fn run(mut self, mut driver: Driver) -> Result<MissionOutput> {
        let wall = Instant::now();
        let (sense_every, kf_every, total) = self.cfg.step_counts();
        let mut motion: Option<Motion> = match &mut driver {
            Driver::Scripted(w) => {
                let mut path = vec![Point3::from(self.true_pose.translation.vector)];
                path.append(w);
                Some(Motion {
                    path,
                    next: 1,
                    psi: None,
                })
            }
            Driver::Autonomous => None,
        };
        let scripted = matches!(driver, Driver::Scripted(_));
        let mut termination = Termination::MaxSimTime;
        let mut collision = None;
        let mut step = 0u64;
        while step < total {
            let t = step as f64 * self.cfg.dt;
            if step > 0 && step.is_multiple_of(kf_every) && self.keyframe(t)? && !scripted {
                motion = None;
            }
            if step.is_multiple_of(sense_every) {
                self.sense(t, step)?;
            }
            if motion.is_none() {
                if scripted {
                    termination = Termination::ScriptFinished;
                } else {
                    match self.plan(t, step)? {
                        Ok(m) => motion = Some(m),
                        Err(reason) => termination = Termination::ExplorationComplete { reason },
                    }
                }
            }
            let est = self.estimate();
            let p = Point3::from(self.true_pose.translation.vector);
            let d = self.env.clearance(&p);
            self.trajectory.push(TrajectorySample {
                t,
                position: p,
                yaw: yaw_of(&self.true_pose.rotation),
                estimate: Point3::from(est.translation.vector),
            });
            self.clearance.push(ClearanceSample { t, distance: d });
            if d < self.cfg.collision_radius {
                termination = Termination::Collision;
                let c = CollisionReport {
                    t,
                    position: [p.x, p.y, p.z],
                    clearance: d,
                };
                collision = Some(c);
                self.event(t, "collision", serde_json::to_value(c)?);
                break;
            }
            let Some(m) = motion.as_mut() else {
                break;
            };
            if self.advance(m, !scripted) {
                motion = None;
            }
            step += 1;
        }
        let sim_time = step as f64 * self.cfg.dt;
        self.event(sim_time, "terminated", json!({ "termination": termination }));
        self.finish(termination, collision, step, sim_time, wall)
    }

    fn finish(
        mut self,
        termination: Termination,
        collision: Option<CollisionReport>,
        steps: u64,
        sim_time: f64,
        wall: Instant,
    ) -> Result<MissionOutput> {
        let clock = Instant::now();
        let frontiers = compute_global_frontiers(&self.coll, steps);
        self.frontier_time += clock.elapsed();
        let poses = self.coll.world_poses();
        let recon = if self.scans > 0 {
            match reconstruction_metrics_with(self.coll.submaps(), &poses, self.env) {
                Ok(m) => Some(m),
                Err(Error::EmptyReconstruction) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let surface = fused_surface(self.coll.submaps(), &poses, self.env).0;
        let samples: Vec<(f64, Point3<f64>)> = self.trajectory.iter().map(|s| (s.t, s.position)).collect();
        let last = self.volume.last().copied();
        let report = MetricsReport {
            scene: self
                .cfg
                .scene
                .as_ref()
                .map_or_else(|| "depot_analog".to_string(), |p| p.display().to_string()),
            sensor: self.cfg.sensor.kind,
            seed: self.cfg.seed,
            termination,
            sim_time,
            steps,
            scans: self.scans,
            planner_iterations: self.iterations,
            path_length: self.path_length,
            observable_voxels: self.vobs.count(),
            observed_voxels: last.map_or(0, |v| v.observed),
            fraction: last.map_or(0.0, |v| v.fraction),
            t_95: self.t_95,
            submaps: self.coll.len(),
            keyframes: self.coll.graph().len(),
            loop_closures: self.closures,
            rmse: recon.as_ref().map(|r| r.rmse),
            completeness_02: recon.as_ref().map(|r| r.completeness_02),
            completeness_04: recon.as_ref().map(|r| r.completeness_04),
            reconstruction: recon,
            min_clearance: self.clearance.iter().map(|c| c.distance).reduce(f64::min),
            safety_histogram: safety_histogram(&samples, self.env, false),
            peak_memory_proxy: MemoryProxy {
                blocks: self.peak_blocks,
                bytes: self.peak_blocks * OccupancySubmap::block_bytes(),
            },
            collision,
            volume_series: self.volume,
            min_clearance_series: self.clearance,
            timing: Timing {
                frontier_s: self.frontier_time.as_secs_f64(),
                utility_s: self.utility_time.as_secs_f64(),
                planning_s: self.planning_time.as_secs_f64(),
                sensing_s: self.sensing_time.as_secs_f64(),
                total_s: wall.elapsed().as_secs_f64(),
            },
        };
        Ok(MissionOutput {
            report,
            trajectory: self.trajectory,
            frontiers,
            surface,
            log: self.log,
            collection: self.coll,
        })
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}
