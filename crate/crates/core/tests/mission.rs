use std::path::{Path, PathBuf};

use explore_core::geometry::pose_from_yaw;
use explore_core::mission::{
    explored_volume, reconstruction_metrics, reconstruction_metrics_with, run_mission, run_mission_in, run_scripted,
    safety_histogram, visibility_params, write_outputs, MissionConfig, ObservedGrid, PointIndex, SafetyHistogram, Termination,
};
use explore_core::submaps::{DriftParams, LoopParams};
use explore_core::world::{depot_analog, load_scene, observable_volume, RayKind, Scanner, VisibilityParams};
use explore_core::{
    Aabb, CreationPolicy, Environment, KeyframeGraph, OccupancyParams, Pose, SensorKind, SensorModel, SubmapCollection,
    SubmapConfig,
};
use nalgebra::{Point3, Translation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn small_room_config() -> MissionConfig {
    let mut cfg = MissionConfig::lidar();
    cfg.load(&scenes().join("small_room.cfg")).unwrap();
    cfg
}

fn open_box_scene() -> Environment {
    Environment::new(
        Aabb::from_corners([0.0; 3], [1.6; 3]),
        vec![Aabb::from_corners([1.0, 0.2, 0.0], [1.3, 1.4, 1.6])],
        0.1,
    )
    .unwrap()
}

fn close_range_lidar() -> SensorModel {
    SensorModel {
        d_min: 0.05,
        d_max: 3.0,
        ..SensorModel::lidar()
    }
}

/// Cells crossed by the segment `a -> b` (cell units) inside `[0, dims)`: split the segment
/// at every grid-plane crossing and take the cell holding each piece's midpoint.
fn crossed_cells(a: [f64; 3], b: [f64; 3], dims: [i32; 3]) -> Vec<[i32; 3]> {
    let mut ts = vec![0.0, 1.0];
    for axis in 0..3 {
        let (lo, hi) = (a[axis].min(b[axis]), a[axis].max(b[axis]));
        let d = b[axis] - a[axis];
        if d == 0.0 {
            continue;
        }
        let mut k = lo.ceil();
        while k <= hi {
            ts.push((k - a[axis]) / d);
            k += 1.0;
        }
    }
    ts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for w in ts.windows(2) {
        if w[1] - w[0] <= 1e-12 {
            continue;
        }
        let t = 0.5 * (w[0] + w[1]);
        let c = [0, 1, 2].map(|i| (a[i] + (b[i] - a[i]) * t).floor() as i32);
        if (0..3).all(|i| c[i] >= 0 && c[i] < dims[i]) {
            out.push(c);
        }
    }
    out
}

#[test]
fn zero_time_mission_exits_cleanly() {
    let mut cfg = small_room_config();
    cfg.max_sim_time = 0.0;
    let out = run_mission(&cfg).unwrap();
    let r = &out.report;
    assert_eq!(r.termination, Termination::MaxSimTime);
    assert!(r.volume_series.is_empty());
    assert!(r.min_clearance_series.is_empty());
    assert_eq!(r.scans, 0);
    assert_eq!(r.rmse, None);
    assert_eq!((r.observed_voxels, r.fraction), (0, 0.0));
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out).unwrap();
    let volume = std::fs::read_to_string(dir.path().join("volume.csv")).unwrap();
    assert_eq!(volume, "t,observed,fraction\n");
}

#[test]
fn explored_volume_before_first_scan_is_zero() {
    let env = open_box_scene();
    let vobs = observable_volume(
        &env,
        &Point3::new(0.45, 0.8, 0.8),
        &VisibilityParams {
            mav_radius: 0.25,
            d_min: 0.05,
            d_max: 3.0,
            position_stride: 1,
        },
    )
    .unwrap();
    assert!(vobs.count() > 0);
    assert_eq!(explored_volume(&ObservedGrid::new(&env), &vobs), (0, 0.0));
}

#[test]
fn one_scan_explored_volume_matches_per_ray_coverage() {
    let env = Environment::new(Aabb::from_corners([0.0; 3], [1.6; 3]), vec![], 0.1).unwrap();
    let start = Point3::new(0.75, 0.85, 0.8);
    let sensor = SensorModel {
        alpha_v: std::f64::consts::PI,
        ..close_range_lidar()
    };
    let vobs = observable_volume(
        &env,
        &start,
        &VisibilityParams {
            mav_radius: 0.25,
            d_min: sensor.d_min,
            d_max: sensor.d_max,
            position_stride: 1,
        },
    )
    .unwrap();
    let pose = pose_from_yaw(start, 0.3);
    let scan = Scanner::new(sensor).scan(&env, &pose, None);
    let mut grid = ObservedGrid::new(&env);
    grid.integrate(&scan, &pose, Some(&vobs));

    let res = env.resolution();
    let dims = env.dims();
    let mut covered = vec![false; env.voxel_count()];
    let a = (start.coords / res).into();
    for ray in scan.rays.iter().filter(|r| r.kind != RayKind::TooNear) {
        let mut end = pose * ray.point;
        if ray.kind == RayKind::Hit {
            end += (end - start).normalize() * 1e-6;
        }
        let b = (end.coords / res).into();
        for c in crossed_cells(a, b, dims) {
            covered[env.index(explore_core::VoxelKey(c)).unwrap()] = true;
        }
    }
    let count = covered.iter().filter(|&&c| c).count();
    let in_vobs = (0..covered.len()).filter(|&i| covered[i] && vobs.contains_index(i)).count();
    let (observed, fraction) = explored_volume(&grid, &vobs);
    assert_eq!(observed, count);
    assert_eq!(grid.count_observable(), in_vobs);
    assert_eq!(fraction, in_vobs as f64 / vobs.count() as f64);
    assert!(fraction <= 1.0 && fraction > 0.99, "{fraction}");
}

/// Wall slab spanning the room cross-section; scans only see its -x face.
fn wall_scene() -> (Environment, SubmapCollection) {
    let env = Environment::new(
        Aabb::from_corners([0.0; 3], [6.0, 4.0, 3.0]),
        vec![Aabb::from_corners([4.0, 0.0, 0.0], [5.0, 4.0, 3.0])],
        0.1,
    )
    .unwrap();
    let start = pose_from_yaw(Point3::new(1.5, 2.0, 1.5), 0.0);
    let mut graph = KeyframeGraph::new(DriftParams::default(), LoopParams::default(), 0);
    let kf = graph.add_keyframe(start);
    let config = SubmapConfig {
        resolution: 0.1,
        dim: 64,
        occupancy: OccupancyParams::default(),
        policy: CreationPolicy::LidarOverlap { tau: 0.0 },
    };
    let mut coll = SubmapCollection::new(config, graph, kf, &start).unwrap();
    let scanner = Scanner::new(close_range_lidar());
    for p in [[1.5, 2.0, 1.5], [1.5, 1.0, 1.0], [1.5, 3.0, 2.0]] {
        let pose = pose_from_yaw(Point3::from(p), 0.0);
        coll.integrate(&scanner.scan(&env, &pose, None), &pose).unwrap();
    }
    (env, coll)
}

#[test]
fn exact_poses_reconstruct_within_a_voxel_diagonal() {
    let (env, coll) = wall_scene();
    let m = reconstruction_metrics(&coll, &env).unwrap();
    assert!(m.rmse <= 0.1 * 3f64.sqrt(), "{m:?}");
    assert!(m.completeness_04 >= m.completeness_02);
    assert!((0.0..=100.0).contains(&m.completeness_02));
}

#[test]
fn shifted_poses_raise_rmse_by_the_shift() {
    let (env, coll) = wall_scene();
    let shift = Translation3::new(-0.3, 0.0, 0.0);
    let poses: Vec<Pose> = coll.world_poses().into_iter().map(|p| shift * p).collect();
    let exact = reconstruction_metrics(&coll, &env).unwrap();
    let shifted = reconstruction_metrics_with(coll.submaps(), &poses, &env).unwrap();
    let diag = 0.1 * 3f64.sqrt();
    assert!((shifted.rmse - 0.3).abs() <= diag, "{shifted:?}");
    assert_eq!(shifted.occupied_voxels, exact.occupied_voxels);
    assert!(shifted.completeness_02 < exact.completeness_02);
}

#[test]
fn empty_reconstruction_is_an_error() {
    let (env, _) = wall_scene();
    let start = pose_from_yaw(Point3::new(1.5, 2.0, 1.5), 0.0);
    let mut graph = KeyframeGraph::new(DriftParams::default(), LoopParams::default(), 0);
    let kf = graph.add_keyframe(start);
    let config = SubmapConfig {
        resolution: 0.1,
        dim: 64,
        occupancy: OccupancyParams::default(),
        policy: CreationPolicy::LidarOverlap { tau: 0.0 },
    };
    let coll = SubmapCollection::new(config, graph, kf, &start).unwrap();
    assert!(matches!(
        reconstruction_metrics(&coll, &env),
        Err(explore_core::Error::EmptyReconstruction)
    ));
}

#[test]
fn point_index_nearest_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Point3<f64>> = (0..400)
        .map(|_| Point3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..1.0)))
        .collect();
    let index = PointIndex::new(&pts, 0.5);
    for _ in 0..300 {
        let q = Point3::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-2.0..3.0));
        let brute = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
        assert_eq!(index.nearest_distance(&q), Some(brute));
        for r in [0.2, 0.4, 1.3] {
            assert_eq!(index.any_within(&q, r), brute <= r);
        }
    }
    assert_eq!(PointIndex::new(&[], 0.5).nearest_distance(&Point3::origin()), None);
}

#[test]
fn hovering_one_meter_from_a_wall() {
    let env = Environment::new(
        Aabb::from_corners([0.0; 3], [5.0; 3]),
        vec![Aabb::from_corners([0.0, 0.0, 0.0], [0.2, 5.0, 5.0])],
        0.1,
    )
    .unwrap();
    let samples: Vec<(f64, Point3<f64>)> = (0..50).map(|i| (i as f64 * 0.05, Point3::new(1.2, 2.5, 2.5))).collect();
    let h = safety_histogram(&samples, &env, false);
    assert_eq!(h.counts, vec![0, 0, 0, 0, 50]);
    assert_eq!(h.infinite, 0);
}

#[test]
fn empty_scene_lands_in_the_infinite_bin() {
    let env = Environment::new(Aabb::from_corners([0.0; 3], [4.0; 3]), vec![], 0.1).unwrap();
    let samples = vec![(0.0, Point3::new(1.0, 1.0, 1.0)), (0.1, Point3::new(2.0, 2.0, 2.0))];
    let h = safety_histogram(&samples, &env, false);
    assert_eq!((h.total(), h.infinite), (2, 2));
    let bounded = safety_histogram(&samples, &env, true);
    assert_eq!(bounded.infinite, 0);
    assert_eq!(bounded.counts, vec![0, 0, 0, 0, 1, 0, 0, 0, 1]);
}

#[test]
fn random_trajectory_histogram_matches_brute_force() {
    let env = depot_analog(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = env.bounds();
    let samples: Vec<(f64, Point3<f64>)> = (0..2000)
        .map(|i| {
            let p = Point3::new(
                rng.gen_range(b.min.x..b.max.x),
                rng.gen_range(b.min.y..b.max.y),
                rng.gen_range(b.min.z..b.max.z),
            );
            (i as f64, p)
        })
        .collect();
    let brute = samples.iter().map(|(_, p)| {
        env.solids()
            .iter()
            .map(|s| {
                let d = Vector3::from_fn(|i, _| (s.min[i] - p[i]).max(0.0).max(p[i] - s.max[i]));
                d.norm()
            })
            .fold(f64::INFINITY, f64::min)
    });
    let expected = SafetyHistogram::from_distances(brute, 0.25);
    assert_eq!(safety_histogram(&samples, &env, false), expected);
}

#[test]
fn small_room_mission_completes_safely() {
    let cfg = small_room_config();
    let out = run_mission(&cfg).unwrap();
    let r = &out.report;
    assert!(
        matches!(r.termination, Termination::ExplorationComplete { .. }),
        "{:?}",
        r.termination
    );
    assert!(r.fraction >= 0.95, "{}", r.fraction);
    assert!(r
        .volume_series
        .windows(2)
        .all(|w| w[0].fraction <= w[1].fraction && w[0].observed <= w[1].observed));
    assert!(r.volume_series.iter().all(|v| v.fraction <= 1.0));
    assert!(r.min_clearance.unwrap() >= cfg.mav.radius, "{:?}", r.min_clearance);
    assert!(r.rmse.unwrap() <= 0.1 * 3f64.sqrt());
    assert!(r.completeness_04.unwrap() >= r.completeness_02.unwrap());
    assert_eq!(r.safety_histogram.total() as usize, out.trajectory.len());
    assert!(r.collision.is_none());
    let non_frozen = out.collection.submaps().iter().filter(|s| !s.map.is_frozen()).count();
    assert_eq!(non_frozen, 1);
    assert!(out.log.iter().any(|l| l.contains("\"event\":\"plan\"")));
}

fn output_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let mut cfg = small_room_config();
    cfg.max_sim_time = 60.0;
    cfg.seed = 11;
    cfg.drift = DriftParams {
        sigma_t: 0.01,
        sigma_r: 0.001,
    };
    cfg.sensor.noise_sigma = 0.01;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_outputs(d.path(), &run_mission(&cfg).unwrap()).unwrap();
    }
    let (a, b) = (output_files(dirs[0].path()), output_files(dirs[1].path()));
    assert_eq!(a.len(), 7);
    for (fa, fb) in a.iter().zip(&b) {
        assert_eq!(fa.0, fb.0);
        assert!(fa.1 == fb.1, "{} differs", fa.0);
    }
    for name in ["volume.csv", "trajectory.csv", "clearance.csv"] {
        let text = std::str::from_utf8(&a.iter().find(|f| f.0 == name).unwrap().1)
            .unwrap()
            .to_string();
        assert!(text.ends_with('\n'));
        let cols = text.lines().next().unwrap().split(',').count();
        assert!(text.lines().all(|l| l.split(',').count() == cols), "{name}");
    }
}

#[test]
fn scripted_revisit_closes_the_loop_rigidly() {
    let env = load_scene(&scenes().join("small_room.scene"), 0.1).unwrap();
    let mut cfg = small_room_config();
    cfg.seed = 3;
    cfg.drift = DriftParams {
        sigma_t: 0.02,
        sigma_r: 0.0,
    };
    cfg.loop_closure.min_gap = 20;
    cfg.max_sim_time = 200.0;
    cfg.policy = CreationPolicy::CameraKeyframe {
        d_t: 2.0,
        d_r: 30f64.to_radians(),
    };
    let vobs = observable_volume(&env, &Point3::from(cfg.start), &visibility_params(&cfg)).unwrap();
    let loop_path: Vec<Point3<f64>> = [
        [6.5, 1.0, 1.5],
        [9.0, 1.0, 1.5],
        [9.0, 6.5, 1.5],
        [1.5, 6.5, 1.5],
        [1.5, 2.0, 1.5],
        [2.0, 2.0, 1.5],
    ]
    .map(Point3::from)
    .to_vec();
    let out = run_scripted(&cfg, &env, &vobs, &loop_path).unwrap();
    assert_eq!(out.report.termination, Termination::ScriptFinished);
    let c = out.report.loop_closures.first().expect("revisit closes a loop");
    assert!(c.rmse_before.unwrap() > c.rmse_after.unwrap(), "{c:?}");
    assert!(c.rigidity_error <= 1e-9, "{c:?}");
    assert!(out.report.min_clearance.unwrap() >= cfg.collision_radius);
    assert!(out.report.submaps > 1);
}

#[test]
fn mission_in_matches_run_mission() {
    let mut cfg = small_room_config();
    cfg.max_sim_time = 20.0;
    let env = load_scene(&scenes().join("small_room.scene"), cfg.resolution).unwrap();
    let vobs = observable_volume(&env, &Point3::from(cfg.start), &visibility_params(&cfg)).unwrap();
    let a = run_mission_in(&cfg, &env, &vobs).unwrap();
    let b = run_mission(&cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
}

#[test]
fn depot_scene_file_matches_builtin() {
    let file = load_scene(&scenes().join("depot_analog.scene"), 0.1).unwrap();
    let builtin = depot_analog(0.1);
    assert_eq!(file.bounds(), builtin.bounds());
    assert_eq!(file.solids(), builtin.solids());
}

#[test]
fn start_inside_an_obstacle_is_rejected() {
    let mut cfg = small_room_config();
    cfg.start = [5.0, 4.0, 0.7];
    assert!(matches!(run_mission(&cfg), Err(explore_core::Error::StartInCollision(..))));
    cfg.start = [2.0, 2.0, 1.5];
    cfg.sensor.kind = SensorKind::DepthCamera;
    assert!(run_mission(&cfg).is_err(), "omnidirectional depth camera must be rejected");
}
