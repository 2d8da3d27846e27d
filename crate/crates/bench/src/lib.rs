//! Shared fixtures for the criterion benchmarks.

use explore_core::geometry::pose_from_yaw;
use explore_core::submaps::{DriftParams, LoopParams};
use explore_core::world::{depot_analog, Scanner};
use explore_core::{
    CreationPolicy, Environment, KeyframeGraph, OccupancyParams, Pose, SensorModel, SubmapCollection, SubmapConfig,
};
use nalgebra::Point3;

pub const RESOLUTION: f64 = 0.1;

pub fn depot() -> Environment {
    depot_analog(RESOLUTION)
}

pub fn start_pose() -> Pose {
    pose_from_yaw(Point3::new(2.0, 2.0, 1.5), 0.0)
}

/// Single-submap collection anchored at `pose` with exact odometry.
pub fn collection(pose: &Pose, dim: i32) -> SubmapCollection {
    let mut graph = KeyframeGraph::new(DriftParams::default(), LoopParams::default(), 0);
    let kf = graph.add_keyframe(*pose);
    let config = SubmapConfig {
        resolution: RESOLUTION,
        dim,
        occupancy: OccupancyParams::default(),
        policy: CreationPolicy::LidarOverlap { tau: 0.8 },
    };
    SubmapCollection::new(config, graph, kf, pose).expect("valid collection")
}

/// Collection after LiDAR scans along a short straight flight through the depot.
pub fn explored_collection(env: &Environment, scans: usize) -> SubmapCollection {
    let scanner = Scanner::new(SensorModel::lidar());
    let start = start_pose();
    let mut coll = collection(&start, 256);
    for i in 0..scans {
        let p = pose_from_yaw(Point3::new(2.0 + 1.0 * i as f64, 2.0, 1.5), 0.0);
        let scan = scanner.scan(env, &p, None);
        coll.integrate(&scan, &p).expect("active submap accepts scans");
    }
    coll
}
