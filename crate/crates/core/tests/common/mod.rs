#![allow(dead_code)]

pub mod oracles;

use explore_core::geometry::pose_from_yaw;
use explore_core::occupancy::{BlockSnapshot, SubmapSnapshot};
use explore_core::submaps::{DriftParams, LoopParams};
use explore_core::{CreationPolicy, KeyframeGraph, OccupancyParams, OccupancySubmap, SubmapCollection, SubmapConfig, VoxelKey};
use nalgebra::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Unknown,
    Free,
    Occupied,
}

/// Replaces the contents of `map` with the log-odds implied by `f` (free -0.6,
/// occupied +1.2), going through the snapshot format.
pub fn fill(map: &mut OccupancySubmap, f: impl Fn(VoxelKey) -> Cell) {
    let mut snap: SubmapSnapshot = map.snapshot();
    let per_side = map.dim() / 8;
    snap.blocks.clear();
    for bz in 0..per_side {
        for by in 0..per_side {
            for bx in 0..per_side {
                let mut log_odds = vec![0.0f32; 512];
                let mut observed = [0u64; 8];
                for i in 0..512usize {
                    let k = VoxelKey([
                        bx * 8 + (i & 7) as i32,
                        by * 8 + ((i >> 3) & 7) as i32,
                        bz * 8 + (i >> 6) as i32,
                    ]);
                    let l = match f(k) {
                        Cell::Unknown => continue,
                        Cell::Free => -0.6,
                        Cell::Occupied => 1.2,
                    };
                    log_odds[i] = l;
                    observed[i >> 6] |= 1 << (i & 63);
                }
                if observed.iter().any(|&w| w != 0) {
                    snap.blocks.push(BlockSnapshot {
                        key: [bx, by, bz],
                        log_odds,
                        observed,
                    });
                }
            }
        }
    }
    *map = OccupancySubmap::from_snapshot(&snap).unwrap();
}

/// A collection whose first submap cube spans `[0, dim * res]^3` in the world frame.
pub fn collection(dim: i32, res: f64) -> SubmapCollection {
    let mut g = KeyframeGraph::new(
        DriftParams::default(),
        LoopParams {
            enabled: false,
            ..LoopParams::default()
        },
        0,
    );
    let c = (dim / 2) as f64 * res + res / 2.0;
    let pose = pose_from_yaw(Point3::new(c, c, c), 0.0);
    let kf = g.add_keyframe(pose);
    let config = SubmapConfig {
        resolution: res,
        dim,
        occupancy: OccupancyParams::default(),
        policy: CreationPolicy::LidarOverlap { tau: 0.0 },
    };
    SubmapCollection::new(config, g, kf, &pose).unwrap()
}
