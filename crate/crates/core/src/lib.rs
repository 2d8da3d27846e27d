//! Submap-based autonomous volumetric exploration.
//!
//! The crate is organized bottom-up:
//!
//! * [`world`]: ground-truth box scenes, exact raycasting, sensor simulation, and the
//!   observable-volume oracle.
//! * [`occupancy`]: block-sparse log-odds voxel submaps with dirty tracking.
//! * [`submaps`]: keyframe anchoring, submap creation and freezing, simulated drift and
//!   loop closure.
//! * [`frontiers`]: incremental local frontiers per submap and global frontier
//!   reconciliation across all submaps.
//! * [`planner`]: sampling-based next-best-view planning over the submap union.
//! * [`mission`]: the deterministic mission loop, evaluation metrics, config and outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod frontiers;
pub mod geometry;
pub mod mission;
pub mod occupancy;
pub mod planner;
pub mod raycast;
pub mod submaps;
pub mod world;

pub use error::{Error, Result};
pub use frontiers::{GlobalFrontier, GlobalFrontierSet, LocalFrontierSet};
pub use geometry::{Aabb, Pose};
pub use mission::{run_mission, MetricsReport, MissionConfig};
pub use occupancy::{OccupancyParams, OccupancySubmap, VoxelClass, VoxelKey};
pub use planner::{CandidateView, MavModel, PlanState, PlannerParams, PlanningGrid};
pub use submaps::{CreationPolicy, KeyframeGraph, Submap, SubmapCollection, SubmapConfig};
pub use world::{Environment, Scan, SensorKind, SensorModel};
