//! Local and global frontiers.
//!
//! A local frontier of a submap is a free voxel with at least one unknown face neighbour or
//! a face neighbour outside the submap cube. Local sets are maintained incrementally from
//! the dirty voxels of the active submap:
//!
//! `F_k = (F_{k-1} \ stale) ∪ new`
//!
//! where `stale` are previous members that no longer pass the test and `new` are passing
//! voxels among the dirty voxels and their face neighbours. A local frontier is a global
//! frontier when every other submap either does not contain it, has it unknown, or has it
//! as a local frontier as well.

use std::io::Write;

use nalgebra::Point3;
use rayon::prelude::*;
use rustc_hash::FxHashSet;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Pose};
use crate::occupancy::{OccupancySubmap, VoxelClass, VoxelKey};
use crate::submaps::SubmapCollection;

/// Local frontiers of one submap.
#[derive(Clone, Debug)]
pub struct LocalFrontierSet {
    submap_id: u32,
    frontiers: FxHashSet<VoxelKey>,
    last_update_step: u64,
    finalized: bool,
}

impl LocalFrontierSet {
    pub fn new(submap_id: u32) -> Self {
        Self {
            submap_id,
            frontiers: FxHashSet::default(),
            last_update_step: 0,
            finalized: false,
        }
    }

    pub fn submap_id(&self) -> u32 {
        self.submap_id
    }

    pub fn len(&self) -> usize {
        self.frontiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frontiers.is_empty()
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.frontiers.contains(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VoxelKey> {
        self.frontiers.iter()
    }

    /// Members in ascending key order.
    pub fn sorted(&self) -> Vec<VoxelKey> {
        let mut v: Vec<_> = self.frontiers.iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn as_set(&self) -> &FxHashSet<VoxelKey> {
        &self.frontiers
    }

    pub fn last_update_step(&self) -> u64 {
        self.last_update_step
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }
}

/// Frontier test for an in-bounds key.
pub fn is_local_frontier(map: &OccupancySubmap, key: VoxelKey) -> Result<bool> {
    if !map.in_bounds(key) {
        return Err(Error::OutOfBounds { key });
    }
    Ok(frontier_test(map, key))
}

#[inline]
fn frontier_test(map: &OccupancySubmap, key: VoxelKey) -> bool {
    map.classify_unchecked(key) == VoxelClass::Free
        && key
            .face_neighbors()
            .iter()
            .any(|&n| !matches!(map.get(n), Some(VoxelClass::Free | VoxelClass::Occupied)))
}

/// All local frontiers of `map`, computed from scratch over its observed voxels.
pub fn full_rescan(map: &OccupancySubmap) -> FxHashSet<VoxelKey> {
    let mut out = FxHashSet::default();
    map.for_each_observed(|k, _| {
        if frontier_test(map, k) {
            out.insert(k);
        }
    });
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrontierUpdate {
    pub dirty: usize,
    pub stale: usize,
    pub added: usize,
}

/// Incremental update from the voxels modified since the previous update; consumes the
/// map's dirty set.
pub fn update_local_frontiers(map: &mut OccupancySubmap, lf: &mut LocalFrontierSet, step: u64) -> Result<FrontierUpdate> {
    if lf.finalized {
        return Err(Error::FrontiersFinalized(lf.submap_id));
    }
    let dirty = map.take_dirty();
    lf.last_update_step = step;
    if dirty.is_empty() {
        return Ok(FrontierUpdate::default());
    }
    let map = &*map;
    let old = &lf.frontiers;
    let (stale, new) = rayon::join(
        || old.iter().filter(|&&k| !frontier_test(map, k)).copied().collect::<Vec<_>>(),
        || {
            let mut new = Vec::new();
            for k in dirty.keys() {
                if frontier_test(map, k) {
                    new.push(k);
                }
                for n in k.face_neighbors() {
                    if map.in_bounds(n) && !dirty.contains(n) && frontier_test(map, n) {
                        new.push(n);
                    }
                }
            }
            new
        },
    );
    let before = lf.frontiers.len();
    for k in &stale {
        lf.frontiers.remove(k);
    }
    let after_removal = lf.frontiers.len();
    lf.frontiers.extend(new);
    Ok(FrontierUpdate {
        dirty: dirty.len(),
        stale: before - after_removal,
        added: lf.frontiers.len() - after_removal,
    })
}

/// Last update of a submap's frontiers before it is frozen. May be called once.
pub fn finalize_local_frontiers(map: &mut OccupancySubmap, lf: &mut LocalFrontierSet, step: u64) -> Result<()> {
    update_local_frontiers(map, lf, step)?;
    lf.finalized = true;
    Ok(())
}

/// Whether a frontier at `world` stays a frontier when considering `other`.
pub fn h(world: &Point3<f64>, other: &OccupancySubmap, other_world_pose: &Pose, other_frontiers: &LocalFrontierSet) -> bool {
    h_local(&(other_world_pose.inverse() * world), other, other_frontiers)
}

#[inline]
fn h_local(p: &Point3<f64>, other: &OccupancySubmap, other_frontiers: &LocalFrontierSet) -> bool {
    match other.key_of(p) {
        None => true,
        Some(k) => other.classify_unchecked(k) == VoxelClass::Unknown || other_frontiers.contains(&k),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalFrontier {
    pub submap_id: u32,
    pub key: VoxelKey,
    pub world: Point3<f64>,
}

/// Global frontiers, ordered by submap id and then key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlobalFrontierSet {
    pub entries: Vec<GlobalFrontier>,
    pub computed_at_step: u64,
}

impl GlobalFrontierSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Plain `x y z submap_id` lines.
    pub fn write_xyz(&self, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{:.4} {:.4} {:.4} {}", e.world.x, e.world.y, e.world.z, e.submap_id)?;
        }
        Ok(())
    }
}

/// World-frame bounding box of a submap cube.
pub fn world_aabb(map: &OccupancySubmap, pose: &Pose) -> Aabb {
    let e = map.extent();
    let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut max = -min;
    for c in 0..8 {
        let corner = Point3::new(
            if c & 1 != 0 { e } else { 0.0 },
            if c & 2 != 0 { e } else { 0.0 },
            if c & 4 != 0 { e } else { 0.0 },
        );
        let w = pose * corner;
        for i in 0..3 {
            min[i] = min[i].min(w[i]);
            max[i] = max[i].max(w[i]);
        }
    }
    Aabb::new(min, max)
}

/// Global frontiers from the last-known local frontiers of every submap. Poses are
/// snapshotted once; per-submap tests run in parallel and are merged in submap order.
pub fn compute_global_frontiers(coll: &SubmapCollection, step: u64) -> GlobalFrontierSet {
    compute_global_frontiers_with(coll, step, true)
}

/// As [`compute_global_frontiers`]; `prefilter` skips submaps whose world bounding box does
/// not contain the frontier (equivalent to the "outside" clause of `h`).
pub fn compute_global_frontiers_with(coll: &SubmapCollection, step: u64, prefilter: bool) -> GlobalFrontierSet {
    let submaps = coll.submaps();
    let poses = coll.world_poses();
    let inverses: Vec<Pose> = poses.iter().map(|p| p.inverse()).collect();
    let boxes: Vec<Aabb> = submaps.iter().zip(&poses).map(|(s, p)| world_aabb(&s.map, p)).collect();
    let per_submap: Vec<Vec<GlobalFrontier>> = submaps
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            s.frontiers
                .sorted()
                .into_iter()
                .filter_map(|key| {
                    let world = poses[i] * s.map.center(key);
                    let keep = submaps.iter().enumerate().all(|(l, other)| {
                        if l == i || (prefilter && !boxes[l].contains(&world)) {
                            return true;
                        }
                        h_local(&(inverses[l] * world), &other.map, &other.frontiers)
                    });
                    keep.then_some(GlobalFrontier {
                        submap_id: s.map.id(),
                        key,
                        world,
                    })
                })
                .collect()
        })
        .collect();
    GlobalFrontierSet {
        entries: per_submap.into_iter().flatten().collect(),
        computed_at_step: step,
    }
}
