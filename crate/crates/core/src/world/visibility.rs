//! Observable part of the environment: voxels with unoccluded line of sight, within the
//! sensor range, from some position the MAV can reach.

use std::collections::VecDeque;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::occupancy::{VoxelKey, FACE_OFFSETS};

use super::Environment;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilityParams {
    pub mav_radius: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Sensor positions are the reachable voxel centers on a lattice of this stride
    /// (in voxels) through the start voxel. 1 considers every reachable voxel.
    pub position_stride: u32,
}

/// Observable-voxel mask over the environment grid.
#[derive(Clone, Debug)]
pub struct ObservableVolume {
    mask: Vec<bool>,
    count: usize,
    pub reachable: usize,
    pub positions: usize,
}

impl ObservableVolume {
    pub fn count(&self) -> usize {
        self.count
    }

    /// Whether grid voxel `index` (see [`Environment::index`]) is observable.
    pub fn contains_index(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn contains(&self, env: &Environment, key: VoxelKey) -> bool {
        env.index(key).is_some_and(|i| self.mask[i])
    }
}

/// Flood fill of MAV-reachable voxel centers from `start`: free centers whose sphere of
/// radius `mav_radius` stays clear of every solid and inside the bounds (6-connected).
pub fn reachable_voxels(env: &Environment, start: &Point3<f64>, mav_radius: f64) -> Result<Vec<bool>> {
    let clear = |p: &Point3<f64>| {
        let b = env.bounds();
        let inside = (0..3).all(|i| p[i] - b.min[i] >= mav_radius && b.max[i] - p[i] >= mav_radius);
        inside && env.clearance(p) >= mav_radius
    };
    let start_clearance = env.clearance(start);
    let collision = || Error::StartInCollision([start.x, start.y, start.z], start_clearance);
    let start_key = env.key_of(start).ok_or_else(collision)?;
    if !clear(start) || !clear(&env.center(start_key)) {
        return Err(collision());
    }
    let mut reach = vec![false; env.voxel_count()];
    let mut visited = vec![false; env.voxel_count()];
    let mut queue = VecDeque::new();
    let si = env.linear(start_key.0);
    visited[si] = true;
    reach[si] = true;
    queue.push_back(start_key);
    while let Some(k) = queue.pop_front() {
        for d in FACE_OFFSETS {
            let n = k.offset(d);
            let Some(i) = env.index(n) else { continue };
            if visited[i] {
                continue;
            }
            visited[i] = true;
            if !env.solid_at(i) && clear(&env.center(n)) {
                reach[i] = true;
                queue.push_back(n);
            }
        }
    }
    Ok(reach)
}

/// Computes the observable volume. Candidate voxels are free voxels and solid surface
/// voxels (solid voxels buried in solid are never observable).
///
/// A voxel is visible from a position if the segment between their centers reaches the
/// voxel's cell before touching any solid, and the center distance lies in `[d_min, d_max]`.
pub fn observable_volume(env: &Environment, start: &Point3<f64>, params: &VisibilityParams) -> Result<ObservableVolume> {
    if params.position_stride == 0 || !(params.d_min >= 0.0 && params.d_min < params.d_max) {
        return Err(Error::InvalidConfig("invalid visibility parameters".into()));
    }
    let reach = reachable_voxels(env, start, params.mav_radius)?;
    let start_key = env.key_of(start).expect("checked by reachable_voxels");
    let stride = params.position_stride as i32;
    let dims = env.dims();
    let on_lattice = |k: [i32; 3]| (0..3).all(|a| (k[a] - start_key.0[a]).rem_euclid(stride) == 0);
    let position = |k: [i32; 3]| -> bool { (0..3).all(|a| k[a] >= 0 && k[a] < dims[a]) && on_lattice(k) && reach[env.linear(k)] };
    let positions = (0..env.voxel_count())
        .filter(|&i| reach[i] && on_lattice(env.key_from_index(i).0))
        .count();

    let res = env.resolution();
    let dmin2 = (params.d_min / res).powi(2);
    let dmax2 = (params.d_max / res).powi(2);
    // Lattice steps k such that some voxel in a lattice cell can be in range of `base + stride k`.
    let reach_cells = params.d_max / res;
    let kmax = (reach_cells / stride as f64).ceil() as i32 + 1;
    let mut steps: Vec<([i32; 3], f64)> = Vec::new();
    for z in -kmax..=kmax {
        for y in -kmax..=kmax {
            for x in -kmax..=kmax {
                let c = Vector3::new(x as f64, y as f64, z as f64) * stride as f64;
                let n = c.norm();
                let slack = stride as f64 * 3f64.sqrt();
                if n - slack <= reach_cells && n + slack >= params.d_min / res {
                    steps.push(([x, y, z], n));
                }
            }
        }
    }
    steps.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let visible_from = |v: [i32; 3], p: [i32; 3]| -> bool {
        let d = [0, 1, 2].map(|a| (v[a] - p[a]) as f64);
        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if d2 < dmin2 || d2 > dmax2 {
            return false;
        }
        line_of_sight(env, VoxelKey(p), VoxelKey(v))
    };

    let mask: Vec<bool> = (0..env.voxel_count())
        .into_par_iter()
        .map(|i| {
            let key = env.key_from_index(i);
            if env.solid_at(i) && !env.is_surface(key) {
                return false;
            }
            let v = key.0;
            let base = [0, 1, 2].map(|a| v[a] - (v[a] - start_key.0[a]).rem_euclid(stride));
            steps.iter().any(|(k, _)| {
                let p = [0, 1, 2].map(|a| base[a] + stride * k[a]);
                position(p) && visible_from(v, p)
            })
        })
        .collect();
    let count = mask.iter().filter(|&&m| m).count();
    Ok(ObservableVolume {
        mask,
        count,
        reachable: reach.iter().filter(|&&r| r).count(),
        positions,
    })
}

/// Segment from the center of `from` to the center of `to` enters `to`'s cell before (or
/// without) touching any solid.
pub fn line_of_sight(env: &Environment, from: VoxelKey, to: VoxelKey) -> bool {
    let a = env.center(from);
    let b = env.center(to);
    let diff = b - a;
    let dist = diff.norm();
    if dist == 0.0 {
        return true;
    }
    let dir = diff / dist;
    match env.raycast(&a, &dir, dist) {
        None => true,
        Some(t) => {
            let q = a + dir * t;
            let half = env.resolution() / 2.0 + 1e-9;
            (0..3).all(|i| (q[i] - b[i]).abs() <= half)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    fn params(stride: u32) -> VisibilityParams {
        VisibilityParams {
            mav_radius: 0.3,
            d_min: 0.2,
            d_max: 3.0,
            position_stride: stride,
        }
    }

    #[test]
    fn open_room_everything_observable() {
        let env = Environment::new(Aabb::from_corners([0.0; 3], [1.6; 3]), vec![], 0.1).unwrap();
        let v = observable_volume(&env, &Point3::new(0.8, 0.8, 0.8), &params(1)).unwrap();
        assert_eq!(v.count(), env.voxel_count());
    }

    #[test]
    fn sealed_cavity_excluded() {
        // Hollow 0.6 m box (0.1 m walls) inside a 1.6 m room.
        let mut solids = Vec::new();
        let (lo, hi) = (0.2, 0.8);
        for a in 0..3 {
            let mut mn = [lo; 3];
            let mut mx = [hi; 3];
            mx[a] = lo + 0.1;
            solids.push(Aabb::from_corners(mn, mx));
            mn[a] = hi - 0.1;
            mx[a] = hi;
            solids.push(Aabb::from_corners(mn, mx));
        }
        let env = Environment::new(Aabb::from_corners([0.0; 3], [1.6; 3]), solids, 0.1).unwrap();
        let v = observable_volume(&env, &Point3::new(1.25, 1.25, 1.25), &params(1)).unwrap();
        for x in 3..5 {
            for y in 3..5 {
                for z in 3..5 {
                    let k = VoxelKey::new(x, y, z);
                    assert!(!env.is_solid(k));
                    assert!(!v.contains(&env, k), "cavity voxel {k:?} marked observable");
                }
            }
        }
        assert!(v.contains(&env, VoxelKey::new(15, 15, 15)));
    }

    #[test]
    fn start_in_collision_is_error() {
        let env = Environment::new(
            Aabb::from_corners([0.0; 3], [1.6; 3]),
            vec![Aabb::from_corners([0.0; 3], [0.7, 1.6, 1.6])],
            0.1,
        )
        .unwrap();
        let e = observable_volume(&env, &Point3::new(0.8, 0.8, 0.8), &params(1));
        assert!(matches!(e, Err(Error::StartInCollision(..))));
    }
}
