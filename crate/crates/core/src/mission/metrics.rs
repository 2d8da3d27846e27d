//! Evaluation metrics: explored volume, reconstruction quality and safety distances.

use nalgebra::Point3;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::raycast::{clip_segment, walk_cells};
use crate::submaps::Submap;
use crate::world::{Environment, ObservableVolume, RayKind, Scan};

const HIT_NUDGE: f64 = 1e-6;

/// Monolithic map over the environment grid, fed with the mission's scans at true poses.
/// A voxel counts as observed once any ray has passed through or ended in it.
#[derive(Clone, Debug)]
pub struct ObservedGrid {
    origin: [f64; 3],
    resolution: f64,
    dims: [i32; 3],
    touched: Vec<bool>,
    count: usize,
    in_mask: usize,
}

impl ObservedGrid {
    pub fn new(env: &Environment) -> Self {
        let b = env.bounds().min;
        Self {
            origin: [b.x, b.y, b.z],
            resolution: env.resolution(),
            dims: env.dims(),
            touched: vec![false; env.voxel_count()],
            count: 0,
            in_mask: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Observed voxels that are also in the observable volume given to [`Self::integrate`].
    pub fn count_observable(&self) -> usize {
        self.in_mask
    }

    pub fn is_observed(&self, index: usize) -> bool {
        self.touched[index]
    }

    /// Traces every returned ray of `scan` taken at `t_w_s`.
    pub fn integrate(&mut self, scan: &Scan, t_w_s: &Pose, vobs: Option<&ObservableVolume>) {
        let inv = 1.0 / self.resolution;
        let o = t_w_s.translation.vector;
        let a = [0, 1, 2].map(|i| (o[i] - self.origin[i]) * inv);
        let hi = self.dims.map(f64::from);
        for ray in &scan.rays {
            if ray.kind == RayKind::TooNear {
                continue;
            }
            let mut end = (t_w_s * ray.point).coords;
            if ray.kind == RayKind::Hit {
                let d = end - o;
                let n = d.norm();
                if n > 0.0 {
                    end += d * (HIT_NUDGE / n);
                }
            }
            let b = [0, 1, 2].map(|i| (end[i] - self.origin[i]) * inv);
            let Some((t0, t1)) = clip_segment(a, b, [0.0; 3], hi) else {
                continue;
            };
            let lerp = |t: f64| [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t);
            let (s, e) = (lerp(t0), lerp(t1));
            let dims = self.dims;
            let cell = |p: [f64; 3]| [0, 1, 2].map(|i| (p[i].floor() as i32).clamp(0, dims[i] - 1));
            walk_cells(s, e, cell(s), cell(e), |c| {
                let i = c[0] as usize + dims[0] as usize * (c[1] as usize + dims[1] as usize * c[2] as usize);
                if !self.touched[i] {
                    self.touched[i] = true;
                    self.count += 1;
                    if vobs.is_some_and(|v| v.contains_index(i)) {
                        self.in_mask += 1;
                    }
                }
                true
            });
        }
    }
}

/// Observed voxel count and the observed share of the observable volume.
pub fn explored_volume(grid: &ObservedGrid, vobs: &ObservableVolume) -> (usize, f64) {
    if vobs.count() == 0 {
        return (grid.count(), 0.0);
    }
    let hit = (0..grid.touched.len())
        .filter(|&i| grid.touched[i] && vobs.contains_index(i))
        .count();
    (grid.count(), hit as f64 / vobs.count() as f64)
}

/// Exact nearest-neighbour queries over a static point set, bucketed on a uniform grid.
#[derive(Clone, Debug)]
pub struct PointIndex {
    cell: f64,
    buckets: FxHashMap<[i32; 3], Vec<Point3<f64>>>,
    lo: [i32; 3],
    hi: [i32; 3],
}

impl PointIndex {
    pub fn new(points: &[Point3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut buckets: FxHashMap<[i32; 3], Vec<Point3<f64>>> = FxHashMap::default();
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for p in points {
            let k = Self::key(cell, p);
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            buckets.entry(k).or_default().push(*p);
        }
        Self { cell, buckets, lo, hi }
    }

    fn key(cell: f64, p: &Point3<f64>) -> [i32; 3] {
        [0, 1, 2].map(|a| (p[a] / cell).floor() as i32)
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Distance from `q` to the nearest indexed point.
    pub fn nearest_distance(&self, q: &Point3<f64>) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let c = Self::key(self.cell, q);
        // Rings beyond this radius contain no buckets.
        let max_ring = (0..3)
            .map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in 0..=max_ring {
            // Any point in ring r lies at least (r - 1) cells away.
            if best <= (r - 1).max(0) as f64 * self.cell {
                break;
            }
            for z in -r..=r {
                for y in -r..=r {
                    for x in -r..=r {
                        if x.abs().max(y.abs()).max(z.abs()) != r {
                            continue;
                        }
                        if let Some(pts) = self.buckets.get(&[c[0] + x, c[1] + y, c[2] + z]) {
                            for p in pts {
                                best = best.min((p - q).norm());
                            }
                        }
                    }
                }
            }
        }
        Some(best)
    }

    /// Whether some indexed point lies within `radius` of `q`.
    pub fn any_within(&self, q: &Point3<f64>, radius: f64) -> bool {
        let lo = Self::key(self.cell, &(q - nalgebra::Vector3::repeat(radius)));
        let hi = Self::key(self.cell, &(q + nalgebra::Vector3::repeat(radius)));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if let Some(pts) = self.buckets.get(&[x, y, z]) {
                        if pts.iter().any(|p| (p - q).norm() <= radius) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructionMetrics {
    pub rmse: f64,
    /// Percent of ground-truth surface voxels within 0.2 m of a reconstruction point.
    pub completeness_02: f64,
    pub completeness_04: f64,
    /// Fused reconstruction points.
    pub points: usize,
    /// Occupied voxels summed over submaps before fusion; independent of the poses.
    pub occupied_voxels: usize,
}

/// Occupied voxels fused across submaps: for every world lattice cell the voxel with the
/// largest |log-odds| wins (lower submap id on ties) and is kept when occupied. Points
/// are the winners' world centers, sorted by lattice key.
pub fn fused_surface(submaps: &[Submap], poses: &[Pose], env: &Environment) -> (Vec<Point3<f64>>, usize) {
    let res = env.resolution();
    let o = env.bounds().min;
    let mut best: FxHashMap<[i32; 3], (f32, f32, Point3<f64>)> = FxHashMap::default();
    let mut occupied = 0;
    for (s, pose) in submaps.iter().zip(poses) {
        s.map.for_each_observed(|key, l| {
            if l > 0.0 {
                occupied += 1;
            }
            let w = pose * s.map.center(key);
            let k = [0, 1, 2].map(|a| ((w[a] - o[a]) / res).floor() as i32);
            let e = best.entry(k).or_insert((-1.0, 0.0, w));
            if l.abs() > e.0 {
                *e = (l.abs(), l, w);
            }
        });
    }
    let mut cells: Vec<([i32; 3], Point3<f64>)> = best
        .into_iter()
        .filter(|(_, (_, l, _))| *l > 0.0)
        .map(|(k, (_, _, w))| (k, w))
        .collect();
    cells.sort_unstable_by_key(|c| c.0);
    (cells.into_iter().map(|(_, w)| w).collect(), occupied)
}

/// RMSE and completeness of the fused reconstruction under the given submap poses.
pub fn reconstruction_metrics_with(submaps: &[Submap], poses: &[Pose], env: &Environment) -> Result<ReconstructionMetrics> {
    let (points, occupied_voxels) = fused_surface(submaps, poses, env);
    if points.is_empty() {
        return Err(Error::EmptyReconstruction);
    }
    let surface: Vec<Point3<f64>> = env.surface_voxels().into_iter().map(|k| env.center(k)).collect();
    let cell = 0.5;
    let gt = PointIndex::new(&surface, cell);
    let sq: f64 = points
        .iter()
        .map(|p| gt.nearest_distance(p).map_or(f64::INFINITY, |d| d * d))
        .sum();
    let rmse = (sq / points.len() as f64).sqrt();
    let recon = PointIndex::new(&points, cell);
    let (mut near02, mut near04) = (0usize, 0usize);
    for s in &surface {
        if recon.any_within(s, 0.4) {
            near04 += 1;
            near02 += usize::from(recon.any_within(s, 0.2));
        }
    }
    let pct = |n: usize| {
        if surface.is_empty() {
            0.0
        } else {
            100.0 * n as f64 / surface.len() as f64
        }
    };
    Ok(ReconstructionMetrics {
        rmse,
        completeness_02: pct(near02),
        completeness_04: pct(near04),
        points: points.len(),
        occupied_voxels,
    })
}

pub fn reconstruction_metrics(coll: &crate::submaps::SubmapCollection, env: &Environment) -> Result<ReconstructionMetrics> {
    reconstruction_metrics_with(coll.submaps(), &coll.world_poses(), env)
}

/// Histogram of minimum obstacle distances with a trailing bin for infinite distances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SafetyHistogram {
    pub bin: f64,
    /// `counts[i]` holds distances in `[i * bin, (i + 1) * bin)`.
    pub counts: Vec<u64>,
    pub infinite: u64,
}

impl SafetyHistogram {
    pub fn from_distances(distances: impl IntoIterator<Item = f64>, bin: f64) -> Self {
        let mut counts = Vec::new();
        let mut infinite = 0;
        for d in distances {
            if !d.is_finite() {
                infinite += 1;
                continue;
            }
            let i = (d.max(0.0) / bin).floor() as usize;
            if counts.len() <= i {
                counts.resize(i + 1, 0);
            }
            counts[i] += 1;
        }
        Self { bin, counts, infinite }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.infinite
    }
}

pub const SAFETY_BIN: f64 = 0.25;

/// Exact distance from each sample to the nearest solid. With `bounds_as_obstacle` the
/// faces of the scene bounds count as obstacles too; otherwise an empty scene lands in the
/// infinite bin.
pub fn safety_histogram(samples: &[(f64, Point3<f64>)], env: &Environment, bounds_as_obstacle: bool) -> SafetyHistogram {
    let b = env.bounds();
    SafetyHistogram::from_distances(
        samples.iter().map(|(_, p)| {
            let d = env.clearance(p);
            if bounds_as_obstacle {
                (0..3).map(|a| (p[a] - b.min[a]).min(b.max[a] - p[a])).fold(d, f64::min)
            } else {
                d
            }
        }),
        SAFETY_BIN,
    )
}
