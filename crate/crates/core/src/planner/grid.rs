//! World-lattice views of the submap union.

use nalgebra::Point3;

use crate::geometry::{Aabb, Pose};
use crate::occupancy::{OccupancySubmap, VoxelClass, VoxelKey};
use crate::raycast::{clip_segment, walk_cells};
use crate::submaps::SubmapCollection;

/// Axis-aligned lattice whose cell corners sit on world multiples of the resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    origin: Point3<f64>,
    resolution: f64,
    dims: [i32; 3],
}

impl Lattice {
    /// Smallest lattice covering `bounds`.
    pub fn covering(bounds: &Aabb, resolution: f64) -> Self {
        let lo = [0, 1, 2].map(|i| (bounds.min[i] / resolution + 1e-9).floor());
        let hi = [0, 1, 2].map(|i| (bounds.max[i] / resolution - 1e-9).ceil());
        Self {
            origin: Point3::new(lo[0] * resolution, lo[1] * resolution, lo[2] * resolution),
            resolution,
            dims: [0, 1, 2].map(|i| (hi[i] - lo[i]).max(1.0) as i32),
        }
    }

    pub fn origin(&self) -> &Point3<f64> {
        &self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, k: VoxelKey) -> bool {
        (0..3).all(|i| k.0[i] >= 0 && k.0[i] < self.dims[i])
    }

    #[inline]
    pub fn linear(&self, k: VoxelKey) -> usize {
        let [dx, dy, _] = self.dims.map(|d| d as usize);
        k.0[0] as usize + dx * (k.0[1] as usize + dy * k.0[2] as usize)
    }

    #[inline]
    pub fn index(&self, k: VoxelKey) -> Option<usize> {
        self.contains(k).then(|| self.linear(k))
    }

    pub fn key_from_index(&self, i: usize) -> VoxelKey {
        let [dx, dy, _] = self.dims.map(|d| d as usize);
        VoxelKey([(i % dx) as i32, ((i / dx) % dy) as i32, (i / (dx * dy)) as i32])
    }

    /// Continuous position in cell units.
    #[inline]
    pub fn to_cells(&self, p: &Point3<f64>) -> [f64; 3] {
        [0, 1, 2].map(|i| (p[i] - self.origin[i]) / self.resolution)
    }

    #[inline]
    pub fn key_unchecked(&self, p: &Point3<f64>) -> VoxelKey {
        VoxelKey(self.to_cells(p).map(|c| c.floor() as i32))
    }

    pub fn key_of(&self, p: &Point3<f64>) -> Option<VoxelKey> {
        let k = self.key_unchecked(p);
        self.contains(k).then_some(k)
    }

    #[inline]
    pub fn center(&self, k: VoxelKey) -> Point3<f64> {
        let r = self.resolution;
        Point3::new(
            self.origin.x + (k.0[0] as f64 + 0.5) * r,
            self.origin.y + (k.0[1] as f64 + 0.5) * r,
            self.origin.z + (k.0[2] as f64 + 0.5) * r,
        )
    }

    /// Visits lattice cells crossed by the segment `a -> b`, clipped to the lattice.
    /// Returns `false` if the segment leaves the lattice or `visit` stops the walk.
    pub fn walk(&self, a: &Point3<f64>, b: &Point3<f64>, mut visit: impl FnMut(VoxelKey, usize) -> bool) -> bool {
        let ca = self.to_cells(a);
        let cb = self.to_cells(b);
        let hi = self.dims.map(|d| d as f64);
        let Some((t0, t1)) = clip_segment(ca, cb, [0.0; 3], hi) else {
            return false;
        };
        let lerp = |t: f64| [0, 1, 2].map(|i| ca[i] + (cb[i] - ca[i]) * t);
        let (s, e) = (lerp(t0), lerp(t1));
        let clamp = |p: [f64; 3]| [0, 1, 2].map(|i| (p[i].floor() as i32).clamp(0, self.dims[i] - 1));
        let mut completed = true;
        walk_cells(s, e, clamp(s), clamp(e), |c| {
            let k = VoxelKey(c);
            if !visit(k, self.linear(k)) {
                completed = false;
                return false;
            }
            true
        });
        completed && t0 == 0.0 && t1 == 1.0
    }
}

const ANY_FREE: u8 = 1;
const ANY_OCCUPIED: u8 = 2;

/// Submap maps with world-to-submap transforms and world bounding boxes.
pub(crate) struct Frames<'a> {
    entries: Vec<(&'a OccupancySubmap, Pose, Aabb)>,
}

impl<'a> Frames<'a> {
    pub(crate) fn new(coll: &'a SubmapCollection) -> Self {
        let poses = coll.world_poses();
        Self {
            entries: coll
                .submaps()
                .iter()
                .zip(&poses)
                .map(|(s, p)| (&s.map, p.inverse(), crate::frontiers::world_aabb(&s.map, p)))
                .collect(),
        }
    }

    /// Pessimistic and most-confident classes at a world point.
    pub(crate) fn classify(&self, p: &Point3<f64>) -> (VoxelClass, VoxelClass) {
        let mut flags = 0;
        let mut best = 0.0f32;
        for (map, inv, bb) in &self.entries {
            if !bb.contains(p) {
                continue;
            }
            if let Some((obs, l)) = map.state_at(&(inv * p)) {
                merge(&mut flags, &mut best, obs, l);
            }
        }
        (pessimistic(flags), confident(best))
    }
}

#[inline]
fn merge(flags: &mut u8, best: &mut f32, observed: bool, l: f32) {
    if !observed || l == 0.0 {
        return;
    }
    *flags |= if l < 0.0 { ANY_FREE } else { ANY_OCCUPIED };
    if l.abs() > best.abs() {
        *best = l;
    }
}

#[inline]
fn pessimistic(flags: u8) -> VoxelClass {
    if flags & ANY_OCCUPIED != 0 {
        VoxelClass::Occupied
    } else if flags & ANY_FREE != 0 {
        VoxelClass::Free
    } else {
        VoxelClass::Unknown
    }
}

#[inline]
fn confident(best: f32) -> VoxelClass {
    if best < 0.0 {
        VoxelClass::Free
    } else if best > 0.0 {
        VoxelClass::Occupied
    } else {
        VoxelClass::Unknown
    }
}

/// Fused classes of the submap union sampled at lattice cell centres.
///
/// Pessimistic fusion: occupied if any submap says occupied, free if some submap says free
/// and none occupied. Most-confident fusion: the class of the observation with the largest
/// absolute log-odds, lowest submap id first on ties.
#[derive(Clone, Debug)]
pub struct FusedGrid {
    lattice: Lattice,
    flags: Vec<u8>,
    best: Vec<f32>,
}

impl FusedGrid {
    pub fn build(coll: &SubmapCollection, lattice: Lattice) -> Self {
        let n = lattice.len();
        let mut flags = vec![0u8; n];
        let mut best = vec![0.0f32; n];
        for (s, pose) in coll.submaps().iter().zip(coll.world_poses()) {
            let map = &s.map;
            if let Some(offset) = lattice_offset(&pose, &lattice, map.resolution()) {
                map.for_each_observed(|k, l| {
                    let w = VoxelKey([k.0[0] + offset[0], k.0[1] + offset[1], k.0[2] + offset[2]]);
                    if let Some(i) = lattice.index(w) {
                        merge(&mut flags[i], &mut best[i], true, l);
                    }
                });
            } else {
                let inv = pose.inverse();
                let bb = crate::frontiers::world_aabb(map, &pose);
                let lo = lattice.key_unchecked(&bb.min).0.map(|c| c.max(0));
                let hi = lattice.key_unchecked(&bb.max).0;
                let d = lattice.dims();
                for z in lo[2]..=hi[2].min(d[2] - 1) {
                    for y in lo[1]..=hi[1].min(d[1] - 1) {
                        for x in lo[0]..=hi[0].min(d[0] - 1) {
                            let k = VoxelKey([x, y, z]);
                            if let Some((obs, l)) = map.state_at(&(inv * lattice.center(k))) {
                                let i = lattice.linear(k);
                                merge(&mut flags[i], &mut best[i], obs, l);
                            }
                        }
                    }
                }
            }
        }
        Self { lattice, flags, best }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    #[inline]
    pub fn pessimistic(&self, i: usize) -> VoxelClass {
        pessimistic(self.flags[i])
    }

    #[inline]
    pub fn confident(&self, i: usize) -> VoxelClass {
        confident(self.best[i])
    }

    /// Signed log-odds of the most confident observation, zero if none.
    #[inline]
    pub fn confident_log_odds(&self, i: usize) -> f32 {
        self.best[i]
    }
}

/// Integer cell offset from submap keys to lattice keys when the submap grid coincides
/// with the lattice.
fn lattice_offset(pose: &Pose, lattice: &Lattice, map_res: f64) -> Option<[i32; 3]> {
    if map_res != lattice.resolution() || pose.rotation.angle() > 1e-9 {
        return None;
    }
    let t = pose.translation.vector;
    let mut off = [0i32; 3];
    for i in 0..3 {
        let c = (t[i] - lattice.origin()[i]) / map_res;
        let r = c.round();
        if (c - r).abs() > 1e-6 {
            return None;
        }
        off[i] = r as i32;
    }
    Some(off)
}

/// Pessimistic traversability test straight from the submaps: every lattice cell whose
/// centre lies within `radius` of `p` must be free in some submap and occupied in none.
pub fn traversable(coll: &SubmapCollection, p: &Point3<f64>, radius: f64) -> bool {
    let frames = Frames::new(coll);
    let res = coll.config().resolution;
    let lo = [0, 1, 2].map(|i| ((p[i] - radius) / res).floor() as i32 - 1);
    let hi = [0, 1, 2].map(|i| ((p[i] + radius) / res).floor() as i32 + 1);
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let c = Point3::new((x as f64 + 0.5) * res, (y as f64 + 0.5) * res, (z as f64 + 0.5) * res);
                if (c - p).norm() <= radius && frames.classify(&c).0 != VoxelClass::Free {
                    return false;
                }
            }
        }
    }
    true
}

/// Planner snapshot: fused classes, the traversable set for a clearance radius, and the
/// cells reachable from a start position through traversable cells.
#[derive(Clone, Debug)]
pub struct PlanningGrid {
    fused: FusedGrid,
    bounds: Aabb,
    clearance: f64,
    traversable: Vec<bool>,
    reachable: Vec<bool>,
    start: Option<usize>,
}

impl PlanningGrid {
    /// A cell is traversable iff no blocking cell centre lies within `clearance` of its
    /// centre. Blocking cells are occupied ones, unknown ones unless `unknown_traversable`,
    /// and cells centred outside `bounds`.
    pub fn build(coll: &SubmapCollection, bounds: &Aabb, clearance: f64, unknown_traversable: bool, start: &Point3<f64>) -> Self {
        let lattice = Lattice::covering(bounds, coll.config().resolution);
        let fused = FusedGrid::build(coll, lattice);
        let n = lattice.len();
        let blocked: Vec<bool> = (0..n)
            .map(|i| {
                !bounds.contains(&lattice.center(lattice.key_from_index(i)))
                    || match fused.pessimistic(i) {
                        VoxelClass::Free => false,
                        VoxelClass::Occupied => true,
                        VoxelClass::Unknown => !unknown_traversable,
                    }
            })
            .collect();
        let r_cells = clearance / lattice.resolution();
        let traversable = clear_of(&lattice, &blocked, r_cells * r_cells);
        let mut g = Self {
            fused,
            bounds: *bounds,
            clearance,
            traversable,
            reachable: vec![false; n],
            start: None,
        };
        g.flood(start);
        g
    }

    fn flood(&mut self, start: &Point3<f64>) {
        let lattice = *self.lattice();
        let Some(s) = lattice.key_of(start).map(|k| lattice.linear(k)) else {
            return;
        };
        if !self.traversable[s] {
            return;
        }
        self.start = Some(s);
        self.reachable[s] = true;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            let k = lattice.key_from_index(i);
            for o in NEIGHBORS_26 {
                let nk = k.offset(o);
                if let Some(j) = lattice.index(nk) {
                    if self.traversable[j] && !self.reachable[j] {
                        self.reachable[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }

    pub fn fused(&self) -> &FusedGrid {
        &self.fused
    }

    pub fn lattice(&self) -> &Lattice {
        self.fused.lattice()
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    /// Lattice index of the start cell, if it is traversable.
    pub fn start(&self) -> Option<usize> {
        self.start
    }

    #[inline]
    pub fn is_traversable(&self, i: usize) -> bool {
        self.traversable[i]
    }

    #[inline]
    pub fn is_reachable(&self, i: usize) -> bool {
        self.reachable[i]
    }

    pub fn traversable_at(&self, p: &Point3<f64>) -> bool {
        self.lattice()
            .key_of(p)
            .is_some_and(|k| self.traversable[self.lattice().linear(k)])
    }

    pub fn reachable_at(&self, p: &Point3<f64>) -> bool {
        self.lattice()
            .key_of(p)
            .is_some_and(|k| self.reachable[self.lattice().linear(k)])
    }

    /// Every cell crossed by the segment is traversable.
    pub fn segment_clear(&self, a: &Point3<f64>, b: &Point3<f64>) -> bool {
        self.lattice().walk(a, b, |_, i| self.traversable[i])
    }
}

pub(crate) const NEIGHBORS_26: [[i32; 3]; 26] = {
    let mut out = [[0; 3]; 26];
    let mut n = 0;
    let mut z = -1;
    while z <= 1 {
        let mut y = -1;
        while y <= 1 {
            let mut x = -1;
            while x <= 1 {
                if x != 0 || y != 0 || z != 0 {
                    out[n] = [x, y, z];
                    n += 1;
                }
                x += 1;
            }
            y += 1;
        }
        z += 1;
    }
    out
};

/// Cells whose squared distance (in cells) to every blocked cell exceeds `r2`. Cells
/// outside the lattice count as blocked.
fn clear_of(lattice: &Lattice, blocked: &[bool], r2: f64) -> Vec<bool> {
    let d = lattice.dims();
    let mut out = vec![false; blocked.len()];
    // The exact transform only needs the box around unblocked cells plus one blocked layer.
    let mut lo = d;
    let mut hi = [-1i32; 3];
    for (i, _) in blocked.iter().enumerate().filter(|(_, b)| !**b) {
        let k = lattice.key_from_index(i).0;
        for a in 0..3 {
            lo[a] = lo[a].min(k[a]);
            hi[a] = hi[a].max(k[a]);
        }
    }
    if hi[0] < 0 {
        return out;
    }
    let lo = lo.map(|c| c - 1);
    let hi = hi.map(|c| c + 1);
    let bd = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
    let inf = f32::INFINITY;
    let mut dist: Vec<f32> = Vec::with_capacity(bd[0] * bd[1] * bd[2]);
    for z in 0..bd[2] {
        for y in 0..bd[1] {
            for x in 0..bd[0] {
                let k = VoxelKey([lo[0] + x as i32, lo[1] + y as i32, lo[2] + z as i32]);
                let b = lattice.index(k).is_none_or(|i| blocked[i]);
                dist.push(if b { 0.0 } else { inf });
            }
        }
    }
    squared_edt(&mut dist, bd);
    for z in 1..bd[2] - 1 {
        for y in 1..bd[1] - 1 {
            for x in 1..bd[0] - 1 {
                let v = dist[x + bd[0] * (y + bd[1] * z)];
                if (v as f64) > r2 {
                    let k = VoxelKey([lo[0] + x as i32, lo[1] + y as i32, lo[2] + z as i32]);
                    out[lattice.linear(k)] = true;
                }
            }
        }
    }
    out
}

/// In-place exact squared Euclidean distance transform (separable lower-envelope method).
/// Zeros are sites; infinities are the cells to fill.
pub(crate) fn squared_edt(grid: &mut [f32], dims: [usize; 3]) {
    let [nx, ny, nz] = dims;
    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0f32; longest];
    let mut out = vec![0.0f32; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0f64; longest + 1];
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let others: Vec<usize> = match axis {
            0 => (0..ny * nz).map(|j| j * nx).collect(),
            1 => (0..nx * nz).map(|j| (j % nx) + (j / nx) * nx * ny).collect(),
            _ => (0..nx * ny).collect(),
        };
        for base in others {
            for q in 0..n {
                line[q] = grid[base + q * stride];
            }
            edt_1d(&line[..n], &mut out[..n], &mut v, &mut z);
            for q in 0..n {
                grid[base + q * stride] = out[q];
            }
        }
    }
}

fn edt_1d(f: &[f32], d: &mut [f32], v: &mut [usize], z: &mut [f64]) {
    let val = |q: usize| f[q] as f64 + (q * q) as f64;
    let mut sites = (0..f.len()).filter(|&q| f[q].is_finite());
    let Some(first) = sites.next() else {
        d.fill(f32::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in sites {
        loop {
            let p = v[k];
            let s = (val(q) - val(p)) / (2.0 * (q - p) as f64);
            // z[0] is -inf, so k never underflows.
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut j = 0usize;
    for (q, out) in d.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let dq = q as f64 - v[j] as f64;
        *out = (dq * dq + f[v[j]] as f64) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(grid: &[f32], dims: [usize; 3]) -> Vec<f32> {
        let [nx, ny, nz] = dims;
        let sites: Vec<[usize; 3]> = (0..grid.len())
            .filter(|&i| grid[i] == 0.0)
            .map(|i| [i % nx, (i / nx) % ny, i / (nx * ny)])
            .collect();
        (0..nx * ny * nz)
            .map(|i| {
                let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
                sites
                    .iter()
                    .map(|s| (0..3).map(|a| (s[a] as f32 - c[a] as f32).powi(2)).sum::<f32>())
                    .fold(f32::INFINITY, f32::min)
            })
            .collect()
    }

    #[test]
    fn edt_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let dims = [rng.gen_range(1..12), rng.gen_range(1..12), rng.gen_range(1..12)];
            let n = dims[0] * dims[1] * dims[2];
            let density = if trial % 4 == 0 { 0.0 } else { rng.gen_range(0.01..0.3) };
            let mut g: Vec<f32> = (0..n)
                .map(|_| if rng.gen_bool(density) { 0.0 } else { f32::INFINITY })
                .collect();
            let want = brute(&g, dims);
            squared_edt(&mut g, dims);
            assert_eq!(g, want, "dims {dims:?}");
        }
    }

    #[test]
    fn lattice_covers_bounds() {
        let l = Lattice::covering(&Aabb::from_corners([-0.05, 0.0, 0.3], [1.0, 0.95, 0.7]), 0.1);
        assert_eq!(l.dims(), [11, 10, 4]);
        assert!((l.origin() - Point3::new(-0.1, 0.0, 0.3)).norm() < 1e-12);
        let k = l.key_of(&Point3::new(0.99, 0.91, 0.69)).unwrap();
        assert_eq!(k, VoxelKey::new(10, 9, 3));
        assert_eq!(l.key_from_index(l.linear(k)), k);
    }

    #[test]
    fn neighbor_table() {
        assert_eq!(NEIGHBORS_26.len(), 26);
        assert!(!NEIGHBORS_26.contains(&[0, 0, 0]));
    }
}
