use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{inverse_direction, Aabb};
use crate::occupancy::{VoxelKey, FACE_OFFSETS};

/// Static box-world with a rasterized ground-truth occupancy grid.
///
/// Grid voxel `k` spans `bounds.min + [k, k + 1) * resolution`; a voxel is occupied iff
/// its center lies inside (or on the surface of) any solid.
#[derive(Clone, Debug)]
pub struct Environment {
    bounds: Aabb,
    solids: Vec<Aabb>,
    resolution: f64,
    dims: [i32; 3],
    gt: Vec<bool>,
}

impl Environment {
    pub fn new(bounds: Aabb, solids: Vec<Aabb>, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidScene(format!("resolution {resolution} must be positive")));
        }
        let extent = bounds.extent();
        if (0..3).any(|i| !(extent[i] > 0.0)) {
            return Err(Error::InvalidScene("bounds have zero or negative extent".into()));
        }
        for (i, s) in solids.iter().enumerate() {
            if !bounds.contains_box(s) {
                return Err(Error::InvalidScene(format!(
                    "solid {i} {:?}..{:?} lies outside the bounds",
                    s.min.coords.as_slice(),
                    s.max.coords.as_slice()
                )));
            }
        }
        let dims = [0, 1, 2].map(|i| ((extent[i] / resolution) - 1e-9).ceil().max(1.0) as i32);
        let mut env = Self {
            bounds,
            solids,
            resolution,
            dims,
            gt: vec![false; dims.iter().map(|&d| d as usize).product()],
        };
        env.rasterize();
        Ok(env)
    }

    fn rasterize(&mut self) {
        let r = self.resolution;
        let o = self.bounds.min;
        for s in &self.solids {
            // Centers at o + (i + 0.5) r inside [min, max]; ties count as inside.
            let lo = [0, 1, 2].map(|a| (((s.min[a] - o[a]) / r - 0.5 - 1e-9).ceil() as i32).max(0));
            let hi = [0, 1, 2].map(|a| (((s.max[a] - o[a]) / r - 0.5 + 1e-9).floor() as i32).min(self.dims[a] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let i = self.linear([x, y, z]);
                        self.gt[i] = true;
                    }
                }
            }
        }
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn solids(&self) -> &[Aabb] {
        &self.solids
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.gt.len()
    }

    pub fn in_grid(&self, key: VoxelKey) -> bool {
        (0..3).all(|i| key.0[i] >= 0 && key.0[i] < self.dims[i])
    }

    #[inline]
    pub(crate) fn linear(&self, k: [i32; 3]) -> usize {
        k[0] as usize + self.dims[0] as usize * (k[1] as usize + self.dims[1] as usize * k[2] as usize)
    }

    pub fn index(&self, key: VoxelKey) -> Option<usize> {
        self.in_grid(key).then(|| self.linear(key.0))
    }

    pub fn key_from_index(&self, i: usize) -> VoxelKey {
        let dx = self.dims[0] as usize;
        let dy = self.dims[1] as usize;
        VoxelKey([(i % dx) as i32, ((i / dx) % dy) as i32, (i / (dx * dy)) as i32])
    }

    /// Grid key of the voxel containing `p`, if inside the grid.
    pub fn key_of(&self, p: &Point3<f64>) -> Option<VoxelKey> {
        let k = VoxelKey([0, 1, 2].map(|i| ((p[i] - self.bounds.min[i]) / self.resolution).floor() as i32));
        self.in_grid(k).then_some(k)
    }

    pub fn center(&self, key: VoxelKey) -> Point3<f64> {
        let r = self.resolution;
        Point3::new(
            self.bounds.min.x + (key.0[0] as f64 + 0.5) * r,
            self.bounds.min.y + (key.0[1] as f64 + 0.5) * r,
            self.bounds.min.z + (key.0[2] as f64 + 0.5) * r,
        )
    }

    /// Ground-truth occupancy; voxels outside the grid are reported free.
    #[inline]
    pub fn is_solid(&self, key: VoxelKey) -> bool {
        self.index(key).is_some_and(|i| self.gt[i])
    }

    #[inline]
    pub(crate) fn solid_at(&self, i: usize) -> bool {
        self.gt[i]
    }

    pub fn occupied_count(&self) -> usize {
        self.gt.iter().filter(|&&v| v).count()
    }

    /// Solid voxels with at least one in-grid non-solid face neighbour.
    pub fn is_surface(&self, key: VoxelKey) -> bool {
        self.is_solid(key)
            && FACE_OFFSETS.iter().any(|&d| {
                let n = key.offset(d);
                self.in_grid(n) && !self.is_solid(n)
            })
    }

    pub fn surface_voxels(&self) -> Vec<VoxelKey> {
        (0..self.gt.len())
            .filter(|&i| self.gt[i])
            .map(|i| self.key_from_index(i))
            .filter(|&k| self.is_surface(k))
            .collect()
    }

    /// Exact first intersection with any solid along `origin + t dir`, `t` in `[0, d_max]`.
    /// `dir` must be unit length. Origins inside a solid report distance 0.
    pub fn raycast(&self, origin: &Point3<f64>, dir: &Vector3<f64>, d_max: f64) -> Option<f64> {
        debug_assert!((dir.norm() - 1.0).abs() < 1e-9);
        let inv = inverse_direction(dir);
        let mut best = None;
        let mut limit = d_max;
        for s in &self.solids {
            if let Some(t) = s.ray_entry(origin, &inv, limit) {
                limit = t;
                best = Some(t);
            }
        }
        best
    }

    /// Distance to the nearest solid; infinite when the scene has none.
    pub fn clearance(&self, p: &Point3<f64>) -> f64 {
        self.solids.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
    }
}
