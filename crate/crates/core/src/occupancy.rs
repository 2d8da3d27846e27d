//! Bounded, block-sparse log-odds occupancy grid used as the per-submap map.
//!
//! Voxels are addressed by integer keys in the submap frame; voxel `k` spans
//! `[k * res, (k + 1) * res)` on each axis, so the grid covers `[0, dim * res)^3`.
//! Storage is allocated in 8^3 blocks on first touch.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::raycast::{clip_segment, floor_cell, lerp, walk_cells};
use crate::world::{RayKind, Scan};

pub const BLOCK_SIDE: i32 = 8;
const BLOCK_SHIFT: i32 = 3;
const BLOCK_VOXELS: usize = 512;
const NO_SLOT: u32 = u32::MAX;

/// Nudge applied to hit endpoints so the endpoint lands inside the surface it hit.
const HIT_NUDGE: f64 = 1e-6;

/// Integer voxel index in a grid frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey(pub [i32; 3]);

impl VoxelKey {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        Self([x, y, z])
    }

    pub fn offset(self, d: [i32; 3]) -> Self {
        Self([self.0[0] + d[0], self.0[1] + d[1], self.0[2] + d[2]])
    }

    /// The six face neighbours.
    pub fn face_neighbors(self) -> [VoxelKey; 6] {
        FACE_OFFSETS.map(|d| self.offset(d))
    }
}

pub const FACE_OFFSETS: [[i32; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VoxelClass {
    Unknown,
    Free,
    Occupied,
}

impl VoxelClass {
    /// Classification from the stored state: unobserved or exactly zero log-odds is unknown.
    pub fn from_state(observed: bool, log_odds: f32) -> Self {
        if !observed || log_odds == 0.0 {
            VoxelClass::Unknown
        } else if log_odds < 0.0 {
            VoxelClass::Free
        } else {
            VoxelClass::Occupied
        }
    }
}

/// Log-odds update constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyParams {
    pub hit: f32,
    pub miss: f32,
    pub min: f32,
    pub max: f32,
}

impl Default for OccupancyParams {
    fn default() -> Self {
        Self {
            hit: 1.2,
            miss: -0.6,
            min: -5.0,
            max: 5.0,
        }
    }
}

#[derive(Clone)]
struct Block {
    log_odds: [f32; BLOCK_VOXELS],
    observed: [u64; 8],
    dirty: [u64; 8],
    any_dirty: bool,
}

impl Block {
    fn new() -> Box<Self> {
        Box::new(Self {
            log_odds: [0.0; BLOCK_VOXELS],
            observed: [0; 8],
            dirty: [0; 8],
            any_dirty: false,
        })
    }
}

#[inline]
fn bit(mask: &[u64; 8], i: usize) -> bool {
    mask[i >> 6] & (1u64 << (i & 63)) != 0
}

#[inline]
fn set_bit(mask: &mut [u64; 8], i: usize) {
    mask[i >> 6] |= 1u64 << (i & 63);
}

/// Per-scan hit/miss tallies for one block.
struct Pending {
    slot: u32,
    hits: [u32; BLOCK_VOXELS],
    misses: [u32; BLOCK_VOXELS],
}

/// Summary of one `integrate_scan` call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    /// Distinct voxels updated by the scan (all of them are now dirty).
    pub touched: usize,
    pub rays_integrated: usize,
}

/// Voxel keys modified since the previous `take_dirty`, stored as per-block bitmasks.
#[derive(Clone, Debug, Default)]
pub struct DirtySet {
    blocks: rustc_hash::FxHashMap<[i32; 3], [u64; 8]>,
    len: usize,
}

impl DirtySet {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, key: VoxelKey) -> bool {
        let (b, i) = split_key(key);
        self.blocks.get(&b).is_some_and(|m| bit(m, i))
    }

    /// Keys in ascending block order, then voxel order.
    pub fn keys(&self) -> Vec<VoxelKey> {
        let mut blocks: Vec<_> = self.blocks.iter().collect();
        blocks.sort_unstable_by_key(|(b, _)| **b);
        let mut out = Vec::with_capacity(self.len);
        for (b, mask) in blocks {
            for (w, &word) in mask.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let i = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    out.push(join_key(*b, i));
                }
            }
        }
        out
    }
}

#[inline]
fn split_key(key: VoxelKey) -> ([i32; 3], usize) {
    let k = key.0;
    let b = [k[0] >> BLOCK_SHIFT, k[1] >> BLOCK_SHIFT, k[2] >> BLOCK_SHIFT];
    let l = [
        (k[0] & (BLOCK_SIDE - 1)) as usize,
        (k[1] & (BLOCK_SIDE - 1)) as usize,
        (k[2] & (BLOCK_SIDE - 1)) as usize,
    ];
    (b, l[0] | (l[1] << 3) | (l[2] << 6))
}

#[inline]
fn join_key(b: [i32; 3], i: usize) -> VoxelKey {
    VoxelKey([
        (b[0] << BLOCK_SHIFT) | (i & 7) as i32,
        (b[1] << BLOCK_SHIFT) | ((i >> 3) & 7) as i32,
        (b[2] << BLOCK_SHIFT) | ((i >> 6) & 7) as i32,
    ])
}

/// A cube-shaped occupancy submap anchored to a keyframe.
pub struct OccupancySubmap {
    id: u32,
    resolution: f64,
    dim: i32,
    anchor_kf: u32,
    t_ks: Pose,
    frozen: bool,
    params: OccupancyParams,
    blocks_per_side: i32,
    /// Dense block table; `NO_SLOT` marks unallocated blocks.
    slots: Vec<u32>,
    #[allow(clippy::vec_box)]
    blocks: Vec<Box<Block>>,
    block_keys: Vec<[i32; 3]>,
    pending_index: Vec<u32>,
    pending: Vec<Box<Pending>>,
}

impl Clone for OccupancySubmap {
    fn clone(&self) -> Self {
        Self {
            id: self.id,
            resolution: self.resolution,
            dim: self.dim,
            anchor_kf: self.anchor_kf,
            t_ks: self.t_ks,
            frozen: self.frozen,
            params: self.params,
            blocks_per_side: self.blocks_per_side,
            slots: self.slots.clone(),
            blocks: self.blocks.clone(),
            block_keys: self.block_keys.clone(),
            pending_index: vec![NO_SLOT; self.pending_index.len()],
            pending: Vec::new(),
        }
    }
}

impl std::fmt::Debug for OccupancySubmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OccupancySubmap")
            .field("id", &self.id)
            .field("resolution", &self.resolution)
            .field("dim", &self.dim)
            .field("anchor_kf", &self.anchor_kf)
            .field("frozen", &self.frozen)
            .field("blocks", &self.blocks.len())
            .finish()
    }
}

impl OccupancySubmap {
    /// `dim` is rounded up to a multiple of the block side.
    pub fn new(id: u32, resolution: f64, dim: i32, anchor_kf: u32, t_ks: Pose, params: OccupancyParams) -> Self {
        assert!(resolution > 0.0 && dim > 0);
        let blocks_per_side = (dim + BLOCK_SIDE - 1) / BLOCK_SIDE;
        let n = (blocks_per_side as usize).pow(3);
        Self {
            id,
            resolution,
            dim,
            anchor_kf,
            t_ks,
            frozen: false,
            params,
            blocks_per_side,
            slots: vec![NO_SLOT; n],
            blocks: Vec::new(),
            block_keys: Vec::new(),
            pending_index: vec![NO_SLOT; n],
            pending: Vec::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dim(&self) -> i32 {
        self.dim
    }

    /// Side length of the cube in meters.
    pub fn extent(&self) -> f64 {
        self.dim as f64 * self.resolution
    }

    pub fn anchor_kf(&self) -> u32 {
        self.anchor_kf
    }

    /// Fixed transform from the anchor keyframe to the submap origin.
    pub fn t_ks(&self) -> &Pose {
        &self.t_ks
    }

    pub fn params(&self) -> &OccupancyParams {
        &self.params
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn allocated_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Approximate heap bytes of voxel storage.
    pub fn block_bytes() -> usize {
        std::mem::size_of::<Block>()
    }

    #[inline]
    pub fn in_bounds(&self, key: VoxelKey) -> bool {
        let k = key.0;
        (0..3).all(|i| k[i] >= 0 && k[i] < self.dim)
    }

    /// Key of the voxel containing `p` (submap frame), if inside the cube.
    #[inline]
    pub fn key_of(&self, p: &Point3<f64>) -> Option<VoxelKey> {
        let inv = 1.0 / self.resolution;
        let k = [(p.x * inv).floor(), (p.y * inv).floor(), (p.z * inv).floor()];
        let d = self.dim as f64;
        if k.iter().all(|&v| v >= 0.0 && v < d) {
            Some(VoxelKey([k[0] as i32, k[1] as i32, k[2] as i32]))
        } else {
            None
        }
    }

    /// Voxel center in the submap frame.
    pub fn center(&self, key: VoxelKey) -> Point3<f64> {
        let r = self.resolution;
        Point3::new(
            (key.0[0] as f64 + 0.5) * r,
            (key.0[1] as f64 + 0.5) * r,
            (key.0[2] as f64 + 0.5) * r,
        )
    }

    #[inline]
    fn slot_index(&self, b: [i32; 3]) -> usize {
        let n = self.blocks_per_side as usize;
        b[0] as usize + n * (b[1] as usize + n * b[2] as usize)
    }

    #[inline]
    fn state(&self, key: VoxelKey) -> (bool, f32) {
        let (b, i) = split_key(key);
        let slot = self.slots[self.slot_index(b)];
        if slot == NO_SLOT {
            return (false, 0.0);
        }
        let block = &self.blocks[slot as usize];
        (bit(&block.observed, i), block.log_odds[i])
    }

    /// Classification of an in-bounds voxel.
    pub fn classify(&self, key: VoxelKey) -> Result<VoxelClass> {
        if !self.in_bounds(key) {
            return Err(Error::OutOfBounds { key });
        }
        Ok(self.classify_unchecked(key))
    }

    /// Classification without the bounds check; panics on out-of-bounds keys.
    #[inline]
    pub fn classify_unchecked(&self, key: VoxelKey) -> VoxelClass {
        let (observed, l) = self.state(key);
        VoxelClass::from_state(observed, l)
    }

    /// `None` outside the cube.
    #[inline]
    pub fn get(&self, key: VoxelKey) -> Option<VoxelClass> {
        self.in_bounds(key).then(|| self.classify_unchecked(key))
    }

    /// `(observed, log_odds)`; `None` outside the cube.
    #[inline]
    pub fn voxel_state(&self, key: VoxelKey) -> Option<(bool, f32)> {
        self.in_bounds(key).then(|| self.state(key))
    }

    /// State of the voxel containing the submap-frame point `p`.
    #[inline]
    pub fn state_at(&self, p: &Point3<f64>) -> Option<(bool, f32)> {
        self.key_of(p).map(|k| self.state(k))
    }

    /// Integrates a scan taken at `t_s_sensor` (sensor frame to submap frame).
    ///
    /// Hits and misses of the whole scan are tallied first and applied once per voxel, so
    /// the result does not depend on ray order.
    pub fn integrate_scan(&mut self, scan: &Scan, t_s_sensor: &Pose) -> Result<IntegrationStats> {
        if self.frozen {
            return Err(Error::Frozen(self.id));
        }
        let origin = t_s_sensor.translation.vector;
        let inv = 1.0 / self.resolution;
        let a = [origin.x * inv, origin.y * inv, origin.z * inv];
        let mut rays = 0;
        for ray in &scan.rays {
            let is_hit = match ray.kind {
                RayKind::Hit => true,
                RayKind::MaxRange => false,
                RayKind::TooNear => continue,
            };
            rays += 1;
            let mut end: Vector3<f64> = (t_s_sensor * ray.point).coords;
            if is_hit {
                let dir = end - origin;
                let n = dir.norm();
                if n > 0.0 {
                    end += dir * (HIT_NUDGE / n);
                }
            }
            let b = [end.x * inv, end.y * inv, end.z * inv];
            self.tally_ray(a, b, is_hit);
        }
        Ok(self.apply_pending(rays))
    }

    /// Applies one miss update to every voxel whose center lies within `radius` of `center`
    /// (submap frame). Used for the known-free bubble around the start position.
    pub fn integrate_free_sphere(&mut self, center: &Point3<f64>, radius: f64) -> Result<IntegrationStats> {
        if self.frozen {
            return Err(Error::Frozen(self.id));
        }
        let r = self.resolution;
        let lo = ((center.coords.add_scalar(-radius)) / r).map(|v| v.floor() as i32);
        let hi = ((center.coords.add_scalar(radius)) / r).map(|v| v.floor() as i32);
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    let key = VoxelKey([x, y, z]);
                    if !self.in_bounds(key) {
                        continue;
                    }
                    if (self.center(key) - center).norm() <= radius {
                        *self.pending_cell(key).1 += 1;
                    }
                }
            }
        }
        Ok(self.apply_pending(0))
    }

    fn tally_ray(&mut self, a: [f64; 3], b: [f64; 3], is_hit: bool) {
        let d = self.dim as f64;
        let Some((t0, t1)) = clip_segment(a, b, [0.0; 3], [d; 3]) else {
            return;
        };
        let end_inside = t1 >= 1.0;
        let s = lerp(a, b, t0);
        let e = lerp(a, b, t1);
        let dim = self.dim;
        let clamp = |c: [i32; 3]| c.map(|v| v.clamp(0, dim - 1));
        let start_cell = clamp(floor_cell(s));
        let end_cell = clamp(floor_cell(e));
        let hit_last = is_hit && end_inside;
        let mut cached = ([i32::MIN; 3], 0usize);
        walk_cells(s, e, start_cell, end_cell, |c| {
            let b = c.map(|v| v >> BLOCK_SHIFT);
            if b != cached.0 {
                cached = (b, self.pending_block(b));
            }
            let l = c.map(|v| (v & (BLOCK_SIDE - 1)) as usize);
            let i = l[0] | (l[1] << 3) | (l[2] << 6);
            let p = &mut self.pending[cached.1];
            if hit_last && c == end_cell {
                p.hits[i] += 1;
            } else {
                p.misses[i] += 1;
            }
            true
        });
    }

    /// Index into `pending` of the accumulator for block `b`, created on first use.
    #[inline]
    fn pending_block(&mut self, b: [i32; 3]) -> usize {
        let si = self.slot_index(b);
        let mut idx = self.pending_index[si];
        if idx == NO_SLOT {
            idx = self.pending.len() as u32;
            self.pending.push(Box::new(Pending {
                slot: si as u32,
                hits: [0; BLOCK_VOXELS],
                misses: [0; BLOCK_VOXELS],
            }));
            self.pending_index[si] = idx;
        }
        idx as usize
    }

    #[inline]
    fn pending_cell(&mut self, key: VoxelKey) -> (&mut u32, &mut u32) {
        let (b, i) = split_key(key);
        let idx = self.pending_block(b);
        let p = &mut self.pending[idx];
        (&mut p.hits[i], &mut p.misses[i])
    }

    fn apply_pending(&mut self, rays: usize) -> IntegrationStats {
        let params = self.params;
        let mut touched = 0;
        let pending = std::mem::take(&mut self.pending);
        for p in &pending {
            let si = p.slot as usize;
            self.pending_index[si] = NO_SLOT;
            let mut slot = self.slots[si];
            if slot == NO_SLOT {
                slot = self.blocks.len() as u32;
                self.blocks.push(Block::new());
                self.block_keys.push(self.block_coords(si));
                self.slots[si] = slot;
            }
            let block = &mut self.blocks[slot as usize];
            for i in 0..BLOCK_VOXELS {
                let (h, m) = (p.hits[i], p.misses[i]);
                if h == 0 && m == 0 {
                    continue;
                }
                let delta = h as f32 * params.hit + m as f32 * params.miss;
                block.log_odds[i] = (block.log_odds[i] + delta).clamp(params.min, params.max);
                set_bit(&mut block.observed, i);
                set_bit(&mut block.dirty, i);
                touched += 1;
            }
            block.any_dirty = true;
        }
        // Keep the allocations for the next scan.
        self.pending = pending;
        self.pending.clear();
        IntegrationStats {
            touched,
            rays_integrated: rays,
        }
    }

    fn block_coords(&self, slot_index: usize) -> [i32; 3] {
        let n = self.blocks_per_side as usize;
        [
            (slot_index % n) as i32,
            ((slot_index / n) % n) as i32,
            (slot_index / (n * n)) as i32,
        ]
    }

    /// Returns the keys modified since the previous call and clears them.
    pub fn take_dirty(&mut self) -> DirtySet {
        let mut out = DirtySet::default();
        for (block, key) in self.blocks.iter_mut().zip(&self.block_keys) {
            if !block.any_dirty {
                continue;
            }
            let n: u32 = block.dirty.iter().map(|w| w.count_ones()).sum();
            if n > 0 {
                out.len += n as usize;
                out.blocks.insert(*key, block.dirty);
            }
            block.dirty = [0; 8];
            block.any_dirty = false;
        }
        out
    }

    /// Number of observed voxels.
    pub fn observed_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.observed.iter().map(|w| w.count_ones() as usize).sum::<usize>())
            .sum()
    }

    /// Visits every observed voxel as `(key, log_odds)` in allocation order.
    pub fn for_each_observed(&self, mut f: impl FnMut(VoxelKey, f32)) {
        for (block, b) in self.blocks.iter().zip(&self.block_keys) {
            for (w, &word) in block.observed.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let i = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    f(join_key(*b, i), block.log_odds[i]);
                }
            }
        }
    }

    /// Serializable dump of the submap.
    pub fn snapshot(&self) -> SubmapSnapshot {
        let mut order: Vec<usize> = (0..self.blocks.len()).collect();
        order.sort_unstable_by_key(|&i| self.block_keys[i]);
        let blocks = order
            .into_iter()
            .filter(|&i| self.blocks[i].observed.iter().any(|&w| w != 0))
            .map(|i| BlockSnapshot {
                key: self.block_keys[i],
                log_odds: self.blocks[i].log_odds.to_vec(),
                observed: self.blocks[i].observed,
            })
            .collect();
        SubmapSnapshot {
            version: SubmapSnapshot::VERSION,
            id: self.id,
            resolution: self.resolution,
            dim: self.dim,
            anchor_kf: self.anchor_kf,
            t_ks: self.t_ks,
            frozen: self.frozen,
            params: self.params,
            blocks,
        }
    }

    pub fn from_snapshot(s: &SubmapSnapshot) -> Result<Self> {
        if s.version != SubmapSnapshot::VERSION {
            return Err(Error::Snapshot(format!("unsupported version {}", s.version)));
        }
        let mut map = Self::new(s.id, s.resolution, s.dim, s.anchor_kf, s.t_ks, s.params);
        for b in &s.blocks {
            if b.log_odds.len() != BLOCK_VOXELS {
                return Err(Error::Snapshot(format!("block {:?} has {} voxels", b.key, b.log_odds.len())));
            }
            if b.key.iter().any(|&v| v < 0 || v >= map.blocks_per_side) {
                return Err(Error::Snapshot(format!("block {:?} out of range", b.key)));
            }
            let si = map.slot_index(b.key);
            let mut block = Block::new();
            block.log_odds.copy_from_slice(&b.log_odds);
            block.observed = b.observed;
            map.slots[si] = map.blocks.len() as u32;
            map.blocks.push(block);
            map.block_keys.push(b.key);
        }
        map.frozen = s.frozen;
        Ok(map)
    }
}

/// Versioned, serde-friendly dump of a submap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmapSnapshot {
    pub version: u32,
    pub id: u32,
    pub resolution: f64,
    pub dim: i32,
    pub anchor_kf: u32,
    pub t_ks: Pose,
    pub frozen: bool,
    pub params: OccupancyParams,
    pub blocks: Vec<BlockSnapshot>,
}

impl SubmapSnapshot {
    pub const VERSION: u32 = 1;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSnapshot {
    pub key: [i32; 3],
    pub log_odds: Vec<f32>,
    pub observed: [u64; 8],
}
