use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};

use explore_core::planner::GainImage;
use explore_core::{Aabb, OccupancySubmap, VoxelKey};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;

use super::Cell;

/// Frontier definition evaluated directly on raw voxel states.
pub fn oracle_frontiers(map: &OccupancySubmap) -> FxHashSet<VoxelKey> {
    let d = map.dim();
    let class = |k: [i32; 3]| -> Option<i8> {
        if k.iter().any(|&c| c < 0 || c >= d) {
            return None;
        }
        let (obs, l) = map.voxel_state(VoxelKey(k)).unwrap();
        Some(if !obs || l == 0.0 {
            0
        } else if l < 0.0 {
            -1
        } else {
            1
        })
    };
    let mut out = FxHashSet::default();
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                if class([x, y, z]) != Some(-1) {
                    continue;
                }
                let open = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
                    .iter()
                    .any(|o| matches!(class([x + o[0], y + o[1], z + o[2]]), None | Some(0)));
                if open {
                    out.insert(VoxelKey([x, y, z]));
                }
            }
        }
    }
    out
}

/// Every cyclic window evaluated from scratch, ties resolved by the documented rule.
pub fn exhaustive_yaw(img: &GainImage, alpha_h: f64, window_360: f64) -> (f64, f64) {
    let n = img.n_az;
    let omni = alpha_h >= TAU - 1e-9;
    let fov = if omni { window_360 } else { alpha_h };
    let w = ((n as f64 * fov / TAU).round() as usize).clamp(1, n);
    let column = |j: usize| {
        let mut s = 0.0;
        for i in 0..img.n_el {
            s += img.data[i * n + j];
        }
        s
    };
    let window = |s: usize| {
        let mut acc = 0.0;
        for o in 0..w {
            acc += column((s + o) % n);
        }
        acc
    };
    let sums: Vec<f64> = (0..n).map(window).collect();
    let best = sums.iter().cloned().fold(f64::MIN, f64::max);
    let azimuth = |j: usize| {
        let a = TAU * j as f64 / n as f64;
        if a >= PI {
            a - TAU
        } else {
            a
        }
    };
    let centre = |s: usize| azimuth((s + w / 2) % n);
    let maxed: Vec<usize> = (0..n).filter(|&s| sums[s] == best).collect();
    let mut proposals: Vec<f64> = Vec::new();
    if maxed.len() == n {
        proposals = (0..n).map(centre).collect();
    } else {
        // Rotate so the scan starts right after a non-maximal window.
        let pivot = (0..n).find(|&s| sums[s] != best).unwrap();
        let mut run: Vec<usize> = Vec::new();
        for o in 1..=n {
            let s = (pivot + o) % n;
            if sums[s] == best {
                run.push(s);
            } else if !run.is_empty() {
                proposals.push(centre(run[(run.len() - 1) / 2]));
                run.clear();
            }
        }
    }
    proposals.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap().then(a.partial_cmp(b).unwrap()));
    let g = if omni {
        (0..n).map(column).fold(0.0, |a, c| a + c)
    } else {
        best
    };
    (proposals[0], g)
}

pub fn random_image(r: &mut ChaCha8Rng) -> GainImage {
    let n_az = r.gen_range(1..80);
    let n_el = r.gen_range(1..10);
    let mut img = GainImage::zeros(n_el, n_az);
    let style = r.gen_range(0..4);
    for v in img.data.iter_mut() {
        *v = match style {
            0 => r.gen_range(0.0..10.0),
            1 => r.gen_range(0..3) as f64,
            2 => {
                if r.gen_bool(0.05) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 2.0,
        };
    }
    img
}

pub fn bounds(dim: i32, res: f64) -> Aabb {
    let e = dim as f64 * res;
    Aabb::from_corners([0.0; 3], [e; 3])
}

pub fn maze(seed: u64, dim: i32, density: f64) -> impl Fn(VoxelKey) -> Cell {
    move |k: VoxelKey| {
        let h = k.0.iter().fold(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15), |acc, &c| {
            (acc ^ (c as u64).wrapping_add(0x632B_E59B_D9B4_E019)).wrapping_mul(0x2545_F491_4F6C_DD1D)
        });
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        if k.0.iter().any(|&c| c == 0 || c == dim - 1) {
            Cell::Unknown
        } else if u < density {
            Cell::Occupied
        } else {
            Cell::Free
        }
    }
}

/// Traversable cells by brute force: every cell centre within `r` cells must be free and
/// inside the lattice.
pub fn brute_traversable(cells: &dyn Fn(VoxelKey) -> Cell, dim: i32, r: f64) -> Vec<bool> {
    let reach = r.floor() as i32;
    let mut out = vec![false; (dim * dim * dim) as usize];
    for z in 0..dim {
        for y in 0..dim {
            for x in 0..dim {
                let mut ok = true;
                'outer: for dz in -reach..=reach {
                    for dy in -reach..=reach {
                        for dx in -reach..=reach {
                            if ((dx * dx + dy * dy + dz * dz) as f64) > r * r {
                                continue;
                            }
                            let k = [x + dx, y + dy, z + dz];
                            if k.iter().any(|&c| c < 0 || c >= dim) || cells(VoxelKey(k)) != Cell::Free {
                                ok = false;
                                break 'outer;
                            }
                        }
                    }
                }
                out[(x + dim * (y + dim * z)) as usize] = ok;
            }
        }
    }
    out
}

#[derive(PartialEq)]
pub struct Item(f64, usize);
impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.partial_cmp(&self.0).unwrap().then(o.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// Uniform-cost search over the traversable cells, 26-connected.
pub fn dijkstra(trav: &[bool], dim: i32, res: f64, s: usize, g: usize) -> Option<f64> {
    let mut dist = vec![f64::INFINITY; trav.len()];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Item(0.0, s));
    while let Some(Item(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == g {
            return Some(d);
        }
        let (x, y, z) = ((i as i32) % dim, (i as i32 / dim) % dim, i as i32 / (dim * dim));
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1i32 {
                    let (nx, ny, nz) = (x + dx, y + dy, z + dz);
                    if (dx, dy, dz) == (0, 0, 0) || [nx, ny, nz].iter().any(|&c| c < 0 || c >= dim) {
                        continue;
                    }
                    let j = (nx + dim * (ny + dim * nz)) as usize;
                    if !trav[j] {
                        continue;
                    }
                    let nd = d + res * ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                    if nd < dist[j] {
                        dist[j] = nd;
                        heap.push(Item(nd, j));
                    }
                }
            }
        }
    }
    None
}
