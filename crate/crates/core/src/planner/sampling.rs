//! Candidate sampling around frontier clusters.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rustc_hash::FxHashMap;

use super::grid::{PlanningGrid, NEIGHBORS_26};
use crate::frontiers::GlobalFrontierSet;
use crate::occupancy::VoxelKey;

/// Groups frontier positions into 26-connected components of world cells of size `res`.
/// Components are ordered by their smallest cell key; members keep input order.
pub fn frontier_components(points: &[Point3<f64>], res: f64) -> Vec<Vec<usize>> {
    let key = |p: &Point3<f64>| VoxelKey([0, 1, 2].map(|i| (p[i] / res).floor() as i32));
    let mut cells: FxHashMap<VoxelKey, Vec<usize>> = FxHashMap::default();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let mut keys: Vec<VoxelKey> = cells.keys().copied().collect();
    keys.sort_unstable();
    let mut label: FxHashMap<VoxelKey, usize> = FxHashMap::default();
    let mut comps: Vec<Vec<VoxelKey>> = Vec::new();
    for &k in &keys {
        if label.contains_key(&k) {
            continue;
        }
        let id = comps.len();
        label.insert(k, id);
        let mut members = vec![k];
        let mut head = 0;
        while head < members.len() {
            let c = members[head];
            head += 1;
            for o in NEIGHBORS_26 {
                let n = c.offset(o);
                if cells.contains_key(&n) && !label.contains_key(&n) {
                    label.insert(n, id);
                    members.push(n);
                }
            }
        }
        comps.push(members);
    }
    comps
        .into_iter()
        .map(|members| {
            let mut idx: Vec<usize> = members.iter().flat_map(|k| cells[k].iter().copied()).collect();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Largest-remainder split of `n` slots proportional to `sizes`; remainder ties go to
/// the lower index.
pub fn proportional_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * n / total).collect();
    let mut rest: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(i, &s)| ((s * n) % total, i)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = quotas.iter().sum();
    for &(_, i) in rest.iter().take(n - assigned) {
        quotas[i] += 1;
    }
    quotas
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingParams {
    pub n_c: usize,
    pub shell_min: f64,
    pub shell_max: f64,
    pub max_tries: usize,
}

/// Up to `n_c` candidate positions. Slots are split across frontier components by size
/// and handed out round-robin; each slot draws a frontier of its component and a point
/// uniformly in the spherical shell around it, snapped to the lattice cell centre and
/// accepted iff reachable from the grid's start. A slot gives up after `max_tries` draws.
pub fn sample_candidates(grid: &PlanningGrid, gf: &GlobalFrontierSet, params: &SamplingParams, seed: u64) -> Vec<Point3<f64>> {
    if gf.is_empty() || params.n_c == 0 || grid.start().is_none() {
        return Vec::new();
    }
    let lattice = grid.lattice();
    let points: Vec<Point3<f64>> = gf.entries.iter().map(|e| e.world).collect();
    let comps = frontier_components(&points, lattice.resolution());
    let quotas = proportional_quotas(&comps.iter().map(Vec::len).collect::<Vec<_>>(), params.n_c);
    let mut slots = Vec::with_capacity(params.n_c);
    let mut left = quotas.clone();
    while slots.len() < params.n_c {
        for (c, q) in left.iter_mut().enumerate() {
            if *q > 0 {
                *q -= 1;
                slots.push(c);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r3_lo, r3_hi) = (params.shell_min.powi(3), params.shell_max.powi(3));
    let mut out = Vec::with_capacity(params.n_c);
    for c in slots {
        let comp = &comps[c];
        for _ in 0..params.max_tries {
            let f = points[comp[rng.gen_range(0..comp.len())]];
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let radius = if r3_hi > r3_lo {
                rng.gen_range(r3_lo..r3_hi).cbrt()
            } else {
                params.shell_min
            };
            let p = f + Vector3::from(dir) * radius;
            if let Some(k) = lattice.key_of(&p) {
                let i = lattice.linear(k);
                if grid.is_reachable(i) {
                    out.push(lattice.center(k));
                    break;
                }
            }
        }
    }
    out
}
