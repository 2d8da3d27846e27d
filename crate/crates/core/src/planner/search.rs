//! Lattice path search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;
use rustc_hash::FxHashMap;

use super::grid::{PlanningGrid, NEIGHBORS_26};
use super::MavModel;
use crate::geometry::wrap_angle;

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPath {
    /// Shortcut waypoints; the first is the query start and the last the query goal.
    pub waypoints: Vec<Point3<f64>>,
    /// Length of the waypoint polyline.
    pub length: f64,
    /// Length of the lattice path before shortcutting, excluding the legs from the query
    /// points to their cell centres.
    pub lattice_length: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    node: u32,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest 26-connected path length between two cells on an obstacle-free lattice, in
/// cells: diagonal steps first, then face diagonals, then straight steps.
pub fn lattice_distance(a: [i32; 3], b: [i32; 3]) -> f64 {
    let mut d = [0, 1, 2].map(|i| (a[i] - b[i]).unsigned_abs());
    d.sort_unstable();
    let [lo, mid, hi] = d.map(f64::from);
    3f64.sqrt() * lo + 2f64.sqrt() * (mid - lo) + (hi - mid)
}

/// A* over the 26-connected traversable lattice with the free-lattice distance as
/// heuristic, followed by greedy line-of-sight shortcutting. `None` when either end is not
/// traversable or no path exists.
pub fn plan_path(grid: &PlanningGrid, from: &Point3<f64>, to: &Point3<f64>) -> Option<PlannedPath> {
    let lattice = grid.lattice();
    let sk = lattice.key_of(from)?;
    let gk = lattice.key_of(to)?;
    let (s, g) = (lattice.linear(sk), lattice.linear(gk));
    if !grid.is_traversable(s) || !grid.is_traversable(g) {
        return None;
    }
    let res = lattice.resolution();
    let h = |k: crate::VoxelKey| res * lattice_distance(k.0, gk.0);
    let step_cost: Vec<f64> = NEIGHBORS_26
        .iter()
        .map(|o| res * ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt())
        .collect();

    // node -> (cost so far, parent, closed)
    let mut nodes: FxHashMap<u32, (f64, u32, bool)> = FxHashMap::default();
    let mut open = BinaryHeap::new();
    nodes.insert(s as u32, (0.0, u32::MAX, false));
    open.push(Open {
        f: h(sk),
        node: s as u32,
    });
    let mut found = false;
    while let Some(Open { node, .. }) = open.pop() {
        let entry = nodes.get_mut(&node).expect("pushed nodes are recorded");
        if entry.2 {
            continue;
        }
        entry.2 = true;
        let cost = entry.0;
        if node as usize == g {
            found = true;
            break;
        }
        let k = lattice.key_from_index(node as usize);
        for (o, c) in NEIGHBORS_26.iter().zip(&step_cost) {
            let nk = k.offset(*o);
            let Some(j) = lattice.index(nk) else { continue };
            if !grid.is_traversable(j) {
                continue;
            }
            let nc = cost + c;
            let e = nodes.entry(j as u32).or_insert((f64::INFINITY, u32::MAX, false));
            if !e.2 && nc < e.0 {
                *e = (nc, node, false);
                open.push(Open {
                    f: nc + h(nk),
                    node: j as u32,
                });
            }
        }
    }
    if !found {
        return None;
    }
    let lattice_length = nodes[&(g as u32)].0;
    let mut cells = vec![g as u32];
    while let Some(&(_, parent, _)) = nodes.get(cells.last().unwrap()) {
        if parent == u32::MAX {
            break;
        }
        cells.push(parent);
    }
    cells.reverse();
    let mut points = Vec::with_capacity(cells.len() + 2);
    points.push(*from);
    points.extend(cells.iter().map(|&c| lattice.center(lattice.key_from_index(c as usize))));
    points.push(*to);
    points.dedup();
    let waypoints = shortcut(grid, &points);
    Some(PlannedPath {
        length: path_length(&waypoints),
        waypoints,
        lattice_length,
    })
}

/// Greedy shortcutting: from each kept waypoint jump to the farthest later one that is in
/// clear line of sight. Consecutive points are always kept connected.
fn shortcut(grid: &PlanningGrid, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut next = i + 1;
        for j in (i + 2..points.len()).rev() {
            if grid.segment_clear(&points[i], &points[j]) {
                next = j;
                break;
            }
        }
        out.push(points[next]);
        i = next;
    }
    out
}

pub fn path_length(path: &[Point3<f64>]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Flight time at `v_max` plus yaw time at `w_max`.
pub fn estimate_duration(path: &[Point3<f64>], delta_psi: f64, mav: &MavModel) -> f64 {
    path_length(path) / mav.v_max + wrap_angle(delta_psi).abs() / mav.w_max
}
