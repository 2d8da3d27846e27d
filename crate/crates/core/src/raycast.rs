//! Exact grid traversal (Amanatides & Woo) in cell units.

/// Visits every cell intersected by the segment `start -> end`, both given in cell units
/// (cell `c` spans `[c, c + 1)` on each axis). The first visited cell is `start_cell` and
/// the last is `end_cell`; callers pass the floors of the endpoints, possibly clamped.
///
/// `visit` returns `false` to stop early. Each axis is stepped exactly
/// `|end_cell - start_cell|` times, so the walk always terminates on `end_cell`.
pub fn walk_cells(
    start: [f64; 3],
    end: [f64; 3],
    start_cell: [i32; 3],
    end_cell: [i32; 3],
    mut visit: impl FnMut([i32; 3]) -> bool,
) {
    let mut cell = start_cell;
    let mut remaining = [0u32; 3];
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for axis in 0..3 {
        let diff = end_cell[axis] - start_cell[axis];
        remaining[axis] = diff.unsigned_abs();
        step[axis] = diff.signum();
        let d = end[axis] - start[axis];
        if step[axis] != 0 && d != 0.0 {
            let boundary = if step[axis] > 0 {
                (cell[axis] + 1) as f64
            } else {
                cell[axis] as f64
            };
            t_max[axis] = ((boundary - start[axis]) / d).max(0.0);
            t_delta[axis] = (1.0 / d).abs();
        }
    }
    if !visit(cell) {
        return;
    }
    loop {
        let mut axis = usize::MAX;
        let mut best = f64::INFINITY;
        for a in 0..3 {
            if remaining[a] > 0 && (axis == usize::MAX || t_max[a] < best) {
                axis = a;
                best = t_max[a];
            }
        }
        if axis == usize::MAX {
            return;
        }
        cell[axis] += step[axis];
        remaining[axis] -= 1;
        t_max[axis] += t_delta[axis];
        if !visit(cell) {
            return;
        }
    }
}

/// Clips the segment `a -> b` to the box `[lo, hi]`, returning the parameter interval.
pub fn clip_segment(a: [f64; 3], b: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for i in 0..3 {
        let d = b[i] - a[i];
        if d == 0.0 {
            if a[i] < lo[i] || a[i] > hi[i] {
                return None;
            }
            continue;
        }
        let mut ta = (lo[i] - a[i]) / d;
        let mut tb = (hi[i] - a[i]) / d;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

pub(crate) fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

pub(crate) fn floor_cell(p: [f64; 3]) -> [i32; 3] {
    [p[0].floor() as i32, p[1].floor() as i32, p[2].floor() as i32]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustc_hash::FxHashSet;

    fn walk(a: [f64; 3], b: [f64; 3]) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        walk_cells(a, b, floor_cell(a), floor_cell(b), |c| {
            out.push(c);
            true
        });
        out
    }

    /// Reference traversal: dense sampling along the segment.
    fn sampled(a: [f64; 3], b: [f64; 3]) -> FxHashSet<[i32; 3]> {
        let n = 200_000;
        (0..=n).map(|i| floor_cell(lerp(a, b, i as f64 / n as f64))).collect()
    }

    #[test]
    fn axis_aligned_walk() {
        let cells = walk([0.5, 0.5, 0.5], [3.5, 0.5, 0.5]);
        assert_eq!(cells, vec![[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        let back = walk([3.5, 0.5, 0.5], [0.5, 0.5, 0.5]);
        assert_eq!(back.len(), 4);
        assert_eq!(back[3], [0, 0, 0]);
    }

    #[test]
    fn walk_matches_dense_sampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let b = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let cells = walk(a, b);
            let unique: FxHashSet<_> = cells.iter().copied().collect();
            assert_eq!(unique.len(), cells.len(), "walk revisits a cell");
            // Consecutive cells are face neighbours.
            for w in cells.windows(2) {
                let d: i32 = (0..3).map(|i| (w[0][i] - w[1][i]).abs()).sum();
                assert_eq!(d, 1);
            }
            let reference = sampled(a, b);
            // Dense sampling can only miss cells clipped at a corner.
            assert!(reference.is_subset(&unique));
            assert!(unique.len() <= reference.len() + 2);
        }
    }

    #[test]
    fn clip_inside_and_outside() {
        let lo = [0.0; 3];
        let hi = [4.0; 3];
        assert_eq!(clip_segment([1.0; 3], [2.0; 3], lo, hi), Some((0.0, 1.0)));
        let (t0, t1) = clip_segment([-2.0, 1.0, 1.0], [6.0, 1.0, 1.0], lo, hi).unwrap();
        assert!((t0 - 0.25).abs() < 1e-12 && (t1 - 0.75).abs() < 1e-12);
        assert_eq!(clip_segment([-2.0, 5.0, 1.0], [6.0, 5.0, 1.0], lo, hi), None);
    }
}
