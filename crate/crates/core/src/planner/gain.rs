//! Entropy gain images and yaw selection.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Vector3};

use super::grid::PlanningGrid;
use crate::occupancy::VoxelClass;
use crate::world::SensorModel;

/// Panorama of per-ray gain: `n_el` rows from the lowest elevation up, `n_az` columns at
/// azimuth `2πj / n_az`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainImage {
    pub n_el: usize,
    pub n_az: usize,
    pub data: Vec<f64>,
}

impl GainImage {
    pub fn zeros(n_el: usize, n_az: usize) -> Self {
        Self {
            n_el,
            n_az,
            data: vec![0.0; n_el * n_az],
        }
    }

    #[inline]
    pub fn get(&self, el: usize, az: usize) -> f64 {
        self.data[el * self.n_az + az]
    }

    #[inline]
    pub fn set(&mut self, el: usize, az: usize, v: f64) {
        self.data[el * self.n_az + az] = v;
    }

    /// Column sums, accumulated from the lowest row up.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n_az)
            .map(|j| (0..self.n_el).fold(0.0, |acc, i| acc + self.get(i, j)))
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.column_sums().iter().fold(0.0, |acc, c| acc + c)
    }

    /// Azimuth of column `j` in `[-π, π)`.
    pub fn column_azimuth(&self, j: usize) -> f64 {
        let a = TAU * j as f64 / self.n_az as f64;
        if a >= PI {
            a - TAU
        } else {
            a
        }
    }
}

/// Elevation of row `i`: cell centres spanning `alpha_v` around the horizon.
pub fn row_elevation(i: usize, n_el: usize, alpha_v: f64) -> f64 {
    -alpha_v / 2.0 + (i as f64 + 0.5) * alpha_v / n_el as f64
}

/// Entropy raycast from `r`. Each ray counts unknown cells (one bit each) whose centres lie
/// between `d_min` and `d_max` and inside the planning bounds, stops at the first occupied
/// cell at any range, and is weighted by the cosine of its elevation.
pub fn gain_image(grid: &PlanningGrid, r: &Point3<f64>, sensor: &SensorModel, n_az: usize, n_el: usize) -> GainImage {
    let mut img = GainImage::zeros(n_el, n_az);
    let lattice = grid.lattice();
    let fused = grid.fused();
    let bounds = grid.bounds();
    for i in 0..n_el {
        let el = row_elevation(i, n_el, sensor.alpha_v);
        for j in 0..n_az {
            let az = TAU * j as f64 / n_az as f64;
            let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let end = r + dir * sensor.d_max;
            let mut count = 0u32;
            lattice.walk(r, &end, |k, idx| match fused.confident(idx) {
                VoxelClass::Occupied => false,
                VoxelClass::Free => true,
                VoxelClass::Unknown => {
                    let c = lattice.center(k);
                    let d = (c - r).norm();
                    if d >= sensor.d_min && d <= sensor.d_max && bounds.contains(&c) {
                        count += 1;
                    }
                    true
                }
            });
            img.set(i, j, count as f64 * el.cos());
        }
    }
    img
}

/// Window width in columns for a horizontal field of view, with omnidirectional sensors
/// using `window_360` instead.
pub fn window_columns(n_az: usize, alpha_h: f64, window_360: f64) -> usize {
    let fov = if alpha_h >= TAU - 1e-9 { window_360 } else { alpha_h };
    ((n_az as f64 * fov.min(TAU) / TAU).round() as usize).clamp(1, n_az)
}

/// Best yaw and gain for an image. The gain is the best cyclic window sum, or the whole
/// image for omnidirectional sensors; the yaw is the azimuth of the best window's centre
/// column.
///
/// Windows tied at the maximum form cyclic runs of consecutive start columns; each run
/// proposes its lower-middle window, and proposals are ordered by smallest `|psi|`, then
/// smallest `psi`. When every window ties, the proposal is the column closest to zero.
pub fn optimize_yaw(img: &GainImage, alpha_h: f64, window_360: f64) -> (f64, f64) {
    let n = img.n_az;
    let cols = img.column_sums();
    let w = window_columns(n, alpha_h, window_360);
    let sums: Vec<f64> = (0..n).map(|s| (0..w).fold(0.0, |acc, o| acc + cols[(s + o) % n])).collect();
    let best = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let is_max: Vec<bool> = sums.iter().map(|&v| v == best).collect();
    let center = |s: usize| img.column_azimuth((s + w / 2) % n);
    let mut proposals = Vec::new();
    if is_max.iter().all(|&m| m) {
        proposals.extend((0..n).map(center));
    } else {
        // Runs start after a non-maximal window.
        for s in 0..n {
            if is_max[s] && !is_max[(s + n - 1) % n] {
                let len = (0..n).take_while(|&o| is_max[(s + o) % n]).count();
                proposals.push(center((s + (len - 1) / 2) % n));
            }
        }
    }
    let psi = proposals
        .into_iter()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)))
        .expect("at least one window");
    let g = if alpha_h >= TAU - 1e-9 { img.total() } else { best };
    debug_assert!((-PI..PI).contains(&psi));
    (psi, g)
}
