//! Sampling-based next-best-view planning over the submap union.
//!
//! Each planning round snapshots the submaps into a [`PlanningGrid`], samples candidate
//! positions near global frontiers, plans a path to each, raycasts an entropy gain image,
//! picks the yaw with a sliding window, and returns the candidate maximizing gain over
//! estimated flight time.

mod gain;
mod grid;
mod sampling;
mod search;

use std::time::{Duration, Instant};

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontiers::GlobalFrontierSet;
use crate::geometry::{wrap_angle, Aabb};
use crate::submaps::SubmapCollection;
use crate::world::SensorModel;

pub use gain::{gain_image, optimize_yaw, row_elevation, window_columns, GainImage};
pub use grid::{traversable, FusedGrid, Lattice, PlanningGrid};
pub use sampling::{frontier_components, proportional_quotas, sample_candidates, SamplingParams};
pub use search::{estimate_duration, path_length, plan_path, PlannedPath};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MavModel {
    /// Safety sphere radius, m.
    pub radius: f64,
    pub v_max: f64,
    pub w_max: f64,
}

impl MavModel {
    pub fn validate(&self) -> Result<()> {
        if [self.radius, self.v_max, self.w_max]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig("mav radius, v_max and w_max must be positive".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanState {
    pub r: Point3<f64>,
    pub psi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub n_c: usize,
    pub shell_min: f64,
    pub shell_max: f64,
    pub max_tries: usize,
    pub gain_az: usize,
    pub gain_el: usize,
    /// Yaw window for omnidirectional sensors, rad.
    pub window_360: f64,
    /// Added to the safety radius for all map clearance checks, m.
    pub margin: f64,
    pub unknown_traversable: bool,
    /// Candidates need strictly more gain than this.
    pub min_gain: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            n_c: 20,
            shell_min: 1.0,
            shell_max: 3.0,
            max_tries: 50,
            gain_az: 64,
            gain_el: 16,
            window_360: 90f64.to_radians(),
            margin: 0.2,
            unknown_traversable: false,
            min_gain: 0.0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_c > 0
            && self.shell_min > 0.0
            && self.shell_max >= self.shell_min
            && self.max_tries > 0
            && self.gain_az > 0
            && self.gain_el > 0
            && self.window_360 > 0.0
            && self.margin >= 0.0
            && self.min_gain >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("planner parameters out of range".into()))
        }
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            n_c: self.n_c,
            shell_min: self.shell_min,
            shell_max: self.shell_max,
            max_tries: self.max_tries,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateView {
    pub r: Point3<f64>,
    pub psi: f64,
    pub path: Vec<Point3<f64>>,
    pub t: f64,
    pub gain_image: GainImage,
    pub g: f64,
    pub u: f64,
}

/// One line of the planner trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub r: [f64; 3],
    pub reachable: bool,
    pub psi: f64,
    pub t: f64,
    pub g: f64,
    pub u: f64,
    pub chosen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionReason {
    NoFrontiers,
    StartBlocked,
    NoCandidates,
    NoGain,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Next(Box<CandidateView>),
    Complete(CompletionReason),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PlannerTiming {
    /// Grid snapshot, sampling and path search.
    pub planning: Duration,
    /// Gain images and yaw selection.
    pub utility: Duration,
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub outcome: Outcome,
    pub trace: Vec<CandidateRecord>,
    pub timing: PlannerTiming,
}

/// Index of the best `(g, t)` pair by `g / t`, ties going to smaller `t` and then lower
/// index. Entries with `g <= min_gain` are ignored.
pub fn best_utility(scores: &[(f64, f64)], min_gain: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &(g, t)) in scores.iter().enumerate() {
        if !(g > min_gain) || !(t > 0.0) {
            continue;
        }
        let u = g / t;
        let better = match best {
            None => true,
            Some((b, bu)) => u > bu || (u == bu && t < scores[b].1),
        };
        if better {
            best = Some((i, u));
        }
    }
    best.map(|(i, _)| i)
}

/// Snapshots the submaps and runs [`select_with_grid`].
#[allow(clippy::too_many_arguments)]
pub fn select_next_view(
    coll: &SubmapCollection,
    bounds: &Aabb,
    gf: &GlobalFrontierSet,
    current: &PlanState,
    mav: &MavModel,
    sensor: &SensorModel,
    params: &PlannerParams,
    seed: u64,
) -> Selection {
    let started = Instant::now();
    let grid = PlanningGrid::build(
        coll,
        bounds,
        mav.radius + params.margin,
        params.unknown_traversable,
        &current.r,
    );
    let build = started.elapsed();
    let mut s = select_with_grid(&grid, gf, current, mav, sensor, params, seed);
    s.timing.planning += build;
    s
}

/// The full selection pipeline against a prepared grid. Candidates are evaluated in
/// parallel and reduced in index order.
pub fn select_with_grid(
    grid: &PlanningGrid,
    gf: &GlobalFrontierSet,
    current: &PlanState,
    mav: &MavModel,
    sensor: &SensorModel,
    params: &PlannerParams,
    seed: u64,
) -> Selection {
    let mut timing = PlannerTiming::default();
    let done = |reason, timing| Selection {
        outcome: Outcome::Complete(reason),
        trace: Vec::new(),
        timing,
    };
    if gf.is_empty() {
        return done(CompletionReason::NoFrontiers, timing);
    }
    if grid.start().is_none() {
        return done(CompletionReason::StartBlocked, timing);
    }
    let t0 = Instant::now();
    let candidates = sample_candidates(grid, gf, &params.sampling(), seed);
    if candidates.is_empty() {
        timing.planning += t0.elapsed();
        return done(CompletionReason::NoCandidates, timing);
    }
    let paths: Vec<Option<PlannedPath>> = candidates.par_iter().map(|c| plan_path(grid, &current.r, c)).collect();
    timing.planning += t0.elapsed();
    let t1 = Instant::now();
    let views: Vec<Option<CandidateView>> = candidates
        .par_iter()
        .zip(paths)
        .map(|(c, path)| {
            let path = path?;
            let img = gain_image(grid, c, sensor, params.gain_az, params.gain_el);
            let (psi, g) = optimize_yaw(&img, sensor.alpha_h, params.window_360);
            let t = estimate_duration(&path.waypoints, wrap_angle(psi - current.psi), mav);
            Some(CandidateView {
                r: *c,
                psi,
                path: path.waypoints,
                t,
                gain_image: img,
                g,
                u: if t > 0.0 { g / t } else { 0.0 },
            })
        })
        .collect();
    timing.utility += t1.elapsed();
    let scores: Vec<(f64, f64)> = views.iter().map(|v| v.as_ref().map_or((0.0, 0.0), |v| (v.g, v.t))).collect();
    let chosen = best_utility(&scores, params.min_gain);
    let trace = candidates
        .iter()
        .zip(&views)
        .enumerate()
        .map(|(i, (c, v))| CandidateRecord {
            index: i,
            r: [c.x, c.y, c.z],
            reachable: v.is_some(),
            psi: v.as_ref().map_or(0.0, |v| v.psi),
            t: v.as_ref().map_or(0.0, |v| v.t),
            g: v.as_ref().map_or(0.0, |v| v.g),
            u: v.as_ref().map_or(0.0, |v| v.u),
            chosen: chosen == Some(i),
        })
        .collect();
    let outcome = match chosen {
        Some(i) => Outcome::Next(Box::new(views.into_iter().nth(i).flatten().expect("chosen view exists"))),
        None if views.iter().all(Option::is_none) => Outcome::Complete(CompletionReason::NoCandidates),
        None => Outcome::Complete(CompletionReason::NoGain),
    };
    Selection { outcome, trace, timing }
}
