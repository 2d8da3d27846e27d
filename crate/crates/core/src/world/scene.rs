//! Line-oriented scene files.
//!
//! ```text
//! # comment
//! bounds x0 y0 z0 x1 y1 z1
//! box    x0 y0 z0 x1 y1 z1
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Aabb;

use super::Environment;

pub fn load_scene(path: &Path, resolution: f64) -> Result<Environment> {
    let text = std::fs::read_to_string(path)?;
    parse_scene(&text, path, resolution)
}

/// Parses scene text; `source` is only used in error messages.
pub fn parse_scene(text: &str, source: &Path, resolution: f64) -> Result<Environment> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut bounds: Option<Aabb> = None;
    let mut solids = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let kind = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| err(line_no, format!("invalid number `{f}`"))))
            .collect::<Result<_>>()?;
        if values.len() != 6 {
            return Err(err(line_no, format!("`{kind}` expects 6 numbers, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "non-finite coordinate".into()));
        }
        let b = Aabb::from_corners([values[0], values[1], values[2]], [values[3], values[4], values[5]]);
        match kind {
            "bounds" => {
                if bounds.replace(b).is_some() {
                    return Err(err(line_no, "duplicate `bounds` record".into()));
                }
            }
            "box" => solids.push((line_no, b)),
            other => return Err(err(line_no, format!("unknown record `{other}`"))),
        }
    }
    let bounds = bounds.ok_or_else(|| err(0, "missing `bounds` record".into()))?;
    for (line_no, s) in &solids {
        if !bounds.contains_box(s) {
            return Err(Error::InvalidScene(format!(
                "{}:{line_no}: box lies outside the bounds",
                source.display()
            )));
        }
    }
    Environment::new(bounds, solids.into_iter().map(|(_, b)| b).collect(), resolution)
}

/// Serializes an environment back into scene text.
pub fn scene_text(env: &Environment) -> String {
    let fmt = |b: &Aabb| format!("{} {} {} {} {} {}", b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z);
    let mut s = format!("bounds {}\n", fmt(env.bounds()));
    for b in env.solids() {
        s.push_str(&format!("box {}\n", fmt(b)));
    }
    s
}

/// Warehouse-like 30 x 15 x 9 m scene: enclosing shell, three rack rows, pillars and crates.
///
/// An analog of a depot-style test environment, not a replica of any published geometry.
/// All coordinates are multiples of 0.1 m so faces align with a 0.1 m voxel grid.
pub fn depot_analog(resolution: f64) -> Environment {
    const BOXES: &[[f64; 6]] = &[
        // floor, ceiling, walls
        [0.0, 0.0, 0.0, 30.0, 15.0, 0.2],
        [0.0, 0.0, 8.8, 30.0, 15.0, 9.0],
        [0.0, 0.0, 0.2, 0.2, 15.0, 8.8],
        [29.8, 0.0, 0.2, 30.0, 15.0, 8.8],
        [0.2, 0.0, 0.2, 29.8, 0.2, 8.8],
        [0.2, 14.8, 0.2, 29.8, 15.0, 8.8],
        // rack row A
        [4.0, 3.4, 0.2, 10.0, 4.4, 5.2],
        [12.0, 3.4, 0.2, 18.0, 4.4, 5.2],
        [20.0, 3.4, 0.2, 26.0, 4.4, 5.2],
        // rack row B (lower)
        [4.0, 7.0, 0.2, 12.0, 8.0, 3.6],
        [14.0, 7.0, 0.2, 22.0, 8.0, 3.6],
        [24.0, 7.0, 0.2, 26.0, 8.0, 2.2],
        // rack row C
        [4.0, 10.6, 0.2, 10.0, 11.6, 5.2],
        [12.0, 10.6, 0.2, 18.0, 11.6, 5.2],
        [20.0, 10.6, 0.2, 26.0, 11.6, 5.2],
        // pillars
        [2.0, 5.5, 0.2, 2.4, 5.9, 8.8],
        [27.6, 9.1, 0.2, 28.0, 9.5, 8.8],
        // crates
        [1.0, 12.5, 0.2, 2.2, 13.7, 1.4],
        [27.0, 1.0, 0.2, 28.2, 2.2, 1.2],
        [14.0, 1.0, 0.2, 15.2, 2.0, 1.0],
        [22.0, 12.8, 0.2, 23.0, 13.8, 2.0],
    ];
    let bounds = Aabb::from_corners([0.0; 3], [30.0, 15.0, 9.0]);
    let solids = BOXES
        .iter()
        .map(|b| Aabb::from_corners([b[0], b[1], b[2]], [b[3], b[4], b[5]]))
        .collect();
    Environment::new(bounds, solids, resolution).expect("depot analog is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_records_and_comments() {
        let text = "# warehouse\nbounds 0 0 0 30 15 9\nbox 1 1 0 2 2 1  # crate\n\n";
        let env = parse_scene(text, Path::new("t.scene"), 0.1).unwrap();
        assert_eq!(env.solids().len(), 1);
        let e = env.bounds().extent();
        assert_eq!((e.x, e.y, e.z), (30.0, 15.0, 9.0));
    }

    #[test]
    fn empty_scene_is_all_free() {
        let env = parse_scene("bounds 0 0 0 1 1 1", Path::new("t"), 0.1).unwrap();
        assert_eq!(env.occupied_count(), 0);
        assert_eq!(env.voxel_count(), 1000);
    }

    #[test]
    fn order_independent() {
        let a = parse_scene("bounds 0 0 0 4 4 4\nbox 0 0 0 1 1 1\nbox 2 2 2 3 3 4", Path::new("a"), 0.1).unwrap();
        let b = parse_scene("box 2 2 2 3 3 4\nbox 0 0 0 1 1 1\nbounds 0 0 0 4 4 4", Path::new("b"), 0.1).unwrap();
        let ka: Vec<_> = (0..a.voxel_count()).map(|i| a.solid_at(i)).collect();
        let kb: Vec<_> = (0..b.voxel_count()).map(|i| b.solid_at(i)).collect();
        assert_eq!(ka, kb);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_scene("bounds 0 0 0 1 1 1\nbox 0 0 0 1 1", Path::new("s"), 0.1).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_scene("bounds 0 0 0 1 1 1\nsphere 0 0 0 1 1 1", Path::new("s"), 0.1).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_scene("bounds 0 0 0 1 1 1\nbox 0 0 0 1 1 x", Path::new("s"), 0.1).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_scene("bounds 0 0 0 1 1 1\nbounds 0 0 0 1 1 1", Path::new("s"), 0.1).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_scene("bounds 0 0 0 1 1 1\nbox 0 0 0 2 1 1", Path::new("s"), 0.1).unwrap_err();
        assert!(matches!(e, Error::InvalidScene(_)));
    }

    #[test]
    fn depot_dimensions_and_roundtrip() {
        let env = depot_analog(0.1);
        assert_eq!(env.dims(), [300, 150, 90]);
        let text = scene_text(&env);
        let back = parse_scene(&text, Path::new("depot"), 0.1).unwrap();
        assert_eq!(back.solids(), env.solids());
    }
}
