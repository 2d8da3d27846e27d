//! Mission artifacts on disk.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

use super::run::MissionOutput;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes every artifact of `out` into `dir`, creating it if needed. Everything except
/// `timing.json` is a pure function of the mission inputs.
pub fn write_outputs(dir: &Path, out: &MissionOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let r = &out.report;

    let mut w = create(dir, "volume.csv")?;
    writeln!(w, "t,observed,fraction")?;
    for v in &r.volume_series {
        writeln!(w, "{:.6},{},{:.6}", v.t, v.observed, v.fraction)?;
    }
    w.flush()?;

    let mut w = create(dir, "trajectory.csv")?;
    writeln!(w, "t,x,y,z,yaw,est_x,est_y,est_z")?;
    for s in &out.trajectory {
        let (p, e) = (s.position, s.estimate);
        writeln!(
            w,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.t, p.x, p.y, p.z, s.yaw, e.x, e.y, e.z
        )?;
    }
    w.flush()?;

    let mut w = create(dir, "clearance.csv")?;
    writeln!(w, "t,clearance")?;
    for c in &r.min_clearance_series {
        writeln!(w, "{:.6},{:.6}", c.t, c.distance)?;
    }
    w.flush()?;

    let mut w = create(dir, "metrics.json")?;
    serde_json::to_writer_pretty(&mut w, r)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = create(dir, "timing.json")?;
    serde_json::to_writer_pretty(&mut w, &r.timing)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = create(dir, "frontiers_final.xyz")?;
    out.frontiers.write_xyz(&mut w)?;
    w.flush()?;

    let mut w = create(dir, "surface_final.xyz")?;
    for p in &out.surface {
        writeln!(w, "{:.4} {:.4} {:.4}", p.x, p.y, p.z)?;
    }
    w.flush()?;

    let mut w = create(dir, "mission.log")?;
    for line in &out.log {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
