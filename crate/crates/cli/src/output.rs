//! Text formats written by the CLI.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use qheom::observables::{concurrence, matrix_elements, purity, CycleClock, GpSeries};
use qheom::sweep::{CellStatus, SweepResult};
use qheom::Trajectory;

pub const TRAJECTORY_HEADER: &str =
    "tau,cycle,rho11,rho22,rho33,rho44,re_rho23,im_rho23,re_rho14,im_rho14,purity,concurrence";
pub const GP_HEADER: &str = "cycle,phi_wrapped,phi_cumulative";
pub const HEATMAP_HEADER: &str = "axisA,axisB,concurrence,purity,status";

/// Scientific notation with 12 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.11e}")
}

/// Fails with the time of the first sample whose concurrence cannot be
/// evaluated.
pub fn write_trajectory<W: Write>(
    w: &mut W,
    traj: &Trajectory,
    clock: &CycleClock,
) -> io::Result<Result<(), (f64, String)>> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in &traj.samples {
        let c = match concurrence(&s.rho) {
            Ok(c) => c,
            Err(e) => return Ok(Err((s.tau, e.to_string()))),
        };
        let m = matrix_elements(&s.rho);
        let fields = [
            s.tau,
            clock.cycles(s.tau),
            m.rho11,
            m.rho22,
            m.rho33,
            m.rho44,
            m.rho23.re,
            m.rho23.im,
            m.rho14.re,
            m.rho14.im,
            purity(&s.rho),
            c,
        ];
        let row: Vec<String> = fields.iter().map(|&x| real(x)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(Ok(()))
}

pub fn write_gp<W: Write>(w: &mut W, series: &GpSeries) -> io::Result<()> {
    writeln!(w, "{GP_HEADER}")?;
    for p in &series.points {
        writeln!(w, "{},{},{}", p.cycle, real(p.per_cycle), real(p.cumulative))?;
    }
    Ok(())
}

fn status_text(status: &CellStatus) -> String {
    match status {
        CellStatus::Ok => "ok".into(),
        CellStatus::Failed(reason) => {
            let clean: String = reason
                .chars()
                .map(|c| if c == ',' || c == '\n' || c == '\r' { ';' } else { c })
                .collect();
            format!("failed: {clean}")
        }
    }
}

/// Heatmap for one requested cycle: `#key=value` metadata, then one row per
/// grid point, `axisA` major.
pub fn write_heatmap<W: Write>(
    w: &mut W,
    result: &SweepResult,
    cycle: u32,
    metadata: &[(String, String)],
) -> io::Result<()> {
    let k = result
        .cycle_index(cycle)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, format!("cycle {cycle} was not requested")))?;
    let p = &result.problem;
    writeln!(w, "#cycle={cycle}")?;
    writeln!(w, "#axisA={}", p.axis_a.parameter)?;
    writeln!(w, "#axisB={}", p.axis_b.parameter)?;
    writeln!(w, "#tau_s={}", p.clock.tau_s)?;
    writeln!(w, "#failed_cells={}", result.failed())?;
    for (key, value) in metadata {
        writeln!(w, "#{key}={value}")?;
    }
    writeln!(w, "{HEATMAP_HEADER}")?;
    for cell in &result.cells {
        let (c, pur) = match cell.snapshots.get(k) {
            Some(s) => (real(s.concurrence), real(s.purity)),
            None => ("nan".into(), "nan".into()),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            real(cell.a),
            real(cell.b),
            c,
            pur,
            status_text(&cell.status)
        )?;
    }
    Ok(())
}

/// `maps/fig3.csv` → `maps/fig3_N5.csv`.
pub fn cycle_path(out: &Path, cycle: u32) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "heatmap".into());
    let name = match out.extension() {
        Some(ext) => format!("{stem}_N{cycle}.{}", ext.to_string_lossy()),
        None => format!("{stem}_N{cycle}"),
    };
    out.with_file_name(name)
}
