//! Deterministic run artifacts.
//!
//! Every run writes a self-describing directory: one CSV per snapshot, a
//! step log, run metadata sufficient for exact re-execution, the check
//! reports, and ready-to-run gnuplot scripts. Identical inputs produce
//! byte-identical files: floats print with 17 significant digits, JSON
//! fields keep a fixed order, and rows follow input order.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::PrincipleReport;
use crate::error::Result;
use crate::solver::Trajectory;

/// Metadata echoed into every output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub tool: &'static str,
    pub version: &'static str,
    /// Which subcommand produced the directory.
    pub command: String,
    pub name: Option<String>,
    pub integrator: Option<String>,
    pub seed: u64,
    pub strict_hypotheses: bool,
    /// Sweep overrides applied on top of the config, as `[key, value]`.
    pub overrides: Vec<[String; 2]>,
    /// Verbatim config file text.
    pub config: String,
    pub caveats: Vec<String>,
    pub summary: Option<TrajectorySummary>,
}

impl RunMeta {
    pub fn new(command: &str) -> Self {
        Self {
            tool: "fluxlim",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            name: None,
            integrator: None,
            seed: 0,
            strict_hypotheses: false,
            overrides: Vec::new(),
            config: String::new(),
            caveats: Vec::new(),
            summary: None,
        }
    }
}

/// Headline numbers of a completed trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub n_steps: usize,
    pub final_time: f64,
    pub final_mass: f64,
    pub flooring_injected: f64,
    pub max_rel_mass_drift: f64,
    pub total_newton_iters: usize,
}

impl TrajectorySummary {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let (final_time, final_state) = traj.last();
        Self {
            n_steps: traj.steps.len(),
            final_time: *final_time,
            final_mass: final_state.mass(),
            flooring_injected: traj.flooring_injected,
            max_rel_mass_drift: traj.max_rel_mass_drift,
            total_newton_iters: traj.total_newton_iters,
        }
    }
}

/// One row of a sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    /// Sweep point label, e.g. `c=10`.
    pub point: String,
    /// Override values in the order of the swept keys.
    pub values: Vec<String>,
    pub check: String,
    pub margin: Option<f64>,
    pub tolerance: Option<f64>,
    pub verdict: String,
    /// Free-form annotation (error messages for failed points).
    pub note: String,
}

/// Creates `dir` and any missing parents.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// File name for the snapshot at time `t`.
pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_{t:.6}.csv")
}

/// Writes one CSV per snapshot plus `steps.csv`; returns the snapshot file
/// names in time order.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(traj.snapshots.len());
    for (t, u) in &traj.snapshots {
        let name = snapshot_file_name(*t);
        u.write_csv_path(&dir.join(&name))?;
        names.push(name);
    }
    let file = std::fs::File::create(dir.join("steps.csv"))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "t,dt,mass,min,max,free_energy,newton_iters")?;
    for s in &traj.steps {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            s.t, s.dt, s.mass, s.min, s.max, s.free_energy, s.newton_iters
        )?;
    }
    Ok(names)
}

/// Writes `meta.json`.
pub fn write_meta(dir: &Path, meta: &RunMeta) -> Result<()> {
    write_json(&dir.join("meta.json"), meta)
}

/// Writes `report.json` with one entry per check, in execution order.
pub fn write_reports(dir: &Path, reports: &[PrincipleReport]) -> Result<()> {
    write_json(&dir.join("report.json"), &reports)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .expect("artifact types serialize infallibly");
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Writes `plot.gp` (density snapshots) and, when a step log exists,
/// `plot_energy.gp` (free energy and mass over time).
pub fn write_plot_scripts(
    dir: &Path,
    snapshot_files: &[String],
    have_steps: bool,
) -> Result<()> {
    if !snapshot_files.is_empty() {
        let mut s = String::new();
        s.push_str("# Density snapshots. Run: gnuplot -persist plot.gp\n");
        s.push_str("set datafile separator \",\"\n");
        s.push_str("set xlabel \"x\"\nset ylabel \"u\"\nset key top right\n");
        s.push_str("plot \\\n");
        for (i, name) in snapshot_files.iter().enumerate() {
            let t = name
                .trim_start_matches("snapshot_")
                .trim_end_matches(".csv");
            let sep = if i + 1 == snapshot_files.len() { "" } else { ", \\" };
            s.push_str(&format!(
                "  \"{name}\" skip 1 using 1:2 with lines title \"t = {t}\"{sep}\n"
            ));
        }
        std::fs::write(dir.join("plot.gp"), s)?;
    }
    if have_steps {
        let mut s = String::new();
        s.push_str("# Step log. Run: gnuplot -persist plot_energy.gp\n");
        s.push_str("set datafile separator \",\"\n");
        s.push_str("set xlabel \"t\"\n");
        s.push_str(
            "plot \"steps.csv\" skip 1 using 1:6 with lines title \"free energy\", \\\n",
        );
        s.push_str(
            "     \"steps.csv\" skip 1 using 1:3 with lines title \"mass\"\n",
        );
        std::fs::write(dir.join("plot_energy.gp"), s)?;
    }
    Ok(())
}

/// Writes `sweep_summary.csv`: one row per (sweep point, check), ordered by
/// sweep index then check order.
pub fn write_sweep_summary(
    dir: &Path,
    keys: &[String],
    rows: &[SweepRow],
) -> Result<()> {
    let file = std::fs::File::create(dir.join("sweep_summary.csv"))?;
    let mut w = std::io::BufWriter::new(file);
    write!(w, "point")?;
    for key in keys {
        write!(w, ",{key}")?;
    }
    writeln!(w, ",check,margin,tolerance,verdict,note")?;
    for row in rows {
        write!(w, "{}", row.point)?;
        for value in &row.values {
            write!(w, ",{value}")?;
        }
        let margin = row
            .margin
            .map(|m| format!("{m:.16e}"))
            .unwrap_or_default();
        let tolerance = row
            .tolerance
            .map(|t| format!("{t:.16e}"))
            .unwrap_or_default();
        // Commas in notes would shift columns; soften them.
        let note = row.note.replace(',', ";");
        writeln!(
            w,
            ",{},{},{},{},{}",
            row.check, margin, tolerance, row.verdict, note
        )?;
    }
    Ok(())
}
