//! Output-file writers: the run manifest, JSON summaries, and
//! whitespace-delimited `.dat` plot companions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use rice_dg::{ModelConfig, ModelParams, State, Trajectory};

/// Everything needed to re-run a command, written before any solver starts.
/// The manifest is the only output that carries a timestamp.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub created_utc: String,
    pub out_dir: String,
    pub seed: u64,
    /// Path of the exogenous CSV, or "generated" when built from the config.
    pub exo_source: String,
    pub solver: SolverSettings,
    /// Command-specific arguments, echoed verbatim.
    pub args: serde_json::Value,
    /// The fully resolved configuration the run used.
    pub config: ModelConfig,
}

#[derive(Serialize)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join("manifest.json"), text + "\n")
            .with_context(|| format!("writing manifest in {}", dir.display()))?;
        Ok(())
    }
}

pub fn utc_now() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_else(|_| "unknown".into())
}

/// Directory stamp for the default `results/<command>-<stamp>` layout.
pub fn dir_stamp() -> String {
    let now = OffsetDateTime::now_utc();
    format!(
        "{:04}{:02}{:02}-{:02}{:02}{:02}",
        now.year(),
        now.month() as u8,
        now.day(),
        now.hour(),
        now.minute(),
        now.second()
    )
}

pub fn write_summary<T: Serialize>(dir: &Path, summary: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(dir.join("summary.json"), text + "\n").context("writing summary.json")?;
    Ok(())
}

pub fn write_trajectory_csv(
    dir: &Path,
    params: &ModelParams,
    traj: &Trajectory,
    scc: Option<&[Vec<f64>]>,
) -> Result<PathBuf> {
    let path = dir.join("trajectory.csv");
    let mut buf = Vec::new();
    traj.write_csv(&mut buf, params, scc)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Final-state block used in every summary.
#[derive(Serialize)]
pub struct FinalState {
    pub t_at: f64,
    pub t_lo: f64,
    pub m_at: f64,
    pub m_up: f64,
    pub m_lo: f64,
    pub k: Vec<f64>,
}

impl FinalState {
    pub fn of(state: &State) -> FinalState {
        FinalState {
            t_at: state.t_at,
            t_lo: state.t_lo,
            m_at: state.m_at,
            m_up: state.m_up,
            m_lo: state.m_lo,
            k: state.k.clone(),
        }
    }
}

/// One gnuplot-ready file: `#`-prefixed header lines, then whitespace-
/// delimited rows. Every cell goes through the shortest round-trip decimal
/// form so regenerated files compare byte-for-byte.
pub fn write_dat(dir: &Path, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::new();
    for line in header {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                text.push(' ');
            }
            text.push_str(&format!("{v}"));
            first = false;
        }
        text.push('\n');
    }
    fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))?;
    Ok(())
}

/// Per-region series against the calendar year, one file per quantity.
pub fn write_region_paths_dat(
    dir: &Path,
    name: &str,
    title: &str,
    unit: &str,
    params: &ModelParams,
    traj: &Trajectory,
    series: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let names: Vec<&str> = params.regions.iter().map(|r| r.name.as_str()).collect();
    let header = vec![
        format!("{title} ({unit})"),
        format!("year {}", names.join(" ")),
    ];
    let mut rows = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let t = traj.t_offset + k;
        let year = params.horizon.year0 + params.horizon.delta_years as i32 * t as i32;
        let mut row = Vec::with_capacity(1 + names.len());
        row.push(year as f64);
        for i in 0..params.n_regions() {
            row.push(series(k, i));
        }
        rows.push(row);
    }
    write_dat(dir, name, &header, &rows)
}

/// Atmospheric temperature path, including the post-horizon state.
pub fn write_t_at_dat(dir: &Path, name: &str, params: &ModelParams, traj: &Trajectory) -> Result<()> {
    let header = vec![
        "atmospheric temperature deviation (degC)".to_string(),
        "year T_AT".to_string(),
    ];
    let mut rows = Vec::with_capacity(traj.states.len());
    for (k, x) in traj.states.iter().enumerate() {
        let t = traj.t_offset + k;
        let year = params.horizon.year0 + params.horizon.delta_years as i32 * t as i32;
        rows.push(vec![year as f64, x.t_at]);
    }
    write_dat(dir, name, &header, &rows)
}

/// Two trajectories' temperature paths side by side.
pub fn write_t_at_compare_dat(
    dir: &Path,
    name: &str,
    labels: (&str, &str),
    params: &ModelParams,
    a: &Trajectory,
    b: &Trajectory,
) -> Result<()> {
    let header = vec![
        format!("atmospheric temperature deviation (degC): {} vs {}", labels.0, labels.1),
        format!("year T_AT_{} T_AT_{}", labels.0, labels.1),
    ];
    let steps = a.states.len().min(b.states.len());
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let year = params.horizon.year0 + params.horizon.delta_years as i32 * k as i32;
        rows.push(vec![year as f64, a.states[k].t_at, b.states[k].t_at]);
    }
    write_dat(dir, name, &header, &rows)
}

/// Per-region emission-reduction rates of two runs side by side.
pub fn write_mu_compare_dat(
    dir: &Path,
    name: &str,
    labels: (&str, &str),
    params: &ModelParams,
    a: &Trajectory,
    b: &Trajectory,
) -> Result<()> {
    let names: Vec<&str> = params.regions.iter().map(|r| r.name.as_str()).collect();
    let mut cols = vec!["year".to_string()];
    for n in &names {
        cols.push(format!("{}_{}", labels.0, n));
    }
    for n in &names {
        cols.push(format!("{}_{}", labels.1, n));
    }
    let header = vec![
        format!("emission-reduction rate: {} vs {}", labels.0, labels.1),
        cols.join(" "),
    ];
    let steps = a.len().min(b.len());
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let year = params.horizon.year0 + params.horizon.delta_years as i32 * k as i32;
        let mut row = Vec::with_capacity(1 + 2 * names.len());
        row.push(year as f64);
        for i in 0..params.n_regions() {
            row.push(a.controls.steps[k].mu[i]);
        }
        for i in 0..params.n_regions() {
            row.push(b.controls.steps[k].mu[i]);
        }
        rows.push(row);
    }
    write_dat(dir, name, &header, &rows)
}
