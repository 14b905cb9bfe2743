//! Post-processing of run directories into `fits.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use skinsim_core::analysis;
use skinsim_core::engine::EnsembleSeries;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io;

/// Window in `t/L` for the straight-line velocity fit.
pub const VELOCITY_WINDOW: (f64, f64) = (0.1, 0.45);

#[derive(Debug, Clone, Serialize)]
pub struct SeriesFits {
    pub path: String,
    pub sites: usize,
    pub disorder_strength: Option<f64>,
    pub n_traj: Option<usize>,
    /// `f_skin = 1/2` crossing in `t/L`.
    pub tc_over_l_fskin: Option<f64>,
    pub f_skin_final: Option<f64>,
    /// Crossing of half the final `f_skin` value.
    pub tc_over_l_half_plateau: Option<f64>,
    pub s_max: Option<f64>,
    pub s_max_t_over_l: Option<f64>,
    pub s_final: Option<f64>,
    pub v0: Option<f64>,
    pub two_v0_squared: Option<f64>,
    /// `1 / (2 |v0|)` from the fitted `v0`.
    pub tc_over_l_from_v0: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fits {
    pub entries: Vec<SeriesFits>,
}

pub fn fit_series(series: &EnsembleSeries) -> SeriesFits {
    let tl = series.t_over_l();
    let f = series.mean_of("f_skin");
    let f_final = f.and_then(|c| c.last().copied());
    let smax = analysis::max_entropy(series);
    let velocity = series.mean_of("v").and_then(|v| {
        let l = series.sites as f64;
        let window = (VELOCITY_WINDOW.0 * l, VELOCITY_WINDOW.1 * l);
        analysis::fit_velocity_slope(&series.times, v, window, series.sites).ok()
    });
    SeriesFits {
        path: String::new(),
        sites: series.sites,
        disorder_strength: None,
        n_traj: None,
        tc_over_l_fskin: f.and_then(|c| analysis::detect_transition(&tl, c)),
        f_skin_final: f_final,
        tc_over_l_half_plateau: f
            .zip(f_final)
            .filter(|(_, ff)| *ff > 0.0)
            .and_then(|(c, ff)| analysis::first_crossing(&tl, c, ff / 2.0)),
        s_max: smax.map(|m| m.value),
        s_max_t_over_l: smax.map(|m| m.time / series.sites as f64),
        s_final: series.mean_of("S_half").and_then(|c| c.last().copied()),
        v0: velocity.map(|v| v.v0),
        two_v0_squared: velocity.map(|v| v.two_v0_squared),
        tc_over_l_from_v0: velocity.and_then(|v| analysis::predict_tc(v.v0).ok()),
    }
}

/// Every `series.csv` in `dir` and its immediate subdirectories, sorted.
fn series_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    if dir.join("series.csv").is_file() {
        out.push(dir.join("series.csv"));
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::io("cannot read directory", dir, e))?;
    let mut subdirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    for d in subdirs {
        if d.join("series.csv").is_file() {
            out.push(d.join("series.csv"));
        }
    }
    Ok(out)
}

pub fn analyze_dir(input: &Path, out_dir: &Path) -> Result<Fits, CliError> {
    let files = series_files(input)?;
    if files.is_empty() {
        return Err(CliError::Config(format!("no series.csv under {}", input.display())));
    }
    let mut entries = Vec::new();
    for file in files {
        let parent = file.parent().unwrap_or(input);
        let meta = fs::read_to_string(parent.join("meta.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<RunConfig>(&t).ok());
        let series = io::read_series(&file, meta.as_ref().map(|m| m.sites))?;
        let mut fits = fit_series(&series);
        fits.path = parent.strip_prefix(input).unwrap_or(parent).display().to_string();
        if let Some(m) = &meta {
            fits.disorder_strength = Some(m.disorder_strength);
            fits.n_traj = Some(m.n_traj);
        }
        entries.push(fits);
    }
    let fits = Fits { entries };
    io::create_dir(out_dir)?;
    io::write_json(&out_dir.join("fits.json"), &fits)?;
    Ok(fits)
}
