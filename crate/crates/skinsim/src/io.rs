//! CSV and JSON artifacts.
//!
//! Numbers are written as the shortest decimal string that parses back to the
//! same `f64`, with no locale dependence: plain notation for magnitudes in
//! `[1e-5, 1e16)` and zero, exponent notation otherwise.

use std::fs;
use std::path::Path;

use serde::Serialize;
use skinsim_core::engine::EnsembleSeries;

use crate::error::CliError;

pub fn fmt(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io("cannot create output directory", dir, e))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::io("cannot write", path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io("cannot write", path, e))
}

/// Generic table writer.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let err = |e: csv::Error| CliError::io("cannot write", path, e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    finish(w, path)
}

/// `t,t_over_L,<col>_mean,<col>_se,...`
pub fn series_header(columns: &[String]) -> Vec<String> {
    let mut h = vec!["t".to_string(), "t_over_L".to_string()];
    for c in columns {
        h.push(format!("{c}_mean"));
        h.push(format!("{c}_se"));
    }
    h
}

pub fn write_series(path: &Path, series: &EnsembleSeries) -> Result<(), CliError> {
    let header = series_header(&series.columns);
    let l = series.sites as f64;
    let rows: Vec<Vec<String>> = series
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut r = vec![fmt(t), fmt(t / l)];
            for c in 0..series.columns.len() {
                r.push(fmt(series.mean[c][k]));
                r.push(fmt(series.se[c][k]));
            }
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Reads a `series.csv` back. `sites` comes from the caller (meta.json) or
/// from the ratio of the first two columns.
pub fn read_series(path: &Path, sites: Option<usize>) -> Result<EnsembleSeries, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io("cannot read", path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::io("cannot read", path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 || header[0] != "t" || header[1] != "t_over_L" || header.len() % 2 != 0 {
        return Err(CliError::Config(format!("{} is not a series file", path.display())));
    }
    let columns: Vec<String> = header[2..]
        .chunks(2)
        .map(|p| p[0].trim_end_matches("_mean").to_string())
        .collect();
    let mut times = Vec::new();
    let mut ratio = None;
    let mut mean = vec![Vec::new(); columns.len()];
    let mut se = vec![Vec::new(); columns.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::io("cannot read", path, e))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::io("malformed number in", path, e))?;
        if v.len() != header.len() {
            return Err(CliError::Config(format!("{}: ragged row", path.display())));
        }
        times.push(v[0]);
        if ratio.is_none() && v[0] > 0.0 && v[1] > 0.0 {
            ratio = Some((v[0] / v[1]).round() as usize);
        }
        for c in 0..columns.len() {
            mean[c].push(v[2 + 2 * c]);
            se[c].push(v[3 + 2 * c]);
        }
    }
    let sites = sites
        .or(ratio)
        .ok_or_else(|| CliError::Config(format!("{}: cannot infer the system size", path.display())))?;
    Ok(EnsembleSeries { sites, times, columns, mean, se, n_trajectories: 0 })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io("cannot serialize", path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io("cannot write", path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 123456.789] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt(0.5), "0.5");
        assert_eq!(fmt(2.0), "2");
        assert_eq!(fmt(3.25e-300), "3.25e-300");
        assert_eq!(fmt(-1e20), "-1e20");
        assert_eq!(fmt(1.5e-5), "0.000015");
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = EnsembleSeries {
            sites: 8,
            times: vec![0.0, 0.4, 0.8],
            columns: vec!["S_half".into(), "n_1".into()],
            mean: vec![vec![0.0, 0.25, 1.0 / 3.0], vec![1.0, 0.5, 0.125]],
            se: vec![vec![0.0; 3], vec![0.0, 0.01, 0.02]],
            n_trajectories: 0,
        };
        let p = dir.path().join("series.csv");
        write_series(&p, &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,t_over_L,S_half_mean,S_half_se,n_1_mean,n_1_se\n"));
        assert_eq!(read_series(&p, None).unwrap(), s);
    }
}
