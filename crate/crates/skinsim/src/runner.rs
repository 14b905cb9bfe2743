//! Executes a [`RunConfig`] and writes its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use skinsim_core::analysis;
use skinsim_core::circuit::{self, CircuitSample, QubitRegister};
use skinsim_core::engine::{self, EngineConfig, EnsembleAccumulator, EnsembleSeries, InitialState, Simulator};
use skinsim_core::fock::FockBasis;
use skinsim_core::liouvillian::{self, LiouvillianSector};
use skinsim_core::model::{Boundary, ModelSpec};
use skinsim_core::c64;

use crate::analyze;
use crate::config::{Mode, RunConfig, SweepOver};
use crate::error::CliError;
use crate::io;

/// Trajectories handed to the pool at once; results are folded in index
/// order after each batch.
const BATCH: usize = 64;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub out_dir: PathBuf,
}

/// Output directory: `--out`, else `output` from the config, else the label,
/// with relative paths placed under `SKINSIM_OUT` when that is set.
pub fn resolve_out_dir(cli_out: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    let rel = cfg.output.clone().unwrap_or_else(|| {
        let label = if cfg.label.is_empty() { "run" } else { cfg.label.as_str() };
        PathBuf::from("runs").join(label)
    });
    match std::env::var_os("SKINSIM_OUT") {
        Some(root) if rel.is_relative() => PathBuf::from(root).join(rel),
        _ => rel,
    }
}

/// `--workers`, else `SKINSIM_WORKERS`, else the available cores.
pub fn resolve_workers(cli: Option<usize>) -> usize {
    cli.or_else(|| std::env::var("SKINSIM_WORKERS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<(), CliError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", opts.workers)))?;
    io::create_dir(&opts.out_dir)?;
    let started = Instant::now();
    let extra = pool.install(|| match cfg.mode {
        Mode::Trajectory => run_trajectory_mode(cfg, &opts.out_dir),
        Mode::Ensemble => run_ensemble_mode(cfg, &opts.out_dir),
        Mode::Sweep => run_sweep(cfg, &opts.out_dir),
        Mode::PbcSteady => run_pbc_steady(cfg, &opts.out_dir),
        Mode::Liouvillian => run_liouvillian(cfg, &opts.out_dir),
        Mode::Circuit => run_circuit(cfg, &opts.out_dir),
        Mode::Analyze => {
            let input = cfg.input.clone().unwrap_or_default();
            analyze::analyze_dir(&input, &opts.out_dir).map(|_| json!({ "input": input }))
        }
    })?;
    if cfg.mode == Mode::Analyze && cfg.input.as_deref() == Some(opts.out_dir.as_path()) {
        // keep the analyzed run's own meta.json
        return Ok(());
    }
    write_meta(&opts.out_dir, cfg, started, extra)
}

fn write_meta(dir: &Path, cfg: &RunConfig, started: Instant, extra: serde_json::Value) -> Result<(), CliError> {
    let mut meta = cfg.canonical();
    meta.run = Some(json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "details": extra,
    }));
    io::write_json(&dir.join("meta.json"), &meta)
}

/// Trajectories `first..first + n` folded in index order.
pub fn parallel_ensemble(
    spec: &ModelSpec,
    config: &EngineConfig,
    initial: &InitialState,
    n_traj: usize,
    first: u64,
) -> Result<EnsembleSeries, skinsim_core::Error> {
    let sim = Simulator::new(spec, config)?;
    let mut acc = EnsembleAccumulator::new(spec.sites, &config.observables);
    let mut start = 0;
    while start < n_traj {
        let end = (start + BATCH).min(n_traj);
        let batch: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| sim.run_trajectory(initial, first + i as u64))
            .collect();
        for records in batch {
            acc.push(&records?)?;
        }
        start = end;
    }
    acc.finish()
}

fn run_trajectory_mode(cfg: &RunConfig, dir: &Path) -> Result<serde_json::Value, CliError> {
    let spec = cfg.model_spec();
    let ec = cfg.engine_config(cfg.sites);
    let series = parallel_ensemble(&spec, &ec, &cfg.initial_state(), 1, cfg.trajectory_index)?;
    io::write_series(&dir.join("series.csv"), &series)?;
    Ok(json!({ "trajectory_index": cfg.trajectory_index, "steps": ec.steps() }))
}

fn run_ensemble_mode(cfg: &RunConfig, dir: &Path) -> Result<serde_json::Value, CliError> {
    let spec = cfg.model_spec();
    let ec = cfg.engine_config(cfg.sites);
    let series = parallel_ensemble(&spec, &ec, &cfg.initial_state(), cfg.n_traj, 0)?;
    io::write_series(&dir.join("series.csv"), &series)?;
    Ok(json!({ "n_trajectories": series.n_trajectories, "steps": ec.steps() }))
}

#[derive(Debug, Serialize)]
struct ManifestPoint {
    value: f64,
    dir: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    label: &'a str,
    sweep_over: SweepOver,
    values: &'a [f64],
    completed: Vec<ManifestPoint>,
    failed: Option<serde_json::Value>,
}

pub fn sweep_point_dir(over: SweepOver, value: f64) -> String {
    match over {
        SweepOver::W => format!("W_{}", io::fmt(value)),
        SweepOver::L => format!("L_{}", value as usize),
    }
}

fn run_sweep(cfg: &RunConfig, dir: &Path) -> Result<serde_json::Value, CliError> {
    let over = cfg.sweep_over.unwrap_or(SweepOver::W);
    let mut manifest =
        Manifest { label: &cfg.label, sweep_over: over, values: &cfg.values, completed: Vec::new(), failed: None };
    let mut rows: Vec<EnsembleSeries> = Vec::new();
    for &value in &cfg.values {
        let mut point = cfg.canonical();
        point.mode = Mode::Ensemble;
        point.sweep_over = None;
        point.values = Vec::new();
        match over {
            SweepOver::W => point.disorder_strength = value,
            SweepOver::L => point.sites = value as usize,
        }
        let name = sweep_point_dir(over, value);
        let pdir = dir.join(&name);
        let result = point.validate().and_then(|_| {
            io::create_dir(&pdir)?;
            let started = Instant::now();
            let ec = point.engine_config(point.sites);
            let series = parallel_ensemble(&point.model_spec(), &ec, &point.initial_state(), point.n_traj, 0)?;
            io::write_series(&pdir.join("series.csv"), &series)?;
            write_meta(&pdir, &point, started, json!({ "n_trajectories": series.n_trajectories }))?;
            Ok(series)
        });
        match result {
            Ok(series) => {
                manifest.completed.push(ManifestPoint { value, dir: name });
                rows.push(series);
                io::write_json(&dir.join("manifest.json"), &manifest)?;
            }
            Err(e) => {
                manifest.failed = Some(json!({ "value": value, "error": e.to_string() }));
                io::write_json(&dir.join("manifest.json"), &manifest)?;
                return Err(e);
            }
        }
    }
    if over == SweepOver::W {
        write_phase(&dir.join("phase.csv"), &cfg.values, &rows)?;
    }
    Ok(json!({ "points": cfg.values.len() }))
}

/// `S_{L/2}` matrix: one row per `W`, one column per `t/L` of the first row.
fn write_phase(path: &Path, strengths: &[f64], rows: &[EnsembleSeries]) -> Result<(), CliError> {
    let diagram = analysis::PhaseDiagram::from_series(strengths, rows)?;
    let mut header = vec!["W".to_string()];
    header.extend(diagram.t_over_l.iter().map(|&x| io::fmt(x)));
    let body: Vec<Vec<String>> = diagram
        .strengths
        .iter()
        .zip(&diagram.entropy)
        .map(|(w, s)| std::iter::once(io::fmt(*w)).chain(s.iter().map(|&v| io::fmt(v))).collect())
        .collect();
    io::write_table(path, &header, &body)
}

/// Steady-state window: the last `fraction` of the recorded times.
fn steady_indices(times: &[f64], fraction: f64) -> std::ops::Range<usize> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let start = times.iter().position(|&t| t >= t_end * (1.0 - fraction)).unwrap_or(0);
    start..times.len()
}

fn run_pbc_steady(cfg: &RunConfig, dir: &Path) -> Result<serde_json::Value, CliError> {
    let spec = cfg.model_spec();
    if spec.boundary != Boundary::Periodic {
        return Err(CliError::Config("field `boundary`: pbc-steady mode needs \"periodic\"".into()));
    }
    let mut ec = cfg.engine_config(cfg.sites);
    ec.observables.momentum = true;
    ec.observables.velocity = true;
    let series = parallel_ensemble(&spec, &ec, &cfg.initial_state(), cfg.n_traj, 0)?;
    io::write_series(&dir.join("series.csv"), &series)?;
    let fits = pbc_fits(&series, cfg.steady_fraction.unwrap_or(0.5))?;
    io::write_json(&dir.join("fits.json"), &fits)?;
    Ok(json!({ "n_trajectories": series.n_trajectories }))
}

#[derive(Debug, Clone, Serialize)]
pub struct PbcFits {
    pub sites: usize,
    pub steady_window: [f64; 2],
    pub n_k: Vec<f64>,
    pub v0_from_nk: f64,
    pub v_mean_steady: f64,
    pub tc_over_l_predicted: Option<f64>,
}

pub fn pbc_fits(series: &EnsembleSeries, fraction: f64) -> Result<PbcFits, CliError> {
    let l = series.sites;
    let window = steady_indices(&series.times, fraction);
    let start = -((l / 2) as i64);
    let mut n_k = Vec::with_capacity(l);
    for m in 0..l as i64 {
        let col = series
            .mean_of(&format!("nk_{}", start + m))
            .ok_or_else(|| CliError::Numerical("series lacks momentum columns".into()))?;
        n_k.push(col[window.clone()].iter().sum::<f64>() / window.len() as f64);
    }
    let v = series.mean_of("v").ok_or_else(|| CliError::Numerical("series lacks v".into()))?;
    let v_mean_steady = v[window.clone()].iter().sum::<f64>() / window.len() as f64;
    let v0 = analysis::estimate_v0_from_pbc(&n_k);
    Ok(PbcFits {
        sites: l,
        steady_window: [series.times[window.start], series.times[window.end - 1]],
        n_k,
        v0_from_nk: v0,
        v_mean_steady,
        tc_over_l_predicted: analysis::predict_tc(v0).ok(),
    })
}

fn run_liouvillian(cfg: &RunConfig, dir: &Path) -> Result<serde_json::Value, CliError> {
    let spec = cfg.model_spec();
    let n = cfg.particles.unwrap_or(cfg.sites / 2);
    let sector = LiouvillianSector::build(&spec, n)?;
    let dec = sector.decompose()?;
    let mut spectrum: Vec<c64> = dec.values.clone();
    spectrum.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let rows: Vec<Vec<String>> = spectrum.iter().map(|z| vec![io::fmt(z.re), io::fmt(z.im)]).collect();
    io::write_table(&dir.join("spectrum.csv"), &["re".into(), "im".into()], &rows)?;

    let psi0 = initial_amplitudes(cfg, &spec, sector.basis(), n)?;
    let rho0 = sector.pure_state(&psi0)?;
    let t_max = cfg.t_max_for(cfg.sites);
    let times: Vec<f64> = (0..=cfg.records).map(|k| t_max * k as f64 / cfg.records as f64).collect();
    let evo = sector.evolve_density(Some(&dec), rho0.as_ref(), &times)?;
    let cols: Vec<String> = (1..=cfg.sites).map(|l| format!("n_{l}")).collect();
    let mut mean = vec![Vec::with_capacity(times.len()); cfg.sites];
    for rho in &evo.states {
        for (l, v) in liouvillian::site_densities(sector.basis(), rho.as_ref()).into_iter().enumerate() {
            mean[l].push(v);
        }
    }
    let series = EnsembleSeries {
        sites: cfg.sites,
        times: times.clone(),
        columns: cols,
        se: vec![vec![0.0; times.len()]; cfg.sites],
        mean,
        n_trajectories: 0,
    };
    io::write_series(&dir.join("series.csv"), &series)?;
    let steady = sector.steady_state(&dec)?;
    let fits = json!({
        "sites": cfg.sites,
        "particles": n,
        "dimension": sector.dim(),
        "stationary_count": dec.stationary_count(),
        "gap": dec.gap(),
        "max_re": spectrum.first().map(|z| z.re),
        "trace_defect": sector.trace_defect(),
        "evolution_method": format!("{:?}", evo.method),
        "steady_density": liouvillian::site_densities(sector.basis(), steady.as_ref()),
    });
    io::write_json(&dir.join("fits.json"), &fits)?;
    Ok(json!({ "evolution_method": format!("{:?}", evo.method) }))
}

fn initial_amplitudes(cfg: &RunConfig, spec: &ModelSpec, basis: &FockBasis, n: usize) -> Result<Vec<c64>, CliError> {
    if n != cfg.sites / 2 {
        // only Fock-type starts make sense away from half filling
        let occ: Vec<usize> = (0..n).map(|k| (2 * k + 1) % cfg.sites).collect();
        return Ok(basis.fock_vector(&occ)?);
    }
    let matrices = skinsim_core::model::SingleParticleMatrices::build(spec)?;
    let s = cfg.initial_state().prepare(spec, &matrices, &mut engine::trajectory_rng(cfg.seed, 0))?;
    Ok(basis.slater_amplitudes(&s)?)
}

fn run_circuit(cfg: &RunConfig, dir: &Path) -> Result<serde_json::Value, CliError> {
    let cc = cfg.circuit_config();
    let l = cfg.sites;
    let every = cfg.checkpoint_every.unwrap_or(cc.modules.max(1));
    let mut checkpoints: Vec<usize> = (0..=cc.modules).step_by(every).collect();
    if checkpoints.last() != Some(&cc.modules) {
        checkpoints.push(cc.modules);
    }
    let init = QubitRegister::neel(l)?;
    let shots: Vec<Result<Vec<CircuitSample>, skinsim_core::Error>> = (0..cc.shots as u64)
        .into_par_iter()
        .map(|s| circuit::run_circuit_series(&cc, &init, &checkpoints, &mut engine::trajectory_rng(cfg.seed, s)))
        .collect();
    let shots: Vec<Vec<CircuitSample>> = shots.into_iter().collect::<Result<_, _>>()?;

    let mut header = vec!["shot".to_string(), "modules".to_string()];
    header.extend((1..=l).map(|q| format!("nu_{q}")));
    let mut rows = Vec::new();
    for (s, samples) in shots.iter().enumerate() {
        for (c, sample) in checkpoints.iter().zip(samples) {
            let mut row = vec![s.to_string(), c.to_string()];
            row.extend(sample.readout.iter().map(|v| v.to_string()));
            rows.push(row);
        }
    }
    io::write_table(&dir.join("shots.csv"), &header, &rows)?;

    let with_entropy = shots.iter().flatten().all(|s| s.entropy.is_some());
    let mut columns = Vec::new();
    if with_entropy {
        columns.push("S_half".to_string());
    }
    columns.push("f_skin".to_string());
    columns.extend((1..=l).map(|q| format!("nu_{q}")));
    let mut mean = vec![Vec::new(); columns.len()];
    let mut se = vec![Vec::new(); columns.len()];
    let nshots = shots.len() as f64;
    let spread = |var: f64| if nshots > 1.0 { (var.max(0.0) / (nshots - 1.0)).sqrt() } else { 0.0 };
    for c in 0..checkpoints.len() {
        let mut k = 0;
        if with_entropy {
            let s: Vec<f64> = shots.iter().filter_map(|sh| sh[c].entropy).collect();
            let m = s.iter().sum::<f64>() / nshots;
            let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nshots;
            mean[0].push(m);
            se[0].push(spread(var));
            k = 1;
        }
        let recs: Vec<Vec<i8>> = shots.iter().map(|s| s[c].readout.clone()).collect();
        let est = circuit::estimate_from_shots(&recs)?;
        let mut values = vec![est.f_skin];
        values.extend(&est.spin);
        for (j, m) in values.into_iter().enumerate() {
            // Bernoulli / +-1 samples: variance from the mean alone
            let var = if j == 0 { m * (1.0 - m) } else { 1.0 - m * m };
            mean[k + j].push(m);
            se[k + j].push(spread(var));
        }
    }
    let series = EnsembleSeries {
        sites: l,
        times: checkpoints.iter().map(|&c| c as f64 * cc.delta_t).collect(),
        columns,
        mean,
        se,
        n_trajectories: shots.len(),
    };
    io::write_series(&dir.join("series.csv"), &series)?;
    Ok(json!({ "shots": shots.len(), "checkpoints": checkpoints.len() }))
}
