//! Post-processing: velocity, transition estimates, fits and sweeps.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;


use crate::engine::EnsembleSeries;
use crate::error::{Error, Result};
use crate::linalg::c64;
use crate::model::{ModelSpec, SingleParticleMatrices};
use crate::state::{momentum_grid, SlaterState};

/// Instantaneous drift of the mean position `(2/L) sum_l l <n_l>`,
/// averaged over the jump record of the next infinitesimal step.
///
/// With `C_ij = <c_i^dag c_j>` and the Wick contractions of
/// `<L_m^dag n_l L_m>` and `<{d_m^dag d_m, n_l}>`, the per-site drift is
/// `-2 Im sum_i h_il C_il + gamma sum_m (|d_ml|^2 <d_m^dag d_m> - Re(conj(d_ml) sum_i d_mi C_il))`.
pub fn velocity_expectation(state: &SlaterState, matrices: &SingleParticleMatrices, gamma: f64) -> f64 {
    let l = state.sites();
    let n = state.particles();
    if n == 0 {
        return 0.0;
    }
    let c = state.correlation_matrix().c;
    let h = &matrices.h;
    let mut drift = alloc::vec![0.0; l];
    for (site, dr) in drift.iter_mut().enumerate() {
        let mut z = c64::new(0.0, 0.0);
        for i in 0..l {
            z += h[(i, site)] * c[(i, site)];
        }
        *dr = -2.0 * z.im;
    }
    for d in &matrices.modes {
        let support: Vec<(usize, c64)> = d
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(i, z)| (i, *z))
            .collect();
        let mut occ = c64::new(0.0, 0.0);
        for &(i, di) in &support {
            for &(j, dj) in &support {
                occ += di * dj.conj() * c[(i, j)];
            }
        }
        let occ = occ.re;
        for &(site, ds) in &support {
            let x: c64 = support.iter().map(|&(i, di)| di * c[(i, site)]).sum();
            drift[site] += gamma * (ds.norm_sqr() * occ - (ds.conj() * x).re);
        }
    }
    2.0 / l as f64 * drift.iter().enumerate().map(|(i, d)| (i + 1) as f64 * d).sum::<f64>()
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
    /// Residual-based standard errors (zero for an exact fit or two points).
    pub intercept_se: f64,
    pub slope_se: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} abscissae vs {} ordinates", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let (slope_se, intercept_se) = if n > 2 {
        let s2 = sse / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(LinearFit { intercept, slope, r2, intercept_se, slope_se, points: n })
}

/// Straight-line fit `v(t) = v0 + slope t` in a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityFit {
    pub v0: f64,
    pub slope: f64,
    /// `slope * L`, which equals `2 v0^2` for `v(t) = (1 - 2|v0| t / L) v0`.
    pub two_v0_squared: f64,
    /// `-sqrt(slope L / 2)`, the speed implied by the slope alone.
    pub v0_from_slope: f64,
    pub fit: LinearFit,
}

pub fn fit_velocity_slope(times: &[f64], v: &[f64], window: (f64, f64), sites: usize) -> Result<VelocityFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(v)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, y)| (*t, *y))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::Fit(format!(
            "velocity window [{}, {}] holds {} points, need 4",
            window.0,
            window.1,
            xs.len()
        )));
    }
    let fit = fit_line(&xs, &ys)?;
    let two_v0_squared = fit.slope * sites as f64;
    let v0_from_slope = -(two_v0_squared / 2.0).max(0.0).sqrt();
    Ok(VelocityFit { v0: fit.intercept, slope: fit.slope, two_v0_squared, v0_from_slope, fit })
}

/// Group velocity of the clean chain, `v_k = -2 sin k`.
pub fn group_velocity(k: f64) -> f64 {
    -2.0 * k.sin()
}

/// `v0 = (2/L) sum_k n_k v_k` on the grid of [`momentum_grid`].
pub fn estimate_v0_from_pbc(n_k: &[f64]) -> f64 {
    let l = n_k.len();
    if l == 0 {
        return 0.0;
    }
    let grid = momentum_grid(l);
    2.0 / l as f64 * n_k.iter().zip(&grid).map(|(n, &k)| n * group_velocity(k)).sum::<f64>()
}

/// `t_c / L = 1 / (2 |v0|)`.
pub fn predict_tc(v0: f64) -> Result<f64> {
    if v0 == 0.0 || !v0.is_finite() {
        return Err(Error::NoTransport);
    }
    Ok(1.0 / (2.0 * v0.abs()))
}

/// First crossing of `level` by the running maximum of `f`, linearly
/// interpolated. `None` if it never gets there.
pub fn first_crossing(x: &[f64], f: &[f64], level: f64) -> Option<f64> {
    let mut envelope = f64::NEG_INFINITY;
    let mut prev: Option<(f64, f64)> = None;
    for (&xi, &fi) in x.iter().zip(f) {
        let e = envelope.max(fi);
        if e >= level {
            return Some(match prev {
                Some((x0, f0)) if e > f0 => x0 + (level - f0) * (xi - x0) / (e - f0),
                _ => xi,
            });
        }
        envelope = e;
        prev = Some((xi, e));
    }
    None
}

/// `f_skin = 1/2` crossing in units of `t / L`.
pub fn detect_transition(t_over_l: &[f64], f_skin: &[f64]) -> Option<f64> {
    first_crossing(t_over_l, f_skin, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesMax {
    pub value: f64,
    pub time: f64,
    pub index: usize,
}

/// Maximum of a (trajectory-averaged) series; ties keep the earliest time.
pub fn series_max(times: &[f64], values: &[f64]) -> Option<SeriesMax> {
    let mut best: Option<SeriesMax> = None;
    for (index, (&time, &value)) in times.iter().zip(values).enumerate() {
        if best.is_none_or(|b| value > b.value) {
            best = Some(SeriesMax { value, time, index });
        }
    }
    best
}

pub fn max_entropy(series: &EnsembleSeries) -> Option<SeriesMax> {
    series_max(&series.times, series.mean_of("S_half")?)
}

pub fn max_mutual_information(series: &EnsembleSeries) -> Option<SeriesMax> {
    series_max(&series.times, series.mean_of("I_AB")?)
}

/// `S = a ln L + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
    /// Uncertainty of `a`: propagated from the per-point errors when given,
    /// otherwise from the residuals.
    pub a_se: f64,
    pub sizes: Vec<usize>,
}

pub fn fit_log_scaling(sizes: &[usize], values: &[f64], errors: Option<&[f64]>) -> Result<ScalingFit> {
    if sizes.len() < 3 {
        return Err(Error::Fit(format!("log scaling needs >= 3 sizes, got {}", sizes.len())));
    }
    let x: Vec<f64> = sizes.iter().map(|&l| (l as f64).ln()).collect();
    let fit = fit_line(&x, values)?;
    let a_se = match errors {
        Some(e) if e.len() == sizes.len() => {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
            // Var(a) = sum_k ((x_k - mx) / sxx)^2 sigma_k^2
            x.iter().zip(e).map(|(xk, s)| ((xk - mx) / sxx * s).powi(2)).sum::<f64>().sqrt()
        }
        Some(e) => {
            return Err(Error::Fit(format!("{} errors for {} sizes", e.len(), sizes.len())));
        }
        None => fit.slope_se,
    };
    Ok(ScalingFit { a: fit.slope, b: fit.intercept, r2: fit.r2, a_se, sizes: sizes.to_vec() })
}

/// `(L / pi) sin(pi l / L)`.
pub fn chord_distance(l: usize, sites: usize) -> f64 {
    sites as f64 / PI * (PI * l as f64 / sites as f64).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayKind {
    PowerLaw,
    Exponential,
}

/// Competing fits of a decaying correlation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayClassification {
    /// `ln C` against `ln x`.
    pub power: LinearFit,
    /// `ln C` against `x`.
    pub exponential: LinearFit,
    pub kind: DecayKind,
    /// `R^2` of the winner minus `R^2` of the loser.
    pub margin: f64,
}

/// Fits `C(x)` on both log-log and semi-log axes; points with `C <= 0` are
/// dropped.
pub fn classify_decay(x: &[f64], c: &[f64]) -> Result<DecayClassification> {
    let (lx, lc): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(c)
        .filter(|(xi, ci)| **ci > 0.0 && **xi > 0.0)
        .map(|(xi, ci)| (*xi, ci.ln()))
        .unzip();
    if lx.len() < 3 {
        return Err(Error::Fit(format!("{} positive correlation points, need 3", lx.len())));
    }
    let logx: Vec<f64> = lx.iter().map(|v| v.ln()).collect();
    let power = fit_line(&logx, &lc)?;
    let exponential = fit_line(&lx, &lc)?;
    let (kind, margin) = if power.r2 >= exponential.r2 {
        (DecayKind::PowerLaw, power.r2 - exponential.r2)
    } else {
        (DecayKind::Exponential, exponential.r2 - power.r2)
    };
    Ok(DecayClassification { power, exponential, kind, margin })
}

/// Averaged `C(l)` at time index `k` with its chord-distance abscissa.
pub fn correlation_profile(series: &EnsembleSeries, k: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for l in 1.. {
        match series.mean_of(&format!("C_{l}")) {
            Some(col) => {
                x.push(chord_distance(l, series.sites));
                y.push(col[k]);
            }
            None => break,
        }
    }
    (!x.is_empty()).then_some((x, y))
}

/// `S_{L/2}(t/L, W)` on a common `t/L` grid plus the `f_skin` transition of
/// every row.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub strengths: Vec<f64>,
    pub t_over_l: Vec<f64>,
    /// `entropy[w][k]`.
    pub entropy: Vec<Vec<f64>>,
    pub transitions: Vec<Option<f64>>,
}

/// Runs `run` for each disorder strength (in order) and assembles the
/// diagram. All rows must share one time grid.
pub fn sweep_phase_diagram<F>(base: &ModelSpec, strengths: &[f64], mut run: F) -> Result<PhaseDiagram>
where
    F: FnMut(&ModelSpec) -> Result<EnsembleSeries>,
{
    let mut rows = Vec::with_capacity(strengths.len());
    for &w in strengths {
        let mut spec = base.clone();
        spec.disorder_strength = w;
        rows.push(run(&spec)?);
    }
    PhaseDiagram::from_series(strengths, &rows)
}

impl PhaseDiagram {
    pub fn from_series(strengths: &[f64], rows: &[EnsembleSeries]) -> Result<Self> {
        if strengths.len() != rows.len() || rows.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} strengths for {} series",
                strengths.len(),
                rows.len()
            )));
        }
        let t_over_l = rows[0].t_over_l();
        let mut entropy = Vec::with_capacity(rows.len());
        let mut transitions = Vec::with_capacity(rows.len());
        for r in rows {
            if r.t_over_l() != t_over_l {
                return Err(Error::DimensionMismatch("sweep rows use different time grids".into()));
            }
            let s = r
                .mean_of("S_half")
                .ok_or_else(|| Error::InvalidConfig("sweep needs the entropy observable".into()))?;
            entropy.push(s.to_vec());
            transitions.push(r.mean_of("f_skin").and_then(|f| detect_transition(&t_over_l, f)));
        }
        Ok(Self { strengths: strengths.to_vec(), t_over_l, entropy, transitions })
    }
}
