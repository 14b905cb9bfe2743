//! Finite-step quantum-jump integration of the monitored chain.
//!
//! One step of length `dt`:
//! 1. jump probabilities `gamma dt <d_b^dag d_b>` from the pre-step state,
//!    one uniform variate per bond in ascending bond order;
//! 2. no-click evolution `U <- exp(-i h_eff dt) U`;
//! 3. every fired jump `L_b = exp(i theta n_{b+1}) d_b^dag d_b`, ascending;
//! 4. re-orthonormalization.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::analysis;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ZERO};
use crate::model::{ModelSpec, SingleParticleMatrices};
use crate::state::{self, SlaterState};

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_RECORDS: usize = 100;
/// Upper bound on `gamma * dt`.
pub const MAX_GAMMA_DT: f64 = 0.5;
/// Below this overlap a jump is treated as impossible.
pub const JUMP_AMPLITUDE_TOL: f64 = 1e-12;
/// A fired jump whose mode occupation on the current state is at or below
/// this is dropped: an earlier jump of the same step emptied its mode.
pub const EMPTY_MODE_TOL: f64 = 1e-20;

/// Per-trajectory random stream: ChaCha20 keyed by the master seed with the
/// trajectory index as stream id.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The uniform variate used for jump decisions. Shared with the oracles.
#[inline]
pub fn next_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Which observables a trajectory records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservableFlags {
    pub entropy: bool,
    pub mutual_information: bool,
    pub density: bool,
    pub f_skin: bool,
    pub f_r: bool,
    pub correlation: bool,
    pub velocity: bool,
    pub momentum: bool,
}

impl Default for ObservableFlags {
    fn default() -> Self {
        Self {
            entropy: true,
            mutual_information: false,
            density: true,
            f_skin: true,
            f_r: true,
            correlation: false,
            velocity: false,
            momentum: false,
        }
    }
}

impl ObservableFlags {
    pub fn all() -> Self {
        Self {
            entropy: true,
            mutual_information: true,
            density: true,
            f_skin: true,
            f_r: true,
            correlation: true,
            velocity: true,
            momentum: true,
        }
    }

    pub fn none() -> Self {
        Self {
            entropy: false,
            mutual_information: false,
            density: false,
            f_skin: false,
            f_r: false,
            correlation: false,
            velocity: false,
            momentum: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Steps between snapshots; the initial state is always recorded.
    pub record_every: usize,
    pub seed: u64,
    pub observables: ObservableFlags,
}

impl EngineConfig {
    /// Default step with about [`DEFAULT_RECORDS`] evenly spaced snapshots.
    pub fn new(t_max: f64, seed: u64) -> Self {
        let mut cfg = Self {
            dt: DEFAULT_DT,
            t_max,
            record_every: 1,
            seed,
            observables: ObservableFlags::default(),
        };
        cfg.record_every = cfg.auto_record_every(DEFAULT_RECORDS);
        cfg
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self.record_every = self.auto_record_every(DEFAULT_RECORDS);
        self
    }

    pub fn with_records(mut self, records: usize) -> Self {
        self.record_every = self.auto_record_every(records);
        self
    }

    pub fn with_observables(mut self, observables: ObservableFlags) -> Self {
        self.observables = observables;
        self
    }

    fn auto_record_every(&self, records: usize) -> usize {
        if !(self.dt > 0.0) || !self.t_max.is_finite() {
            return 1;
        }
        (self.steps() / records.max(1)).max(1)
    }

    /// Number of steps, `round(t_max / dt)`.
    pub fn steps(&self) -> usize {
        if self.t_max <= 0.0 || !(self.dt > 0.0) {
            return 0;
        }
        (self.t_max / self.dt).round() as usize
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "t_max must be finite and >= 0, got {}",
                self.t_max
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        if spec.gamma * self.dt > MAX_GAMMA_DT {
            return Err(Error::InvalidConfig(format!(
                "gamma * dt = {} exceeds {MAX_GAMMA_DT}",
                spec.gamma * self.dt
            )));
        }
        Ok(())
    }
}

/// A jump mode stored by its nonzero amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMode {
    pub bond: usize,
    /// Site receiving the feedback phase.
    pub partner: usize,
    pub entries: Vec<(usize, c64)>,
}

impl SparseMode {
    /// `g_n = d^dag U_n` for every column.
    pub fn overlaps(&self, u: MatRef<'_, c64>) -> Vec<c64> {
        (0..u.ncols())
            .map(|n| self.entries.iter().map(|&(i, d)| d.conj() * u[(i, n)]).sum())
            .collect()
    }

    /// `<d^dag d>` on an orthonormal state.
    pub fn occupation(&self, u: MatRef<'_, c64>) -> f64 {
        (0..u.ncols())
            .map(|n| {
                self.entries
                    .iter()
                    .map(|&(i, d)| d.conj() * u[(i, n)])
                    .sum::<c64>()
                    .norm_sqr()
            })
            .sum()
    }

    pub fn dense(&self, sites: usize) -> Vec<c64> {
        let mut v = vec![ZERO; sites];
        for &(i, d) in &self.entries {
            v[i] = d;
        }
        v
    }
}

/// Everything a trajectory needs that depends only on `(spec, dt)`.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub spec: ModelSpec,
    pub matrices: SingleParticleMatrices,
    pub modes: Vec<SparseMode>,
    pub propagator: Mat<c64>,
    pub dt: f64,
}

impl Dynamics {
    pub fn new(spec: &ModelSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        let matrices = SingleParticleMatrices::build(spec)?;
        let modes = matrices
            .modes
            .iter()
            .enumerate()
            .map(|(b, d)| SparseMode {
                bond: b,
                partner: spec.bond_partner(b),
                entries: d
                    .iter()
                    .enumerate()
                    .filter(|(_, z)| **z != ZERO)
                    .map(|(i, z)| (i, *z))
                    .collect(),
            })
            .collect();
        let propagator = make_propagator(matrices.h_eff.as_ref(), dt)?;
        Ok(Self { spec: spec.clone(), matrices, modes, propagator, dt })
    }

    pub fn sites(&self) -> usize {
        self.spec.sites
    }
}

/// `K = exp(-i h_eff dt)`.
pub fn make_propagator(h_eff: MatRef<'_, c64>, dt: f64) -> Result<Mat<c64>> {
    let minus_i_dt = c64::new(0.0, -dt);
    let a = Mat::from_fn(h_eff.nrows(), h_eff.ncols(), |i, j| h_eff[(i, j)] * minus_i_dt);
    linalg::expm(a.as_ref())
}

/// Q factor of `K U`.
pub fn nonhermitian_step(state: &SlaterState, propagator: MatRef<'_, c64>) -> Result<SlaterState> {
    if propagator.ncols() != state.sites() {
        return Err(Error::DimensionMismatch(format!(
            "propagator is {}x{}, state has {} sites",
            propagator.nrows(),
            propagator.ncols(),
            state.sites()
        )));
    }
    SlaterState::from_columns(propagator * state.orbitals())
}

/// Per-bond jump probabilities `gamma dt <d^dag d>`, clamped to `[0, 1]`.
pub fn jump_probabilities(state: &SlaterState, dynamics: &Dynamics) -> Vec<f64> {
    let scale = dynamics.spec.gamma * dynamics.dt;
    dynamics
        .modes
        .iter()
        .map(|m| (scale * m.occupation(state.orbitals())).clamp(0.0, 1.0))
        .collect()
}

/// Draws one uniform per bond (ascending) and returns the bonds that fire.
pub fn sample_jumps<R: Rng + ?Sized>(
    state: &SlaterState,
    dynamics: &Dynamics,
    rng: &mut R,
) -> Vec<usize> {
    select_jumps(&jump_probabilities(state, dynamics), rng)
}

fn select_jumps<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Vec<usize> {
    probabilities
        .iter()
        .enumerate()
        .filter_map(|(b, &p)| (next_uniform(rng) < p).then_some(b))
        .collect()
}

/// `L_b |psi> / ||L_b |psi>||` by the pivoted column transformation,
/// followed by re-orthonormalization.
pub fn apply_jump(state: &SlaterState, dynamics: &Dynamics, bond: usize) -> Result<SlaterState> {
    let mode = dynamics
        .modes
        .get(bond)
        .ok_or_else(|| Error::InvalidState(format!("no jump mode on bond {bond}")))?;
    let mut u = state.orbitals().to_owned();
    let g = mode.overlaps(u.as_ref());
    let (pivot, g_pivot) = g
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(n, z)| (n, *z))
        .ok_or(Error::ZeroAmplitudeJump { bond })?;
    if g_pivot.norm() <= JUMP_AMPLITUDE_TOL {
        return Err(Error::ZeroAmplitudeJump { bond });
    }
    let pivot_col: Vec<c64> = (0..u.nrows()).map(|i| u[(i, pivot)]).collect();
    for n in 0..u.ncols() {
        if n == pivot {
            continue;
        }
        let r = g[n] / g_pivot;
        for (i, p) in pivot_col.iter().enumerate() {
            u[(i, n)] -= r * p;
        }
    }
    let d = mode.dense(u.nrows());
    for (i, di) in d.into_iter().enumerate() {
        u[(i, pivot)] = di;
    }
    apply_feedback_phase(&mut u, mode.partner, dynamics.spec.theta);
    SlaterState::from_columns(u)
}

/// Same ray as [`apply_jump`], but built as an exact unitary change of basis
/// so orthonormal input stays orthonormal without a QR.
fn apply_jump_rotation(u: &mut Mat<c64>, mode: &SparseMode, theta: f64) -> Result<()> {
    let n = u.ncols();
    // a = U^dag d is the coordinate vector of the projection of d.
    let mut v: Vec<c64> = mode.overlaps(u.as_ref()).into_iter().map(|g| g.conj()).collect();
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if n == 0 || max <= JUMP_AMPLITUDE_TOL {
        return Err(Error::ZeroAmplitudeJump { bond: mode.bond });
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let phase = if v[0] == ZERO { c64::new(1.0, 0.0) } else { v[0] / v[0].norm() };
    // Householder reflector H = I - 2 v v^dag / |v|^2 with H a ∝ e_0.
    v[0] += phase * norm;
    let scale = 2.0 / v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let w: Vec<c64> = (0..u.nrows())
        .map(|i| (0..n).map(|k| u[(i, k)] * v[k]).sum::<c64>() * scale)
        .collect();
    for k in 0..n {
        let vk = v[k].conj();
        for (i, wi) in w.iter().enumerate() {
            u[(i, k)] -= wi * vk;
        }
    }
    // Column 0 now points along the projection of d; the rest are orthogonal to d.
    for i in 0..u.nrows() {
        u[(i, 0)] = ZERO;
    }
    for &(i, d) in &mode.entries {
        u[(i, 0)] = d;
    }
    apply_feedback_phase(u, mode.partner, theta);
    Ok(())
}

/// Applies fired jumps in order and returns the ones that acted.
fn apply_jumps(u: &mut Mat<c64>, dynamics: &Dynamics, fired: Vec<usize>) -> Result<Vec<usize>> {
    let mut applied = Vec::with_capacity(fired.len());
    for b in fired {
        let mode = &dynamics.modes[b];
        if mode.occupation(u.as_ref()) <= EMPTY_MODE_TOL {
            continue;
        }
        apply_jump_rotation(u, mode, dynamics.spec.theta)?;
        applied.push(b);
    }
    Ok(applied)
}

fn apply_feedback_phase(u: &mut Mat<c64>, site: usize, theta: f64) {
    let phase = c64::from_polar(1.0, theta);
    for n in 0..u.ncols() {
        u[(site, n)] *= phase;
    }
}

/// Initial condition of every trajectory at half filling.
#[derive(Debug, Clone)]
pub enum InitialState {
    Neel,
    /// Leftmost `L/2` sites filled.
    Skin,
    /// Fresh random Fock state per trajectory, drawn from the trajectory's
    /// own stream before the first step.
    RandomFock,
    /// Lowest `L/2` orbitals of the trajectory's Hamiltonian.
    GroundState,
    Custom(SlaterState),
}

impl InitialState {
    pub fn prepare<R: Rng + ?Sized>(
        &self,
        spec: &ModelSpec,
        matrices: &SingleParticleMatrices,
        rng: &mut R,
    ) -> Result<SlaterState> {
        let l = spec.sites;
        match self {
            InitialState::Neel => state::neel_state(l),
            InitialState::Skin => state::skin_state(l, l / 2),
            InitialState::RandomFock => state::random_fock_state(l, l / 2, rng),
            InitialState::GroundState => state::ground_state(matrices.h.as_ref(), l / 2),
            InitialState::Custom(s) => {
                if s.sites() != l {
                    return Err(Error::DimensionMismatch(format!(
                        "initial state has {} sites, model has {l}",
                        s.sites()
                    )));
                }
                Ok(s.clone())
            }
        }
    }
}

/// Sites of the two blocks used for the mutual information:
/// `A = [0, L/4)` and `B = [L/2, 3L/4)`.
pub fn mutual_information_blocks(sites: usize) -> (Vec<usize>, Vec<usize>) {
    let q = sites / 4;
    ((0..q).collect(), (sites / 2..sites / 2 + q).collect())
}

/// Sites `j = L/2 + l` (1-based) paired with `i = L/2` for `C(l)`,
/// `l = 1..=L/2`, as 0-based indices.
pub fn correlation_pairs(sites: usize) -> Vec<(usize, usize)> {
    let i = sites / 2 - 1;
    (1..=sites - sites / 2).map(|l| (i, i + l)).filter(|&(_, j)| j < sites).collect()
}

/// Snapshot of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub step: usize,
    pub jump_count: u64,
    pub s_half: Option<f64>,
    pub mutual_information: Option<f64>,
    pub f_skin: Option<f64>,
    pub f_r: Option<f64>,
    pub velocity: Option<f64>,
    pub density: Option<Vec<f64>>,
    pub correlation: Option<Vec<f64>>,
    pub momentum: Option<Vec<f64>>,
}

/// A single trajectory that can be advanced step by step.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    dynamics: &'a Dynamics,
    state: SlaterState,
    initial: SlaterState,
    rng: ChaCha20Rng,
    step: usize,
    jumps: u64,
    last_jumps: Vec<usize>,
}

impl<'a> Trajectory<'a> {
    pub fn new(dynamics: &'a Dynamics, initial: SlaterState, rng: ChaCha20Rng) -> Result<Self> {
        if initial.sites() != dynamics.sites() {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} sites, model has {}",
                initial.sites(),
                dynamics.sites()
            )));
        }
        Ok(Self {
            dynamics,
            state: initial.clone(),
            initial,
            rng,
            step: 0,
            jumps: 0,
            last_jumps: Vec::new(),
        })
    }

    pub fn state(&self) -> &SlaterState {
        &self.state
    }

    pub fn initial(&self) -> &SlaterState {
        &self.initial
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dynamics.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn jump_count(&self) -> u64 {
        self.jumps
    }

    /// Bonds that fired during the last step.
    pub fn last_jumps(&self) -> &[usize] {
        &self.last_jumps
    }

    pub fn advance(&mut self) -> Result<()> {
        let t = self.time();
        self.advance_inner().map_err(|e| Error::StepFailed { time: t, source: Box::new(e) })
    }

    fn advance_inner(&mut self) -> Result<()> {
        let d = self.dynamics;
        let fired = sample_jumps(&self.state, d, &mut self.rng);
        let evolved = &d.propagator * self.state.orbitals();
        // K is within a few percent of unitary, so one Cholesky pass suffices.
        let mut u = linalg::orthonormalize_nearly_orthonormal(evolved.as_ref())?;
        let applied = apply_jumps(&mut u, d, fired)?;
        *self.state.orbitals_mut() = u;
        self.jumps += applied.len() as u64;
        self.last_jumps = applied;
        self.step += 1;
        Ok(())
    }

    pub fn record(&self, flags: &ObservableFlags) -> Result<TrajectoryRecord> {
        let s = &self.state;
        let l = s.sites();
        let s_half = flags.entropy.then(|| s.half_chain_entropy()).transpose()?;
        let mutual_information = if flags.mutual_information {
            let (a, b) = mutual_information_blocks(l);
            Some(s.mutual_information(&a, &b)?)
        } else {
            None
        };
        let correlation = if flags.correlation {
            Some(correlation_pairs(l).into_iter().map(|(i, j)| s.correlation(i, j).norm_sqr()).collect())
        } else {
            None
        };
        Ok(TrajectoryRecord {
            t: self.time(),
            step: self.step,
            jump_count: self.jumps,
            s_half,
            mutual_information,
            f_skin: flags.f_skin.then(|| s.f_skin()),
            f_r: flags.f_r.then(|| s.f_return(&self.initial)).transpose()?,
            velocity: flags
                .velocity
                .then(|| analysis::velocity_expectation(s, &self.dynamics.matrices, self.dynamics.spec.gamma)),
            density: flags.density.then(|| s.density()),
            correlation,
            momentum: flags.momentum.then(|| s.momentum_density()),
        })
    }
}

/// Runs trajectories for one `(spec, config)` pair; the propagator is built
/// once unless the disorder changes per trajectory.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: ModelSpec,
    config: EngineConfig,
    shared: Option<Dynamics>,
}

impl Simulator {
    pub fn new(spec: &ModelSpec, config: &EngineConfig) -> Result<Self> {
        spec.validate()?;
        config.validate(spec)?;
        let shared = if spec.disorder_varies_per_trajectory() {
            None
        } else {
            Some(Dynamics::new(spec, config.dt)?)
        };
        Ok(Self { spec: spec.clone(), config: config.clone(), shared })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Records of trajectory `index`, or the error tagged with the index.
    pub fn run_trajectory(&self, initial: &InitialState, index: u64) -> Result<Vec<TrajectoryRecord>> {
        self.run_trajectory_inner(initial, index)
            .map_err(|e| Error::TrajectoryFailed { index, source: Box::new(e) })
    }

    fn run_trajectory_inner(&self, initial: &InitialState, index: u64) -> Result<Vec<TrajectoryRecord>> {
        let own;
        let dynamics = match &self.shared {
            Some(d) => d,
            None => {
                own = Dynamics::new(&self.spec.for_trajectory(index), self.config.dt)?;
                &own
            }
        };
        let mut rng = trajectory_rng(self.config.seed, index);
        let psi0 = initial.prepare(&dynamics.spec, &dynamics.matrices, &mut rng)?;
        let mut traj = Trajectory::new(dynamics, psi0, rng)?;
        let steps = self.config.steps();
        let every = self.config.record_every;
        let mut records = Vec::with_capacity(steps / every + 1);
        records.push(traj.record(&self.config.observables)?);
        for k in 1..=steps {
            traj.advance()?;
            if k % every == 0 {
                records.push(traj.record(&self.config.observables)?);
            }
        }
        Ok(records)
    }
}

/// One trajectory from scratch.
pub fn run_trajectory(
    spec: &ModelSpec,
    config: &EngineConfig,
    initial: &InitialState,
    index: u64,
) -> Result<Vec<TrajectoryRecord>> {
    Simulator::new(spec, config)?.run_trajectory(initial, index)
}

/// Column names of the flattened record, in output order.
pub fn record_columns(flags: &ObservableFlags, sites: usize) -> Vec<String> {
    let mut cols = Vec::new();
    if flags.entropy {
        cols.push("S_half".into());
    }
    if flags.f_skin {
        cols.push("f_skin".into());
    }
    if flags.f_r {
        cols.push("f_r".into());
    }
    if flags.mutual_information {
        cols.push("I_AB".into());
    }
    if flags.velocity {
        cols.push("v".into());
    }
    cols.push("jumps".into());
    if flags.density {
        cols.extend((1..=sites).map(|l| format!("n_{l}")));
    }
    if flags.correlation {
        cols.extend((1..=correlation_pairs(sites).len()).map(|l| format!("C_{l}")));
    }
    if flags.momentum {
        let start = -((sites / 2) as i64);
        cols.extend((0..sites as i64).map(|m| format!("nk_{}", start + m)));
    }
    cols
}

impl TrajectoryRecord {
    /// Values in [`record_columns`] order. Disabled observables are skipped.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.s_half);
        out.extend(self.f_skin);
        out.extend(self.f_r);
        out.extend(self.mutual_information);
        out.extend(self.velocity);
        out.push(self.jump_count as f64);
        for v in [&self.density, &self.correlation, &self.momentum].into_iter().flatten() {
            out.extend_from_slice(v);
        }
        out
    }
}

/// Trajectory-averaged series. `mean[c][k]` is column `c` at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub sites: usize,
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub n_trajectories: usize,
}

impl EnsembleSeries {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn mean_of(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|c| self.mean[c].as_slice())
    }

    pub fn se_of(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|c| self.se[c].as_slice())
    }

    pub fn t_over_l(&self) -> Vec<f64> {
        self.times.iter().map(|t| t / self.sites as f64).collect()
    }

    /// Trajectory-averaged density profile at time index `k`.
    pub fn density_at(&self, k: usize) -> Option<Vec<f64>> {
        (1..=self.sites)
            .map(|l| self.mean_of(&format!("n_{l}")).map(|c| c[k]))
            .collect()
    }

    /// Index of the recorded time closest to `t`.
    pub fn nearest_time_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }
}

/// Welford accumulator fed in trajectory-index order, so the result does not
/// depend on how trajectories were scheduled.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    sites: usize,
    columns: Vec<String>,
    times: Vec<f64>,
    count: usize,
    mean: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
}

impl EnsembleAccumulator {
    pub fn new(sites: usize, flags: &ObservableFlags) -> Self {
        Self {
            sites,
            columns: record_columns(flags, sites),
            times: Vec::new(),
            count: 0,
            mean: Vec::new(),
            m2: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, records: &[TrajectoryRecord]) -> Result<()> {
        let ncol = self.columns.len();
        if self.count == 0 {
            self.times = records.iter().map(|r| r.t).collect();
            self.mean = vec![vec![0.0; records.len()]; ncol];
            self.m2 = vec![vec![0.0; records.len()]; ncol];
        } else if records.len() != self.times.len() {
            return Err(Error::DimensionMismatch(format!(
                "trajectory has {} records, ensemble grid has {}",
                records.len(),
                self.times.len()
            )));
        }
        self.count += 1;
        let n = self.count as f64;
        for (k, r) in records.iter().enumerate() {
            let row = r.flatten();
            if row.len() != ncol {
                return Err(Error::DimensionMismatch(format!(
                    "record has {} values, expected {ncol}",
                    row.len()
                )));
            }
            for (c, x) in row.into_iter().enumerate() {
                let delta = x - self.mean[c][k];
                self.mean[c][k] += delta / n;
                self.m2[c][k] += delta * (x - self.mean[c][k]);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<EnsembleSeries> {
        if self.count == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one trajectory".into()));
        }
        let n = self.count as f64;
        let se = self
            .m2
            .iter()
            .map(|col| {
                col.iter()
                    .map(|&m2| if self.count > 1 { (m2 / (n - 1.0) / n).max(0.0).sqrt() } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(EnsembleSeries {
            sites: self.sites,
            times: self.times,
            columns: self.columns,
            mean: self.mean,
            se,
            n_trajectories: self.count,
        })
    }
}

/// Sequential ensemble over trajectory indices `0..n_traj`.
pub fn run_ensemble(
    spec: &ModelSpec,
    config: &EngineConfig,
    initial: &InitialState,
    n_traj: usize,
) -> Result<EnsembleSeries> {
    if n_traj == 0 {
        return Err(Error::InvalidConfig("n_traj must be >= 1".into()));
    }
    let sim = Simulator::new(spec, config)?;
    let mut acc = EnsembleAccumulator::new(spec.sites, &config.observables);
    for index in 0..n_traj as u64 {
        acc.push(&sim.run_trajectory(initial, index)?)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Boundary;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn dynamics(l: usize) -> Dynamics {
        Dynamics::new(&ModelSpec::new(l), DEFAULT_DT).unwrap()
    }

    #[test]
    fn jump_on_a_mode_emptied_earlier_in_the_step_is_dropped() {
        let d = dynamics(6);
        // one particle shared between sites 1 and 4
        let mut u = Mat::<c64>::zeros(6, 1);
        u[(1, 0)] = c64::new(FRAC_1_SQRT_2, 0.0);
        u[(4, 0)] = c64::new(FRAC_1_SQRT_2, 0.0);
        assert!(d.modes[3].occupation(u.as_ref()) > 0.2);
        let applied = apply_jumps(&mut u, &d, vec![0, 3]).unwrap();
        assert_eq!(applied, vec![0]);
        let weight = u[(0, 0)].norm_sqr() + u[(1, 0)].norm_sqr();
        assert!((weight - 1.0).abs() < 1e-12);
        // in the other order the first jump collapses onto bond 3
        let mut u2 = Mat::<c64>::zeros(6, 1);
        u2[(1, 0)] = c64::new(FRAC_1_SQRT_2, 0.0);
        u2[(4, 0)] = c64::new(FRAC_1_SQRT_2, 0.0);
        assert_eq!(apply_jumps(&mut u2, &d, vec![3, 0]).unwrap(), vec![3]);
    }

    #[test]
    fn propagator_of_zero_is_identity() {
        let k = make_propagator(Mat::<c64>::zeros(4, 4).as_ref(), 0.05).unwrap();
        assert!(linalg::max_abs((&k - Mat::<c64>::identity(4, 4)).as_ref()) == 0.0);
    }

    #[test]
    fn unmonitored_propagator_is_unitary() {
        let d = Dynamics::new(&ModelSpec::new(10).with_gamma(0.0).with_quasiperiodic(1.3), 0.05).unwrap();
        let k = &d.propagator;
        let defect = k.adjoint() * k - Mat::<c64>::identity(10, 10);
        assert!(linalg::max_abs(defect.as_ref()) < 1e-13);
    }

    #[test]
    fn two_site_propagator_matches_eigendecomposition() {
        let d = dynamics(2);
        let h = &d.matrices.h_eff;
        let e = h.eigen().unwrap();
        let v = e.U();
        let s = e.S();
        let vinv = linalg::inverse(v);
        let diag = Mat::from_fn(2, 2, |i, j| {
            if i == j {
                (c64::new(0.0, -0.05) * s[i]).exp()
            } else {
                ZERO
            }
        });
        let k = v * diag * vinv;
        assert!(linalg::max_abs((&k - &d.propagator).as_ref()) < 1e-12);
    }

    #[test]
    fn propagator_is_a_contraction() {
        let d = Dynamics::new(&ModelSpec::new(12).with_boundary(Boundary::Periodic), 0.05).unwrap();
        let sv = d.propagator.singular_values().unwrap();
        assert!(sv[0] <= 1.0 + 1e-8);
    }

    #[test]
    fn neel_jump_probabilities_are_half() {
        let d = dynamics(8);
        let p = jump_probabilities(&state::neel_state(8).unwrap(), &d);
        assert_eq!(p.len(), 7);
        for x in p {
            assert!((x - 0.5 * 0.5 * 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn full_chain_probability_is_gamma_dt() {
        let d = dynamics(6);
        let full = state::fock_state(6, &[0, 1, 2, 3, 4, 5]).unwrap();
        for x in jump_probabilities(&full, &d) {
            assert!((x - 0.025).abs() < 1e-15);
        }
    }

    #[test]
    fn vacuum_never_jumps() {
        let d = dynamics(5);
        let vac = state::fock_state(5, &[]).unwrap();
        let mut rng = trajectory_rng(1, 0);
        for _ in 0..200 {
            assert!(sample_jumps(&vac, &d, &mut rng).is_empty());
        }
    }

    #[test]
    fn jump_on_localized_particle_splits_it() {
        let d = dynamics(4);
        let s = state::fock_state(4, &[1]).unwrap();
        let after = apply_jump(&s, &d, 1).unwrap();
        let n = after.density();
        assert!((n[1] - 0.5).abs() < 1e-14 && (n[2] - 0.5).abs() < 1e-14);
        assert!(n[0].abs() < 1e-14 && n[3].abs() < 1e-14);
        // theta = pi flips the relative sign: d^dag -> (c_2^dag + i c_3^dag)/sqrt2.
        let u = after.orbitals();
        let ratio = u[(2, 0)] / u[(1, 0)];
        assert!((ratio - c64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((u[(1, 0)].norm() - FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn jump_far_from_particle_is_rejected() {
        let d = dynamics(5);
        let s = state::fock_state(5, &[3]).unwrap();
        assert_eq!(apply_jump(&s, &d, 1).unwrap_err(), Error::ZeroAmplitudeJump { bond: 1 });
    }

    #[test]
    fn full_chain_is_jump_eigenstate() {
        let d = dynamics(5);
        let full = state::fock_state(5, &[0, 1, 2, 3, 4]).unwrap();
        for b in 0..4 {
            let after = apply_jump(&full, &d, b).unwrap();
            assert!(after.density().iter().all(|x| (x - 1.0).abs() < 1e-13));
            assert!((after.overlap_probability(&full).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn rotation_and_pivot_jumps_give_the_same_ray() {
        let spec = ModelSpec::new(8).with_quasiperiodic(0.9);
        let d = Dynamics::new(&spec, 0.05).unwrap();
        let mut rng = trajectory_rng(3, 0);
        let mut traj = Trajectory::new(&d, state::neel_state(8).unwrap(), rng.clone()).unwrap();
        for _ in 0..40 {
            traj.advance().unwrap();
        }
        let s = traj.state().clone();
        for b in 0..7 {
            let pivot = apply_jump(&s, &d, b).unwrap();
            let mut u = s.orbitals().to_owned();
            apply_jump_rotation(&mut u, &d.modes[b], spec.theta).unwrap();
            let rot = SlaterState::from_orbitals(u).unwrap();
            assert!(rot.orthonormality_defect() < 1e-13);
            assert!((rot.overlap_probability(&pivot).unwrap() - 1.0).abs() < 1e-12);
        }
        let _ = next_uniform(&mut rng);
    }

    #[test]
    fn zero_time_gives_single_record() {
        let spec = ModelSpec::new(6);
        let cfg = EngineConfig::new(0.0, 1);
        let rec = run_trajectory(&spec, &cfg, &InitialState::Neel, 0).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec[0].t, 0.0);
        assert_eq!(rec[0].f_r, Some(1.0));
        assert_eq!(rec[0].density.as_deref(), Some(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0][..]));
    }

    #[test]
    fn rejects_large_gamma_dt() {
        let spec = ModelSpec::new(6).with_gamma(20.0);
        assert!(matches!(
            EngineConfig::new(1.0, 0).validate(&spec),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn single_trajectory_ensemble_has_zero_error() {
        let spec = ModelSpec::new(8);
        let cfg = EngineConfig::new(2.0, 11).with_records(10);
        let rec = run_trajectory(&spec, &cfg, &InitialState::Neel, 0).unwrap();
        let ens = run_ensemble(&spec, &cfg, &InitialState::Neel, 1).unwrap();
        assert_eq!(ens.times.len(), 11);
        for (k, r) in rec.iter().enumerate() {
            for (c, x) in r.flatten().into_iter().enumerate() {
                assert_eq!(ens.mean[c][k], x);
                assert_eq!(ens.se[c][k], 0.0);
            }
        }
    }

    #[test]
    fn trajectories_are_reproducible_and_distinct() {
        let spec = ModelSpec::new(10);
        let cfg = EngineConfig::new(5.0, 99).with_records(5);
        let a = run_trajectory(&spec, &cfg, &InitialState::Neel, 4).unwrap();
        let b = run_trajectory(&spec, &cfg, &InitialState::Neel, 4).unwrap();
        let c = run_trajectory(&spec, &cfg, &InitialState::Neel, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unmonitored_evolution_conserves_energy() {
        let spec = ModelSpec::new(10).with_gamma(0.0).with_quasiperiodic(0.5);
        let d = Dynamics::new(&spec, 0.05).unwrap();
        let energy = |s: &SlaterState| {
            let c = s.correlation_matrix().c;
            let h = &d.matrices.h;
            let mut e = 0.0;
            for i in 0..10 {
                for j in 0..10 {
                    e += (h[(i, j)] * c[(i, j)]).re;
                }
            }
            e
        };
        let mut traj = Trajectory::new(&d, state::neel_state(10).unwrap(), trajectory_rng(0, 0)).unwrap();
        let e0 = energy(traj.state());
        for _ in 0..1000 {
            traj.advance().unwrap();
        }
        assert_eq!(traj.jump_count(), 0);
        assert!((energy(traj.state()) - e0).abs() < 1e-8);
    }
}
