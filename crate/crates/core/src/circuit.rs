//! Statevector simulation of the qubit-circuit realization.
//!
//! Qubit `q` (0-based) is bit `q` of the basis label. A set bit is a down
//! spin, read as an occupied site, and measures `nu = -1`.
//!
//! One module: XX+YY gates on bonds `(0,1), (2,3), ...`, then on
//! `(1,2), (3,4), ...`, then optional Z rotations, then for every qubit in
//! ascending order a measurement with probability `p`. A down outcome on
//! qubit `q > 0` triggers SWAP then CZ on `(q-1, q)`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use faer::Mat;
use rand::Rng;

use crate::engine::next_uniform;
use crate::error::{Error, Result};
use crate::linalg::{c64, ZERO};

pub const MAX_CIRCUIT_QUBITS: usize = 20;
/// Entropy needs a dense Schmidt decomposition.
pub const MAX_ENTROPY_QUBITS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct QubitRegister {
    qubits: usize,
    amplitudes: Vec<c64>,
}

impl QubitRegister {
    /// Computational basis state with the listed qubits down.
    pub fn from_down(qubits: usize, down: &[usize]) -> Result<Self> {
        if qubits == 0 || qubits > MAX_CIRCUIT_QUBITS {
            return Err(Error::InvalidState(format!(
                "register of {qubits} qubits outside 1..={MAX_CIRCUIT_QUBITS}"
            )));
        }
        let mut mask = 0usize;
        for &q in down {
            if q >= qubits {
                return Err(Error::InvalidState(format!("qubit {q} outside register of {qubits}")));
            }
            mask |= 1 << q;
        }
        let mut amplitudes = vec![ZERO; 1 << qubits];
        amplitudes[mask] = c64::new(1.0, 0.0);
        Ok(Self { qubits, amplitudes })
    }

    /// Neel start: X on every second qubit, counting from one.
    pub fn neel(qubits: usize) -> Result<Self> {
        let down: Vec<usize> = (1..qubits).step_by(2).collect();
        Self::from_down(qubits, &down)
    }

    pub fn from_amplitudes(qubits: usize, amplitudes: Vec<c64>) -> Result<Self> {
        if qubits == 0 || qubits > MAX_CIRCUIT_QUBITS || amplitudes.len() != 1 << qubits {
            return Err(Error::InvalidState(format!(
                "{} amplitudes do not describe {qubits} qubits",
                amplitudes.len()
            )));
        }
        let reg = Self { qubits, amplitudes };
        if (reg.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("register norm {} is not 1", reg.norm())));
        }
        Ok(reg)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[c64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Probability that each qubit is down.
    pub fn down_probabilities(&self) -> Vec<f64> {
        let mut n = vec![0.0; self.qubits];
        for (m, z) in self.amplitudes.iter().enumerate() {
            let w = z.norm_sqr();
            for (q, nq) in n.iter_mut().enumerate() {
                if m & (1 << q) != 0 {
                    *nq += w;
                }
            }
        }
        n
    }

    /// `sum_m |psi_m|^2 popcount(m)`.
    pub fn down_count(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(m, z)| z.norm_sqr() * m.count_ones() as f64)
            .sum()
    }

    /// `exp(-i dt (XX + YY))` on qubits `a`, `a + 1`.
    pub fn apply_hop(&mut self, a: usize, dt: f64) {
        let (c, s) = ((2.0 * dt).cos(), (2.0 * dt).sin());
        let lo = 1usize << a;
        let hi = 1usize << (a + 1);
        for m in 0..self.amplitudes.len() {
            if m & lo != 0 && m & hi == 0 {
                let n = m ^ lo ^ hi;
                let (x, y) = (self.amplitudes[m], self.amplitudes[n]);
                self.amplitudes[m] = x * c - c64::new(0.0, s) * y;
                self.amplitudes[n] = y * c - c64::new(0.0, s) * x;
            }
        }
    }

    /// `exp(-i phi Z)` on qubit `q`.
    pub fn apply_z_rotation(&mut self, q: usize, phi: f64) {
        let up = c64::from_polar(1.0, -phi);
        let down = c64::from_polar(1.0, phi);
        for (m, z) in self.amplitudes.iter_mut().enumerate() {
            *z *= if m & (1 << q) != 0 { down } else { up };
        }
    }

    pub fn apply_swap(&mut self, a: usize, b: usize) {
        let (ba, bb) = (1usize << a, 1usize << b);
        for m in 0..self.amplitudes.len() {
            if m & ba != 0 && m & bb == 0 {
                self.amplitudes.swap(m, m ^ ba ^ bb);
            }
        }
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let both = (1usize << a) | (1usize << b);
        for (m, z) in self.amplitudes.iter_mut().enumerate() {
            if m & both == both {
                *z = -*z;
            }
        }
    }

    /// SWAP then CZ on `(q - 1, q)`.
    pub fn apply_feedback(&mut self, q: usize) {
        self.apply_swap(q - 1, q);
        self.apply_cz(q - 1, q);
    }

    /// Projects qubit `q` onto the given outcome and renormalizes.
    pub fn project(&mut self, q: usize, down: bool) -> Result<()> {
        let bit = 1usize << q;
        let mut w = 0.0;
        for (m, z) in self.amplitudes.iter_mut().enumerate() {
            if (m & bit != 0) != down {
                *z = ZERO;
            } else {
                w += z.norm_sqr();
            }
        }
        if w <= 0.0 {
            return Err(Error::InvalidState(format!("projection of qubit {q} has zero weight")));
        }
        let s = 1.0 / w.sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    /// Measures qubit `q` in the Z basis; returns true for down.
    pub fn measure<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> Result<bool> {
        let bit = 1usize << q;
        let p_down: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(m, _)| m & bit != 0)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        let down = next_uniform(rng) < p_down;
        self.project(q, down)?;
        Ok(down)
    }

    /// Samples a full Z-basis readout without disturbing the register.
    pub fn sample_readout<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i8> {
        let u = next_uniform(rng);
        let mut acc = 0.0;
        let mut pick = None;
        for (m, z) in self.amplitudes.iter().enumerate() {
            let w = z.norm_sqr();
            if w > 0.0 {
                acc += w;
                pick = Some(m);
                if u < acc {
                    break;
                }
            }
        }
        let m = pick.unwrap_or(0);
        (0..self.qubits).map(|q| if m & (1 << q) != 0 { -1 } else { 1 }).collect()
    }
}

/// Normalization of the two-qubit gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateConvention {
    /// `exp(-i dt (XX + YY))`, rotation angle `2 dt` in the one-excitation block.
    #[default]
    Pauli,
    /// `exp(-i dt (XX + YY)/2)`, i.e. unit fermion hopping for time `dt`.
    Hopping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitConfig {
    pub delta_t: f64,
    pub convention: GateConvention,
    pub p: f64,
    pub modules: usize,
    pub w: f64,
    pub alpha: f64,
    pub shots: usize,
}

impl CircuitConfig {
    pub fn new(delta_t: f64, p: f64, modules: usize, shots: usize) -> Self {
        Self {
            delta_t,
            convention: GateConvention::Pauli,
            p,
            modules,
            w: 0.0,
            alpha: (5f64.sqrt() - 1.0) / 2.0,
            shots,
        }
    }

    pub fn with_convention(mut self, convention: GateConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_quasiperiodic(mut self, w: f64, alpha: f64) -> Self {
        self.w = w;
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidConfig(format!("p = {} outside [0, 1]", self.p)));
        }
        if self.shots == 0 {
            return Err(Error::InvalidConfig("shots must be at least 1".into()));
        }
        if !self.delta_t.is_finite() || !self.w.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig("circuit parameters must be finite".into()));
        }
        Ok(())
    }
}

/// One module; returns how many feedback operations fired.
pub fn apply_module<R: Rng + ?Sized>(
    register: &mut QubitRegister,
    config: &CircuitConfig,
    rng: &mut R,
) -> Result<usize> {
    let n = register.qubits;
    let angle = match config.convention {
        GateConvention::Pauli => config.delta_t,
        GateConvention::Hopping => config.delta_t / 2.0,
    };
    for a in (0..n.saturating_sub(1)).step_by(2) {
        register.apply_hop(a, angle);
    }
    for a in (1..n.saturating_sub(1)).step_by(2) {
        register.apply_hop(a, angle);
    }
    if config.w != 0.0 {
        for q in 0..n {
            let site = (q + 1) as f64;
            let phi = config.delta_t * config.w * (2.0 * PI * config.alpha * site).cos();
            register.apply_z_rotation(q, phi);
        }
    }
    let mut fired = 0;
    for q in 0..n {
        if next_uniform(rng) >= config.p {
            continue;
        }
        if register.measure(q, rng)? && q > 0 {
            register.apply_feedback(q);
            fired += 1;
        }
    }
    Ok(fired)
}

/// Runs `config.modules` modules from `initial` and reads out every qubit.
pub fn run_circuit_shot<R: Rng + ?Sized>(
    config: &CircuitConfig,
    initial: &QubitRegister,
    rng: &mut R,
) -> Result<Vec<i8>> {
    config.validate()?;
    let mut reg = initial.clone();
    for _ in 0..config.modules {
        apply_module(&mut reg, config, rng)?;
    }
    Ok(reg.sample_readout(rng))
}

/// State of one shot at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSample {
    pub readout: Vec<i8>,
    /// Half-chain entropy of the register, when small enough to compute.
    pub entropy: Option<f64>,
}

/// Samples after each listed module count (ascending) along one shot.
///
/// Each readout is sampled from a copy, so every entry has the statistics of
/// an independent shot stopped at that module count.
pub fn run_circuit_series<R: Rng + ?Sized>(
    config: &CircuitConfig,
    initial: &QubitRegister,
    checkpoints: &[usize],
    rng: &mut R,
) -> Result<Vec<CircuitSample>> {
    config.validate()?;
    if checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("checkpoints must be ascending".into()));
    }
    let mut reg = initial.clone();
    let mut done = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        while done < c {
            apply_module(&mut reg, config, rng)?;
            done += 1;
        }
        let entropy = if reg.qubits <= MAX_ENTROPY_QUBITS {
            Some(circuit_entropy(&reg, reg.qubits / 2)?)
        } else {
            None
        };
        out.push(CircuitSample { readout: reg.sample_readout(rng), entropy });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotEstimate {
    /// Mean of `nu_l` over shots.
    pub spin: Vec<f64>,
    pub f_skin: f64,
    pub shots: usize,
}

impl ShotEstimate {
    /// Mean occupation `(1 - nu)/2`.
    pub fn occupation(&self) -> Vec<f64> {
        self.spin.iter().map(|s| (1.0 - s) / 2.0).collect()
    }
}

/// Whether a readout is all down spins followed by all up spins.
pub fn is_skin_pattern(record: &[i8]) -> bool {
    let downs = record.iter().filter(|&&v| v < 0).count();
    record.iter().enumerate().all(|(q, &v)| (q < downs) == (v < 0))
}

pub fn estimate_from_shots(records: &[Vec<i8>]) -> Result<ShotEstimate> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidConfig("no shot records".into()))?;
    let l = first.len();
    if records.iter().any(|r| r.len() != l) {
        return Err(Error::DimensionMismatch("shot records differ in length".into()));
    }
    let n = records.len() as f64;
    let mut spin = vec![0.0; l];
    let mut skin = 0usize;
    for r in records {
        for (s, &v) in spin.iter_mut().zip(r) {
            *s += v as f64;
        }
        if is_skin_pattern(r) {
            skin += 1;
        }
    }
    spin.iter_mut().for_each(|s| *s /= n);
    Ok(ShotEstimate { spin, f_skin: skin as f64 / n, shots: records.len() })
}

/// Von Neumann entropy of qubits `0..cut`.
pub fn circuit_entropy(register: &QubitRegister, cut: usize) -> Result<f64> {
    let n = register.qubits;
    if n > MAX_ENTROPY_QUBITS {
        return Err(Error::SectorTooLarge(format!(
            "entropy of {n} qubits exceeds the limit {MAX_ENTROPY_QUBITS}"
        )));
    }
    if cut > n {
        return Err(Error::InvalidState(format!("cut {cut} beyond {n} qubits")));
    }
    if cut == 0 || cut == n {
        return Ok(0.0);
    }
    let rows = 1usize << cut;
    let psi = Mat::from_fn(rows, 1 << (n - cut), |a, b| register.amplitudes[a | (b << cut)]);
    let sv = psi
        .singular_values()
        .map_err(|e| Error::Eigen(format!("Schmidt decomposition: {e:?}")))?;
    Ok(sv
        .iter()
        .map(|s| s * s)
        .filter(|&p| p > 1e-300)
        .map(|p| -p * p.ln())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::trajectory_rng;
    use crate::linalg;
    use crate::state;

    #[test]
    fn identity_module() {
        let cfg = CircuitConfig::new(0.0, 0.0, 1, 1);
        let mut reg = QubitRegister::neel(6).unwrap();
        let before = reg.clone();
        apply_module(&mut reg, &cfg, &mut trajectory_rng(1, 0)).unwrap();
        assert_eq!(reg, before);
    }

    #[test]
    fn unitary_modules_conserve_norm_and_magnetization() {
        let cfg = CircuitConfig::new(0.37, 0.0, 1000, 1).with_quasiperiodic(1.3, 0.618);
        let mut reg = QubitRegister::neel(8).unwrap();
        let mut rng = trajectory_rng(2, 0);
        for _ in 0..cfg.modules {
            apply_module(&mut reg, &cfg, &mut rng).unwrap();
        }
        assert!((reg.norm() - 1.0).abs() < 1e-10);
        assert!((reg.down_count() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn feedback_on_two_qubits_by_hand() {
        // |up down> (qubit 1 down) -> SWAP -> |down up> -> CZ leaves it alone
        let mut reg = QubitRegister::from_down(2, &[1]).unwrap();
        reg.apply_feedback(1);
        assert_eq!(reg.amplitudes()[0b01], c64::new(1.0, 0.0));
        // |down down> picks up a sign
        let mut reg = QubitRegister::from_down(2, &[0, 1]).unwrap();
        reg.apply_feedback(1);
        assert_eq!(reg.amplitudes()[0b11], c64::new(-1.0, 0.0));
    }

    #[test]
    fn forced_measurement_moves_down_spin_left() {
        let cfg = CircuitConfig::new(0.0, 1.0, 1, 1);
        let mut reg = QubitRegister::from_down(6, &[4]).unwrap();
        let fired = apply_module(&mut reg, &cfg, &mut trajectory_rng(3, 0)).unwrap();
        assert_eq!(fired, 1);
        assert!((reg.amplitudes()[1 << 3].norm() - 1.0).abs() < 1e-14);
        // qubit 0 never receives feedback
        let mut reg = QubitRegister::from_down(6, &[0]).unwrap();
        assert_eq!(apply_module(&mut reg, &cfg, &mut trajectory_rng(3, 1)).unwrap(), 0);
        assert!((reg.amplitudes()[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hopping_convention_halves_the_gate_angle() {
        let init = QubitRegister::from_down(4, &[1]).unwrap();
        let mut a = init.clone();
        let mut b = init.clone();
        apply_module(&mut a, &CircuitConfig::new(0.3, 0.0, 1, 1), &mut trajectory_rng(0, 0)).unwrap();
        let cfg = CircuitConfig::new(0.6, 0.0, 1, 1).with_convention(GateConvention::Hopping);
        apply_module(&mut b, &cfg, &mut trajectory_rng(0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_modules_reads_out_neel() {
        let cfg = CircuitConfig::new(0.5, 0.7, 0, 1);
        let rec = run_circuit_shot(&cfg, &QubitRegister::neel(6).unwrap(), &mut trajectory_rng(0, 0)).unwrap();
        assert_eq!(rec, vec![1, -1, 1, -1, 1, -1]);
    }

    #[test]
    fn readouts_conserve_down_count() {
        let cfg = CircuitConfig::new(0.5, 0.7, 20, 1);
        let init = QubitRegister::neel(8).unwrap();
        for shot in 0..20 {
            let rec = run_circuit_shot(&cfg, &init, &mut trajectory_rng(5, shot)).unwrap();
            assert_eq!(rec.iter().filter(|&&v| v < 0).count(), 4);
        }
    }

    #[test]
    fn estimators() {
        let skin = vec![-1, -1, 1, 1];
        let est = estimate_from_shots(&[skin.clone(), skin.clone()]).unwrap();
        assert_eq!(est.f_skin, 1.0);
        assert_eq!(est.spin, vec![-1.0, -1.0, 1.0, 1.0]);
        let est = estimate_from_shots(&[vec![1, -1, 1, -1]]).unwrap();
        assert_eq!(est.f_skin, 0.0);
        assert!(est.spin.iter().all(|v| v.abs() == 1.0));
        assert!(estimate_from_shots(&[]).is_err());
    }

    #[test]
    fn entropy_of_product_and_bell_states() {
        let reg = QubitRegister::neel(4).unwrap();
        assert_eq!(circuit_entropy(&reg, 2).unwrap(), 0.0);
        let h = c64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut amp = vec![ZERO; 16];
        amp[0b0010] = h;
        amp[0b0100] = h;
        let bell = QubitRegister::from_amplitudes(4, amp).unwrap();
        assert!((circuit_entropy(&bell, 2).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(circuit_entropy(&QubitRegister::neel(16).unwrap(), 8).is_err());
    }

    fn layer(sites: usize, start: usize, dt: f64) -> Mat<c64> {
        let mut h = Mat::<c64>::zeros(sites, sites);
        for a in (start..sites - 1).step_by(2) {
            h[(a, a + 1)] = c64::new(2.0 * dt, 0.0);
            h[(a + 1, a)] = c64::new(2.0 * dt, 0.0);
        }
        let minus_i = Mat::from_fn(sites, sites, |i, j| c64::new(0.0, -1.0) * h[(i, j)]);
        linalg::expm(minus_i.as_ref()).unwrap()
    }

    #[test]
    fn single_particle_transfer_matches_trotter_product() {
        let (l, dt, modules) = (8, 0.3, 7);
        let cfg = CircuitConfig::new(dt, 0.0, modules, 1);
        let step = &layer(l, 1, dt) * &layer(l, 0, dt);
        let mut total = Mat::<c64>::identity(l, l);
        for _ in 0..modules {
            total = &step * &total;
        }
        for i in 0..l {
            let mut reg = QubitRegister::from_down(l, &[i]).unwrap();
            let mut rng = trajectory_rng(0, 0);
            for _ in 0..modules {
                apply_module(&mut reg, &cfg, &mut rng).unwrap();
            }
            for j in 0..l {
                let p = reg.amplitudes()[1 << j].norm_sqr();
                assert!((p - total[(j, i)].norm_sqr()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unitary_circuit_entropy_matches_gaussian_state() {
        let (l, dt) = (10, 0.4);
        let cfg = CircuitConfig::new(dt, 0.0, 1, 1);
        let mut reg = QubitRegister::neel(l).unwrap();
        let mut slater = state::neel_state(l).unwrap();
        let step = &layer(l, 1, dt) * &layer(l, 0, dt);
        let mut rng = trajectory_rng(0, 0);
        for _ in 0..6 {
            apply_module(&mut reg, &cfg, &mut rng).unwrap();
            slater = state::SlaterState::from_orbitals(&step * slater.orbitals()).unwrap();
            for cut in [3, 5] {
                let sub: Vec<usize> = (0..cut).collect();
                let s = slater.entanglement_entropy(&sub).unwrap();
                assert!((circuit_entropy(&reg, cut).unwrap() - s).abs() < 1e-9);
            }
            let n = slater.density();
            for (a, b) in reg.down_probabilities().iter().zip(&n) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
