//! Brute-force many-body representation in a fixed particle-number sector.
//!
//! Basis states are occupation bitmasks (bit `i` = site `i` occupied) in
//! ascending numeric order; `|mask> = c_{i1}^dag c_{i2}^dag ... |0>` with
//! `i1 < i2 < ...`. Used as an independent reference for the Gaussian code
//! and as the substrate of the Liouvillian.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use faer::{Mat, MatRef};
use rand_chacha::ChaCha20Rng;

use crate::engine::{next_uniform, EMPTY_MODE_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ONE, ZERO};
use crate::model::{self, ModelSpec};
use crate::state::SlaterState;

/// Largest chain the bitmask basis accepts.
pub const MAX_FOCK_SITES: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    sites: usize,
    particles: usize,
    states: Vec<u64>,
}

impl FockBasis {
    pub fn sector(sites: usize, particles: usize) -> Result<Self> {
        if sites > MAX_FOCK_SITES {
            return Err(Error::SectorTooLarge(format!(
                "L = {sites} exceeds the Fock-space limit {MAX_FOCK_SITES}"
            )));
        }
        if particles > sites {
            return Err(Error::InvalidState(format!("N = {particles} exceeds L = {sites}")));
        }
        let states = (0u64..1 << sites)
            .filter(|m| m.count_ones() as usize == particles)
            .collect();
        Ok(Self { sites, particles, states })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, mask: u64) -> Option<usize> {
        self.states.binary_search(&mask).ok()
    }

    /// Basis vector of an occupation pattern.
    pub fn fock_vector(&self, occupied: &[usize]) -> Result<Vec<c64>> {
        let mask = occupied.iter().fold(0u64, |m, &i| m | 1 << i);
        let k = self
            .index_of(mask)
            .ok_or_else(|| Error::InvalidState("occupation not in this sector".into()))?;
        let mut v = vec![ZERO; self.dim()];
        v[k] = ONE;
        Ok(v)
    }

    /// Matrix of `sum_ij a_ij c_i^dag c_j` in this sector.
    pub fn quadratic_operator(&self, a: MatRef<'_, c64>) -> Mat<c64> {
        let d = self.dim();
        let mut op = Mat::<c64>::zeros(d, d);
        for (col, &mask) in self.states.iter().enumerate() {
            for j in 0..self.sites {
                if mask & (1 << j) == 0 {
                    continue;
                }
                let (s1, m1) = annihilate(mask, j);
                for i in 0..self.sites {
                    let amp = a[(i, j)];
                    if amp == ZERO || m1 & (1 << i) != 0 {
                        continue;
                    }
                    let (s2, m2) = create(m1, i);
                    let row = self.index_of(m2).expect("number conserving");
                    op[(row, col)] += amp * (s1 * s2);
                }
            }
        }
        op
    }

    /// Diagonal of `f(mask)` as a matrix.
    pub fn diagonal_operator(&self, f: impl Fn(u64) -> c64) -> Mat<c64> {
        let d = self.dim();
        let mut op = Mat::<c64>::zeros(d, d);
        for (k, &m) in self.states.iter().enumerate() {
            op[(k, k)] = f(m);
        }
        op
    }

    /// Amplitudes of a Slater state: minors of `U` on the occupied rows.
    pub fn slater_amplitudes(&self, state: &SlaterState) -> Result<Vec<c64>> {
        if state.sites() != self.sites || state.particles() != self.particles {
            return Err(Error::DimensionMismatch(format!(
                "state (L={}, N={}) vs basis (L={}, N={})",
                state.sites(),
                state.particles(),
                self.sites,
                self.particles
            )));
        }
        let u = state.orbitals();
        Ok(self
            .states
            .iter()
            .map(|&mask| {
                let rows: Vec<usize> = (0..self.sites).filter(|i| mask & (1 << i) != 0).collect();
                let minor = Mat::from_fn(rows.len(), rows.len(), |r, c| u[(rows[r], c)]);
                linalg::det(minor.as_ref())
            })
            .collect())
    }

    /// Von Neumann entropy of the fermionic reduced state on `subsystem`.
    pub fn entanglement_entropy(&self, psi: &[c64], subsystem: &[usize]) -> Result<f64> {
        let a_mask = subsystem.iter().fold(0u64, |m, &i| m | 1 << i);
        let b_mask = ((1u64 << self.sites) - 1) & !a_mask;
        let mut rows: BTreeMap<u64, usize> = BTreeMap::new();
        let mut cols: BTreeMap<u64, usize> = BTreeMap::new();
        for &m in &self.states {
            let nr = rows.len();
            rows.entry(m & a_mask).or_insert(nr);
            let nc = cols.len();
            cols.entry(m & b_mask).or_insert(nc);
        }
        let mut mat = Mat::<c64>::zeros(rows.len(), cols.len());
        for (k, &m) in self.states.iter().enumerate() {
            // Reordering to (A operators)(B operators) costs one sign per
            // occupied B site preceding an occupied A site.
            let mut swaps = 0u32;
            for a in 0..self.sites {
                if m & a_mask & (1 << a) != 0 {
                    swaps += (m & b_mask & ((1u64 << a) - 1)).count_ones();
                }
            }
            let sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
            mat[(rows[&(m & a_mask)], cols[&(m & b_mask)])] = psi[k] * sign;
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let rho = &mat * mat.adjoint();
        let ev = linalg::hermitian_eigenvalues(rho.as_ref())?;
        Ok(ev
            .into_iter()
            .map(|x| x / norm)
            .filter(|&x| x > 0.0)
            .map(|x| -x * x.ln())
            .sum())
    }

    pub fn density(&self, psi: &[c64]) -> Vec<f64> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        (0..self.sites)
            .map(|i| {
                self.states
                    .iter()
                    .zip(psi)
                    .filter(|(m, _)| *m & (1 << i) != 0)
                    .map(|(_, z)| z.norm_sqr())
                    .sum::<f64>()
                    / norm
            })
            .collect()
    }

    /// `<n_i><n_j> - <n_i n_j>`.
    pub fn density_correlation(&self, psi: &[c64], i: usize, j: usize) -> f64 {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let nn: f64 = self
            .states
            .iter()
            .zip(psi)
            .filter(|(m, _)| *m & (1 << i) != 0 && *m & (1 << j) != 0)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            / norm;
        let n = self.density(psi);
        n[i] * n[j] - nn
    }
}

fn create(mask: u64, i: usize) -> (f64, u64) {
    let sign = if (mask & ((1u64 << i) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    (sign, mask | 1 << i)
}

fn annihilate(mask: u64, i: usize) -> (f64, u64) {
    let sign = if (mask & ((1u64 << i) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    (sign, mask & !(1 << i))
}

pub fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn apply(op: MatRef<'_, c64>, psi: &[c64]) -> Vec<c64> {
    (0..op.nrows())
        .map(|r| (0..op.ncols()).map(|c| op[(r, c)] * psi[c]).sum())
        .collect()
}

pub fn normalize(psi: &mut [c64]) -> Result<()> {
    let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidState("cannot normalize a null vector".into()));
    }
    for z in psi.iter_mut() {
        *z /= n;
    }
    Ok(())
}

/// `|<a|b>|^2 / (<a|a><b|b>)`.
pub fn fidelity(a: &[c64], b: &[c64]) -> f64 {
    inner(a, b).norm_sqr() / (inner(a, a).re * inner(b, b).re)
}

/// Many-body generator pieces of the monitored chain in one sector.
#[derive(Debug, Clone)]
pub struct ManyBodyModel {
    pub basis: FockBasis,
    pub hamiltonian: Mat<c64>,
    /// `L_m = exp(i theta n_{m+1}) d_m^dag d_m`.
    pub jumps: Vec<Mat<c64>>,
    pub effective: Mat<c64>,
    pub gamma: f64,
}

impl ManyBodyModel {
    pub fn new(spec: &ModelSpec, particles: usize) -> Result<Self> {
        let basis = FockBasis::sector(spec.sites, particles)?;
        let h = model::build_hamiltonian(spec)?;
        let hamiltonian = basis.quadratic_operator(h.as_ref());
        let modes = model::build_jump_modes(spec)?;
        let l = spec.sites;
        let mut jumps = Vec::with_capacity(modes.len());
        for (b, d) in modes.iter().enumerate() {
            let kernel = Mat::from_fn(l, l, |i, j| d[i] * d[j].conj());
            let dd = basis.quadratic_operator(kernel.as_ref());
            let p = spec.bond_partner(b);
            let phase = c64::from_polar(1.0, spec.theta);
            let ph = basis.diagonal_operator(|m| if m & (1 << p) != 0 { phase } else { ONE });
            jumps.push(&ph * &dd);
        }
        let mut effective = hamiltonian.clone();
        let half = c64::new(0.0, -spec.gamma / 2.0);
        for lm in &jumps {
            let r = lm.adjoint() * lm;
            for j in 0..r.ncols() {
                for i in 0..r.nrows() {
                    effective[(i, j)] += r[(i, j)] * half;
                }
            }
        }
        Ok(Self { basis, hamiltonian, jumps, effective, gamma: spec.gamma })
    }

    /// `d/dt Tr(rho O)` under the master equation at `rho = |psi><psi|`.
    pub fn lindblad_drift(&self, psi: &[c64], op: MatRef<'_, c64>) -> f64 {
        let norm = inner(psi, psi).re;
        let o_psi = apply(op, psi);
        let h_psi = apply(self.effective.as_ref(), psi);
        // -i <O H_eff> + i <H_eff^dag O>
        let mut drift = (c64::new(0.0, -1.0) * inner(&apply(op.adjoint().to_owned().as_ref(), psi), &h_psi)
            + c64::new(0.0, 1.0) * inner(&h_psi, &o_psi))
        .re;
        for lm in &self.jumps {
            let l_psi = apply(lm.as_ref(), psi);
            drift += self.gamma * inner(&l_psi, &apply(op, &l_psi)).re;
        }
        drift / norm
    }
}

/// Statevector quantum-jump trajectory consuming uniforms exactly like the
/// Gaussian engine: one per bond per step, ascending.
#[derive(Debug, Clone)]
pub struct FockTrajectory {
    pub model: ManyBodyModel,
    pub propagator: Mat<c64>,
    pub dt: f64,
    pub psi: Vec<c64>,
    rng: ChaCha20Rng,
    pub last_jumps: Vec<usize>,
}

impl FockTrajectory {
    pub fn new(spec: &ModelSpec, dt: f64, initial: &SlaterState, rng: ChaCha20Rng) -> Result<Self> {
        let model = ManyBodyModel::new(spec, initial.particles())?;
        let a = Mat::from_fn(model.basis.dim(), model.basis.dim(), |i, j| {
            model.effective[(i, j)] * c64::new(0.0, -dt)
        });
        let propagator = linalg::expm(a.as_ref())?;
        let psi = model.basis.slater_amplitudes(initial)?;
        Ok(Self { model, propagator, dt, psi, rng, last_jumps: Vec::new() })
    }

    pub fn advance(&mut self) -> Result<()> {
        let gdt = self.model.gamma * self.dt;
        let probs: Vec<f64> = self
            .model
            .jumps
            .iter()
            .map(|lm| {
                let l_psi = apply(lm.as_ref(), &self.psi);
                (gdt * inner(&l_psi, &l_psi).re).clamp(0.0, 1.0)
            })
            .collect();
        let fired: Vec<usize> = probs
            .iter()
            .enumerate()
            .filter_map(|(m, &p)| (next_uniform(&mut self.rng) < p).then_some(m))
            .collect();
        let mut psi = apply(self.propagator.as_ref(), &self.psi);
        let mut applied = Vec::with_capacity(fired.len());
        for m in fired {
            let next = apply(self.model.jumps[m].as_ref(), &psi);
            if inner(&next, &next).re <= EMPTY_MODE_TOL * inner(&psi, &psi).re {
                continue;
            }
            psi = next;
            applied.push(m);
        }
        normalize(&mut psi)?;
        self.psi = psi;
        self.last_jumps = applied;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;
    use core::f64::consts::LN_2;

    #[test]
    fn sector_dimensions() {
        assert_eq!(FockBasis::sector(8, 4).unwrap().dim(), 70);
        assert_eq!(FockBasis::sector(2, 1).unwrap().states(), &[1, 2]);
        assert!(FockBasis::sector(3, 4).is_err());
    }

    #[test]
    fn hopping_sign_across_occupied_site() {
        // c_2^dag c_0 on |0,1> (bits 0,1) -> c_2^dag c_1^dag |0> with a sign
        // from passing c_1^dag: c_2^dag c_0 c_0^dag c_1^dag = c_2^dag c_1^dag
        // = -c_1^dag c_2^dag.
        let basis = FockBasis::sector(3, 2).unwrap();
        let mut a = Mat::<c64>::zeros(3, 3);
        a[(2, 0)] = ONE;
        let op = basis.quadratic_operator(a.as_ref());
        let from = basis.index_of(0b011).unwrap();
        let to = basis.index_of(0b110).unwrap();
        assert_eq!(op[(to, from)], c64::new(-1.0, 0.0));
    }

    #[test]
    fn slater_amplitudes_of_fock_state() {
        let basis = FockBasis::sector(4, 2).unwrap();
        let s = state::neel_state(4).unwrap();
        let psi = basis.slater_amplitudes(&s).unwrap();
        assert_eq!(psi, basis.fock_vector(&[1, 3]).unwrap());
    }

    #[test]
    fn quadratic_operator_generates_orbital_rotation() {
        // exp(-i A t) acting on a Slater state rotates each orbital by the
        // single-particle exponential.
        let spec = ModelSpec::new(5).with_quasiperiodic(0.8);
        let h = model::build_effective_hamiltonian(&spec).unwrap();
        let basis = FockBasis::sector(5, 2).unwrap();
        let s = state::fock_state(5, &[0, 3]).unwrap();
        let k1 = crate::engine::make_propagator(h.as_ref(), 0.3).unwrap();
        let evolved = SlaterState::from_orbitals(&k1 * s.orbitals()).unwrap();
        let mb = basis.quadratic_operator(h.as_ref());
        let kmb = linalg::expm(
            Mat::from_fn(10, 10, |i, j| mb[(i, j)] * c64::new(0.0, -0.3)).as_ref(),
        )
        .unwrap();
        let want = apply(kmb.as_ref(), &basis.slater_amplitudes(&s).unwrap());
        let got = basis.slater_amplitudes(&evolved).unwrap();
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn entropy_of_delocalized_particle() {
        let basis = FockBasis::sector(2, 1).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let psi = [c64::new(r, 0.0), c64::new(0.0, r)];
        assert!((basis.entanglement_entropy(&psi, &[0]).unwrap() - LN_2).abs() < 1e-14);
        assert!(basis.entanglement_entropy(&psi, &[0, 1]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn effective_hamiltonian_matches_quadratic_form() {
        let spec = ModelSpec::new(6);
        let mbm = ManyBodyModel::new(&spec, 3).unwrap();
        let h_eff = model::build_effective_hamiltonian(&spec).unwrap();
        let direct = mbm.basis.quadratic_operator(h_eff.as_ref());
        assert!(linalg::max_abs((&direct - &mbm.effective).as_ref()) < 1e-14);
    }
}
