//! Slater-determinant states and the observables read off their two-point
//! correlation matrix `C_ij = <c_i^dag c_j>`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use faer::{Mat, MatRef};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, ONE, ZERO};

/// Pure Gaussian state of `N` fermions on `L` sites.
///
/// Column `n` of `orbitals` is the single-particle orbital created by the
/// `n`-th factor of `prod_n (sum_i U_in c_i^dag) |0>`.
#[derive(Debug, Clone)]
pub struct SlaterState {
    orbitals: Mat<c64>,
}

impl SlaterState {
    /// Wraps an `L x N` matrix. The caller vouches for orthonormal columns.
    pub fn from_orbitals(orbitals: Mat<c64>) -> Result<Self> {
        if orbitals.ncols() > orbitals.nrows() {
            return Err(Error::InvalidState(format!(
                "N = {} exceeds L = {}",
                orbitals.ncols(),
                orbitals.nrows()
            )));
        }
        Ok(Self { orbitals })
    }

    /// Orthonormalizes the given columns first.
    pub fn from_columns(columns: Mat<c64>) -> Result<Self> {
        let q = linalg::orthonormalize(columns.as_ref())?;
        Self::from_orbitals(q)
    }

    pub fn sites(&self) -> usize {
        self.orbitals.nrows()
    }

    pub fn particles(&self) -> usize {
        self.orbitals.ncols()
    }

    pub fn orbitals(&self) -> MatRef<'_, c64> {
        self.orbitals.as_ref()
    }

    pub(crate) fn orbitals_mut(&mut self) -> &mut Mat<c64> {
        &mut self.orbitals
    }

    pub fn into_orbitals(self) -> Mat<c64> {
        self.orbitals
    }

    pub fn orthonormality_defect(&self) -> f64 {
        linalg::orthonormality_defect(self.orbitals.as_ref())
    }

    /// Full correlation matrix.
    pub fn correlation_matrix(&self) -> CorrelationMatrix {
        let u = &self.orbitals;
        let l = u.nrows();
        // C = conj(U) U^T
        let c = u.conjugate() * u.transpose();
        debug_assert_eq!(c.nrows(), l);
        CorrelationMatrix { c }
    }

    /// Site occupations `n_i = C_ii`.
    pub fn density(&self) -> Vec<f64> {
        let u = &self.orbitals;
        (0..u.nrows())
            .map(|i| (0..u.ncols()).map(|n| u[(i, n)].norm_sqr()).sum())
            .collect()
    }

    /// `<c_i^dag c_j>` for a single pair.
    pub fn correlation(&self, i: usize, j: usize) -> c64 {
        let u = &self.orbitals;
        (0..u.ncols()).map(|n| u[(i, n)].conj() * u[(j, n)]).sum()
    }

    /// Occupation of momentum modes `k = 2 pi m / L`, `m = -L/2 .. L/2 - 1`,
    /// with `c_k = L^{-1/2} sum_l e^{-ikl} c_l` and `l = 1..L`.
    pub fn momentum_density(&self) -> Vec<f64> {
        let l = self.sites();
        let u = &self.orbitals;
        let norm = 1.0 / (l as f64).sqrt();
        momentum_grid(l)
            .into_iter()
            .map(|k| {
                let phases: Vec<c64> = (0..l)
                    .map(|site| c64::from_polar(norm, -k * (site + 1) as f64))
                    .collect();
                (0..u.ncols())
                    .map(|n| {
                        let amp: c64 = (0..l).map(|site| phases[site] * u[(site, n)]).sum();
                        amp.norm_sqr()
                    })
                    .sum()
            })
            .collect()
    }

    /// Von Neumann entropy (natural log) of the sites in `subsystem`.
    pub fn entanglement_entropy(&self, subsystem: &[usize]) -> Result<f64> {
        if subsystem.is_empty() {
            return Ok(0.0);
        }
        self.check_sites(subsystem)?;
        let u = &self.orbitals;
        let n = u.ncols();
        let a = subsystem.len();
        let rows = Mat::from_fn(a, n, |r, c| u[(subsystem[r], c)]);
        // The nonzero spectra of conj(U_A) U_A^T and U_A^H U_A coincide.
        let small = if a <= n {
            rows.conjugate() * rows.transpose()
        } else {
            rows.adjoint() * &rows
        };
        let ev = linalg::hermitian_eigenvalues(small.as_ref())?;
        Ok(ev.into_iter().map(binary_entropy).sum())
    }

    /// Entropy of the left half, sites `0..L/2`.
    pub fn half_chain_entropy(&self) -> Result<f64> {
        let half: Vec<usize> = (0..self.sites() / 2).collect();
        self.entanglement_entropy(&half)
    }

    /// `I_AB = S_A + S_B - S_{A u B}` for disjoint `A`, `B`.
    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        if a.iter().any(|x| b.contains(x)) {
            return Err(Error::InvalidState("subsystems A and B overlap".into()));
        }
        let union: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
        Ok(self.entanglement_entropy(a)? + self.entanglement_entropy(b)?
            - self.entanglement_entropy(&union)?)
    }

    /// Connected density-density correlation for one trajectory,
    /// `<n_i><n_j> - <n_i n_j> = |C_ij|^2` for `i != j`.
    pub fn density_correlation(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::InvalidState("density correlation needs i != j".into()));
        }
        self.check_sites(&[i, j])?;
        Ok(self.correlation(i, j).norm_sqr())
    }

    /// `<self|other> = det(U_self^H U_other)`.
    pub fn overlap(&self, other: &SlaterState) -> Result<c64> {
        self.check_same_shape(other)?;
        let gram = self.orbitals.adjoint() * &other.orbitals;
        Ok(linalg::det(gram.as_ref()))
    }

    /// `|<self|other>|^2`, accumulated in log space.
    pub fn overlap_probability(&self, other: &SlaterState) -> Result<f64> {
        self.check_same_shape(other)?;
        let gram = self.orbitals.adjoint() * &other.orbitals;
        Ok(log_det_to_probability(linalg::log_abs_det(gram.as_ref()).0))
    }

    /// Probability of finding the state in the left-packed Fock state.
    pub fn f_skin(&self) -> f64 {
        let n = self.particles();
        let top = self.orbitals.as_ref().subrows(0, n);
        log_det_to_probability(linalg::log_abs_det(top).0)
    }

    /// Return probability with respect to `initial`.
    pub fn f_return(&self, initial: &SlaterState) -> Result<f64> {
        initial.overlap_probability(self)
    }

    fn check_sites(&self, sites: &[usize]) -> Result<()> {
        let l = self.sites();
        if let Some(bad) = sites.iter().find(|&&s| s >= l) {
            return Err(Error::InvalidState(format!("site {bad} outside chain of {l}")));
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &SlaterState) -> Result<()> {
        if self.sites() != other.sites() || self.particles() != other.particles() {
            return Err(Error::DimensionMismatch(format!(
                "overlap of (L={}, N={}) with (L={}, N={})",
                self.sites(),
                self.particles(),
                other.sites(),
                other.particles()
            )));
        }
        Ok(())
    }
}

fn log_det_to_probability(log_abs: f64) -> f64 {
    if log_abs == f64::NEG_INFINITY {
        0.0
    } else {
        (2.0 * log_abs).exp()
    }
}

/// `-nu ln nu - (1 - nu) ln(1 - nu)` with `nu` clipped to `[0, 1]`.
pub fn binary_entropy(nu: f64) -> f64 {
    let nu = nu.clamp(0.0, 1.0);
    let mut s = 0.0;
    if nu > 0.0 {
        s -= nu * nu.ln();
    }
    if nu < 1.0 {
        s -= (1.0 - nu) * (1.0 - nu).ln();
    }
    s
}

/// Momenta `2 pi m / L` for `m = -floor(L/2) .. L - floor(L/2) - 1`.
pub fn momentum_grid(sites: usize) -> Vec<f64> {
    let start = -((sites / 2) as i64);
    (0..sites as i64)
        .map(|m| 2.0 * PI * (start + m) as f64 / sites as f64)
        .collect()
}

/// Hermitian two-point function of a Slater state.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub c: Mat<c64>,
}

impl CorrelationMatrix {
    pub fn trace(&self) -> f64 {
        (0..self.c.nrows()).map(|i| self.c[(i, i)].re).sum()
    }
}

/// Fock state with the given occupied sites (any order; stored ascending).
pub fn fock_state(sites: usize, occupied: &[usize]) -> Result<SlaterState> {
    let mut occ: Vec<usize> = occupied.to_vec();
    occ.sort_unstable();
    occ.dedup();
    if occ.len() != occupied.len() {
        return Err(Error::InvalidState("repeated occupied site".into()));
    }
    if let Some(&bad) = occ.iter().find(|&&s| s >= sites) {
        return Err(Error::InvalidState(format!("site {bad} outside chain of {sites}")));
    }
    let u = Mat::from_fn(sites, occ.len(), |i, n| if occ[n] == i { ONE } else { ZERO });
    SlaterState::from_orbitals(u)
}

/// Neel state: physical sites 2, 4, ..., L occupied (indices 1, 3, ...).
pub fn neel_state(sites: usize) -> Result<SlaterState> {
    if sites % 2 != 0 {
        return Err(Error::InvalidState(format!("Neel state needs even L, got {sites}")));
    }
    let occ: Vec<usize> = (0..sites / 2).map(|k| 2 * k + 1).collect();
    fock_state(sites, &occ)
}

/// Ideal skin state: the leftmost `N` sites filled.
pub fn skin_state(sites: usize, particles: usize) -> Result<SlaterState> {
    if particles > sites {
        return Err(Error::InvalidState(format!("N = {particles} exceeds L = {sites}")));
    }
    let occ: Vec<usize> = (0..particles).collect();
    fock_state(sites, &occ)
}

/// `N` lowest eigenvectors of a Hermitian kernel.
pub fn ground_state(h: MatRef<'_, c64>, particles: usize) -> Result<SlaterState> {
    let l = h.nrows();
    if particles > l {
        return Err(Error::InvalidState(format!("N = {particles} exceeds L = {l}")));
    }
    let eig = h
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let v = eig.U();
    SlaterState::from_orbitals(Mat::from_fn(l, particles, |i, n| v[(i, n)]))
}

/// Fock state with `N` sites drawn uniformly without replacement.
pub fn random_fock_state<R: Rng + ?Sized>(
    sites: usize,
    particles: usize,
    rng: &mut R,
) -> Result<SlaterState> {
    if particles > sites {
        return Err(Error::InvalidState(format!("N = {particles} exceeds L = {sites}")));
    }
    let occ = rand::seq::index::sample(rng, sites, particles).into_vec();
    fock_state(sites, &occ)
}
