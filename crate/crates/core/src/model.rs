//! Single-particle matrices of the monitored chain.
//!
//! Sites are 0-based in code. The quasiperiodic phase uses the physical
//! 1-based label, `W cos(2 pi alpha (i + 1))` for index `i`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::{c64, ZERO};

/// Golden-ratio conjugate, `(sqrt(5) - 1) / 2`.
pub const DEFAULT_ALPHA: f64 = 0.618_033_988_749_894_9;
pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_THETA: f64 = PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisorderKind {
    None,
    Quasiperiodic,
    Uniform,
}

/// Physical parameters of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub sites: usize,
    pub hopping: f64,
    pub disorder_strength: f64,
    pub alpha: f64,
    pub theta: f64,
    pub gamma: f64,
    pub boundary: Boundary,
    pub disorder: DisorderKind,
    pub disorder_seed: u64,
}

impl ModelSpec {
    /// Clean open chain with the default couplings.
    pub fn new(sites: usize) -> Self {
        Self {
            sites,
            hopping: 1.0,
            disorder_strength: 0.0,
            alpha: DEFAULT_ALPHA,
            theta: DEFAULT_THETA,
            gamma: DEFAULT_GAMMA,
            boundary: Boundary::Open,
            disorder: DisorderKind::None,
            disorder_seed: 0,
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_quasiperiodic(mut self, w: f64) -> Self {
        self.disorder = DisorderKind::Quasiperiodic;
        self.disorder_strength = w;
        self
    }

    pub fn with_uniform_disorder(mut self, w: f64, seed: u64) -> Self {
        self.disorder = DisorderKind::Uniform;
        self.disorder_strength = w;
        self.disorder_seed = seed;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::InvalidModel(format!(
                "L must be at least 2, got {}",
                self.sites
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidModel(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.disorder_strength >= 0.0) || !self.disorder_strength.is_finite() {
            return Err(Error::InvalidModel(format!(
                "W must be finite and >= 0, got {}",
                self.disorder_strength
            )));
        }
        if !self.hopping.is_finite() || !self.theta.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidModel("J, theta and alpha must be finite".into()));
        }
        Ok(())
    }

    /// Number of jump channels: one per physical bond.
    pub fn bond_count(&self) -> usize {
        match self.boundary {
            Boundary::Open => self.sites - 1,
            Boundary::Periodic => self.sites,
        }
    }

    /// Right-hand site of bond `b` (the site carrying the feedback phase).
    pub fn bond_partner(&self, b: usize) -> usize {
        (b + 1) % self.sites
    }

    pub fn disorder_varies_per_trajectory(&self) -> bool {
        self.disorder == DisorderKind::Uniform && self.disorder_strength != 0.0
    }

    /// Uniform disorder realization used by trajectory `index`.
    pub fn for_trajectory(&self, index: u64) -> ModelSpec {
        let mut spec = self.clone();
        if spec.disorder == DisorderKind::Uniform {
            spec.disorder_seed ^= index;
        }
        spec
    }
}

/// Onsite potential vector for the spec's disorder kind.
pub fn onsite_potential(spec: &ModelSpec) -> Vec<f64> {
    let l = spec.sites;
    let w = spec.disorder_strength;
    match spec.disorder {
        DisorderKind::None => alloc::vec![0.0; l],
        DisorderKind::Quasiperiodic => (0..l)
            .map(|i| w * (2.0 * PI * spec.alpha * (i + 1) as f64).cos())
            .collect(),
        DisorderKind::Uniform => {
            let mut rng = ChaCha20Rng::seed_from_u64(spec.disorder_seed);
            (0..l)
                .map(|_| w * (rng.random::<f64>() - 0.5))
                .collect()
        }
    }
}

/// Hopping Hamiltonian kernel `h` with `H = sum_ij h_ij c_i^dag c_j`.
pub fn build_hamiltonian(spec: &ModelSpec) -> Result<Mat<c64>> {
    spec.validate()?;
    let l = spec.sites;
    let mut h = Mat::<c64>::zeros(l, l);
    let pot = onsite_potential(spec);
    for (i, v) in pot.iter().enumerate() {
        h[(i, i)] = c64::new(*v, 0.0);
    }
    for b in 0..spec.bond_count() {
        let j = spec.bond_partner(b);
        h[(b, j)] += c64::new(spec.hopping, 0.0);
        h[(j, b)] += c64::new(spec.hopping, 0.0);
    }
    Ok(h)
}

/// Jump-mode vectors, `[d_b]_i = (delta_{i,b} - i delta_{i,b+1}) / sqrt 2`.
pub fn build_jump_modes(spec: &ModelSpec) -> Result<Vec<Vec<c64>>> {
    spec.validate()?;
    let l = spec.sites;
    Ok((0..spec.bond_count())
        .map(|b| {
            let mut d = alloc::vec![ZERO; l];
            d[b] = c64::new(FRAC_1_SQRT_2, 0.0);
            d[spec.bond_partner(b)] = c64::new(0.0, -FRAC_1_SQRT_2);
            d
        })
        .collect())
}

/// `R = sum_b d_b d_b^dag`, the kernel of `sum_b L_b^dag L_b`.
pub fn monitoring_kernel(modes: &[Vec<c64>], sites: usize) -> Mat<c64> {
    let mut r = Mat::<c64>::zeros(sites, sites);
    for d in modes {
        for j in 0..sites {
            if d[j] == ZERO {
                continue;
            }
            let dj = d[j].conj();
            for i in 0..sites {
                r[(i, j)] += d[i] * dj;
            }
        }
    }
    r
}

/// `h_eff = h - i (gamma / 2) R`.
pub fn build_effective_hamiltonian(spec: &ModelSpec) -> Result<Mat<c64>> {
    let h = build_hamiltonian(spec)?;
    let modes = build_jump_modes(spec)?;
    let r = monitoring_kernel(&modes, spec.sites);
    let half = c64::new(0.0, -0.5 * spec.gamma);
    Ok(Mat::from_fn(spec.sites, spec.sites, |i, j| h[(i, j)] + half * r[(i, j)]))
}

/// Everything the engine needs from the model, built once per spec.
#[derive(Debug, Clone)]
pub struct SingleParticleMatrices {
    pub h: Mat<c64>,
    pub modes: Vec<Vec<c64>>,
    pub h_eff: Mat<c64>,
}

impl SingleParticleMatrices {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let h = build_hamiltonian(spec)?;
        let modes = build_jump_modes(spec)?;
        let r = monitoring_kernel(&modes, spec.sites);
        let half = c64::new(0.0, -0.5 * spec.gamma);
        let h_eff = Mat::from_fn(spec.sites, spec.sites, |i, j| h[(i, j)] + half * r[(i, j)]);
        Ok(Self { h, modes, h_eff })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn open_chain_is_tridiagonal() {
        let h = build_hamiltonian(&ModelSpec::new(4)).unwrap();
        for i in 0..4usize {
            for j in 0..4 {
                let want = if i.abs_diff(j) == 1 { 1.0 } else { 0.0 };
                assert_eq!(h[(i, j)], c64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn periodic_chain_adds_wrap_bond() {
        let h = build_hamiltonian(&ModelSpec::new(4).with_boundary(Boundary::Periodic)).unwrap();
        assert_eq!(h[(0, 3)], c64::new(1.0, 0.0));
        assert_eq!(h[(3, 0)], c64::new(1.0, 0.0));
        assert_eq!(h[(0, 2)], ZERO);
    }

    #[test]
    fn quasiperiodic_first_site() {
        let h = build_hamiltonian(&ModelSpec::new(4).with_quasiperiodic(2.0)).unwrap();
        // 2 cos(2 pi (sqrt5 - 1)/2), evaluated independently
        let alpha = (5.0f64.sqrt() - 1.0) / 2.0;
        let want = 2.0 * (2.0 * PI * alpha).cos();
        assert!((h[(0, 0)].re - want).abs() < 1e-14);
        assert!((h[(0, 0)].re - (-1.4747)).abs() < 1e-4);
    }

    #[test]
    fn rejects_short_chain() {
        assert!(matches!(
            build_hamiltonian(&ModelSpec::new(1)),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn mode_counts_and_norms() {
        let open = build_jump_modes(&ModelSpec::new(4)).unwrap();
        assert_eq!(open.len(), 3);
        let pbc = build_jump_modes(&ModelSpec::new(4).with_boundary(Boundary::Periodic)).unwrap();
        assert_eq!(pbc.len(), 4);
        assert!(pbc[3][3].norm() > 0.0 && pbc[3][0].norm() > 0.0);
        assert_eq!(pbc[3][0], c64::new(0.0, -FRAC_1_SQRT_2));
        for d in open.iter().chain(pbc.iter()) {
            let n: f64 = d.iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-15);
            assert_eq!(d.iter().filter(|z| **z != ZERO).count(), 2);
        }
    }

    #[test]
    fn no_monitoring_leaves_hamiltonian() {
        let spec = ModelSpec::new(5).with_gamma(0.0);
        let h = build_hamiltonian(&spec).unwrap();
        let heff = build_effective_hamiltonian(&spec).unwrap();
        assert_eq!(max_abs((&h - &heff).as_ref()), 0.0);
    }

    #[test]
    fn two_site_dissipator_spectrum() {
        let spec = ModelSpec::new(2);
        let heff = build_effective_hamiltonian(&spec).unwrap();
        // i (h_eff - h_eff^dag) / 2 = (gamma/2) R with R = d d^dag a rank-one projector
        let anti = Mat::from_fn(2, 2, |i, j| {
            (heff[(i, j)] - heff[(j, i)].conj()) * c64::new(0.0, 0.5)
        });
        let ev = crate::linalg::hermitian_eigenvalues(anti.as_ref()).unwrap();
        assert!((ev[0] - 0.0).abs() < 1e-15);
        assert!((ev[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn uniform_disorder_is_reproducible() {
        let a = onsite_potential(&ModelSpec::new(16).with_uniform_disorder(3.0, 42));
        let b = onsite_potential(&ModelSpec::new(16).with_uniform_disorder(3.0, 42));
        let c = onsite_potential(&ModelSpec::new(16).with_uniform_disorder(3.0, 43));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| v.abs() <= 1.5));
    }

    #[test]
    fn periodic_clean_chain_commutes_with_shift() {
        let l = 7;
        let h = build_hamiltonian(&ModelSpec::new(l).with_boundary(Boundary::Periodic)).unwrap();
        let s = Mat::from_fn(l, l, |i, j| if i == (j + 1) % l { c64::new(1.0, 0.0) } else { ZERO });
        let comm = &h * &s - &s * &h;
        assert!(max_abs(comm.as_ref()) < 1e-12);
    }
}
