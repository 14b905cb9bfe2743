//! Exact master-equation treatment of one particle-number sector.
//!
//! `d rho/dt = -i H_eff rho + i rho H_eff^dag + gamma sum_m L_m rho L_m^dag`
//! restricted to the `N <-> N` coherence block.
//!
//! The generator maps Hermitian operators to Hermitian operators, so it is
//! stored as a real `D^2 x D^2` matrix in the orthonormal Hermitian basis
//!
//! * `E_kk` at coordinate `k + D k`,
//! * `(E_kl + E_lk)/sqrt2` at `k + D l` for `k < l`,
//! * `i (E_kl - E_lk)/sqrt2` at `l + D k` for `k < l`.
//!
//! Over the complex numbers this is a unitary change of basis of the usual
//! column-stacked superoperator, so spectra coincide.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use faer::linalg::solvers::{Eigen, Solve};
use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, ManyBodyModel};
use crate::linalg::{self, c64, ZERO};
use crate::model::ModelSpec;

/// Largest sector dimension `D` accepted; the dense generator is `D^4` reals.
pub const MAX_SECTOR_DIM: usize = 126;
/// Eigenvalues closer to zero than this count as stationary.
pub const STEADY_TOL: f64 = 1e-8;
/// Relative reconstruction error above which the eigenbasis is not trusted.
pub const CONDITION_TOL: f64 = 1e-9;

const SQRT_2: f64 = core::f64::consts::SQRT_2;

#[derive(Debug, Clone)]
pub struct LiouvillianSector {
    model: ManyBodyModel,
    generator: Mat<f64>,
}

/// Non-zero entries of each column of every jump operator.
fn sparse_columns(op: MatRef<'_, c64>) -> Vec<Vec<(usize, c64)>> {
    (0..op.ncols())
        .map(|k| {
            (0..op.nrows())
                .filter(|&i| op[(i, k)] != ZERO)
                .map(|i| (i, op[(i, k)]))
                .collect()
        })
        .collect()
}

impl LiouvillianSector {
    pub fn build(spec: &ModelSpec, particles: usize) -> Result<Self> {
        spec.validate()?;
        if spec.sites > 10 {
            return Err(Error::SectorTooLarge(format!(
                "L = {} exceeds the dense Liouvillian limit of 10 sites",
                spec.sites
            )));
        }
        let basis = FockBasis::sector(spec.sites, particles)?;
        let d = basis.dim();
        if d > MAX_SECTOR_DIM {
            return Err(Error::SectorTooLarge(format!(
                "sector dimension D = {d} gives a {0} x {0} generator ({1} MB); limit is D = {MAX_SECTOR_DIM}",
                d * d,
                (d * d * d * d * 8) >> 20
            )));
        }
        let model = ManyBodyModel::new(spec, particles)?;
        let generator = assemble(&model);
        Ok(Self { model, generator })
    }

    pub fn sites(&self) -> usize {
        self.model.basis.sites()
    }

    pub fn particles(&self) -> usize {
        self.model.basis.particles()
    }

    pub fn basis(&self) -> &FockBasis {
        &self.model.basis
    }

    pub fn model(&self) -> &ManyBodyModel {
        &self.model
    }

    /// Sector dimension `D`.
    pub fn dim(&self) -> usize {
        self.model.basis.dim()
    }

    /// Real generator in the Hermitian basis, `D^2 x D^2`.
    pub fn generator(&self) -> MatRef<'_, f64> {
        self.generator.as_ref()
    }

    /// The generator in the column-stacked basis: row `i + D j` is `rho_ij`.
    pub fn complex_matrix(&self) -> Mat<c64> {
        let d = self.dim();
        let mut m = Mat::<c64>::zeros(d * d, d * d);
        for l in 0..d {
            for k in 0..d {
                let x = self.apply_elementary(k, l);
                for j in 0..d {
                    for i in 0..d {
                        m[(i + d * j, k + d * l)] = x[(i, j)];
                    }
                }
            }
        }
        m
    }

    /// Image of `|k><l|`.
    fn apply_elementary(&self, k: usize, l: usize) -> Mat<c64> {
        let mut e = Mat::<c64>::zeros(self.dim(), self.dim());
        e[(k, l)] = c64::new(1.0, 0.0);
        self.apply(e.as_ref())
    }

    /// Direct action of the generator on an arbitrary operator.
    pub fn apply(&self, rho: MatRef<'_, c64>) -> Mat<c64> {
        let m = &self.model;
        let h = m.effective.as_ref();
        let hr = h * rho;
        let rh = rho * h.adjoint();
        let mut out = Mat::from_fn(rho.nrows(), rho.ncols(), |i, j| {
            c64::new(0.0, -1.0) * hr[(i, j)] + c64::new(0.0, 1.0) * rh[(i, j)]
        });
        for lm in &m.jumps {
            let t = lm * rho * lm.adjoint();
            for j in 0..out.ncols() {
                for i in 0..out.nrows() {
                    out[(i, j)] += t[(i, j)] * m.gamma;
                }
            }
        }
        out
    }

    /// Largest `|sum_k R[kk, q]|`: the trace functional must annihilate every
    /// column.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim();
        (0..d * d)
            .map(|q| (0..d).map(|k| self.generator[(k + d * k, q)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Real coordinates of a Hermitian operator.
    pub fn coordinates(&self, rho: MatRef<'_, c64>) -> Result<Vec<f64>> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "density matrix is {}x{}, sector dimension is {d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(hermitian_coordinates(rho))
    }

    /// Operator with the given (possibly complex) coordinates.
    pub fn operator(&self, coords: &[c64]) -> Mat<c64> {
        let d = self.dim();
        let mut rho = Mat::<c64>::zeros(d, d);
        for l in 0..d {
            rho[(l, l)] += coords[l + d * l];
            for k in 0..l {
                let s = coords[k + d * l] * FRAC_1_SQRT_2;
                let a = coords[l + d * k] * c64::new(0.0, FRAC_1_SQRT_2);
                rho[(k, l)] += s + a;
                rho[(l, k)] += s - a;
            }
        }
        rho
    }

    /// Density matrix of a pure sector state.
    pub fn pure_state(&self, psi: &[c64]) -> Result<Mat<c64>> {
        let d = self.dim();
        if psi.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "state has {} amplitudes, sector dimension is {d}",
                psi.len()
            )));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        Ok(Mat::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / norm))
    }

    /// Eigenvalues only.
    pub fn spectrum(&self) -> Result<Vec<c64>> {
        self.generator
            .eigenvalues()
            .map_err(|e| Error::Eigen(format!("Liouvillian eigenvalues: {e:?}")))
    }

    /// Full eigendecomposition.
    pub fn decompose(&self) -> Result<SpectralDecomposition> {
        let evd = Eigen::new_from_real(self.generator.as_ref())
            .map_err(|e| Error::Eigen(format!("Liouvillian eigendecomposition: {e:?}")))?;
        let values: Vec<c64> = (0..self.generator.nrows()).map(|i| evd.S()[i]).collect();
        Ok(SpectralDecomposition { values, vectors: evd.U().to_owned() })
    }

    pub fn steady_state(&self, decomposition: &SpectralDecomposition) -> Result<Mat<c64>> {
        let q = decomposition.steady_index()?;
        let v: Vec<c64> = decomposition.vectors.col(q).iter().copied().collect();
        let rho = self.operator(&v);
        let tr = (0..self.dim()).map(|i| rho[(i, i)]).fold(ZERO, |a, b| a + b);
        if tr.norm() < 1e-12 {
            return Err(Error::InvalidState("steady-state eigenvector is traceless".into()));
        }
        let rho = Mat::from_fn(self.dim(), self.dim(), |i, j| {
            (rho[(i, j)] / tr + (rho[(j, i)] / tr).conj()) * 0.5
        });
        let min = min_eigenvalue(rho.as_ref())?;
        if min < -STEADY_TOL {
            return Err(Error::InvalidState(format!(
                "steady state has negative eigenvalue {min:e}"
            )));
        }
        Ok(rho)
    }

    /// `rho(t)` at each requested time (ascending, non-negative).
    ///
    /// Uses the eigen-expansion when `decomposition` is given and its basis
    /// reproduces `rho0`; otherwise integrates with a truncated Taylor
    /// series on the real generator.
    pub fn evolve_density(
        &self,
        decomposition: Option<&SpectralDecomposition>,
        rho0: MatRef<'_, c64>,
        times: &[f64],
    ) -> Result<DensityEvolution> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0)
            || times.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::InvalidConfig(
                "evolution times must be finite, non-negative and ascending".into(),
            ));
        }
        let x0 = self.coordinates(rho0)?;
        if let Some(dec) = decomposition {
            if let Some(c) = dec.expansion(&x0) {
                let states = times.iter().map(|&t| self.operator_real(&dec.evaluate(&c, t))).collect();
                return Ok(DensityEvolution { method: EvolutionMethod::Eigen, times: times.to_vec(), states });
            }
        }
        let states = self.taylor_evolve(&x0, times);
        let method = if decomposition.is_some() {
            EvolutionMethod::TaylorFallback
        } else {
            EvolutionMethod::Taylor
        };
        Ok(DensityEvolution { method, times: times.to_vec(), states })
    }

    fn operator_real(&self, x: &[f64]) -> Mat<c64> {
        let c: Vec<c64> = x.iter().map(|&v| c64::new(v, 0.0)).collect();
        self.operator(&c)
    }

    fn taylor_evolve(&self, x0: &[f64], times: &[f64]) -> Vec<Mat<c64>> {
        let r = self.generator.as_ref();
        let norm = (0..r.ncols())
            .map(|j| r.col(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let max_step = if norm > 0.0 { 0.5 / norm } else { f64::INFINITY };
        let n = x0.len();
        let mut x = Mat::from_fn(n, 1, |i, _| x0[i]);
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            while now < t {
                let tau = (t - now).min(max_step);
                let mut term = x.clone();
                let mut sum = x.clone();
                for k in 1..64 {
                    term = (r * &term) * (tau / k as f64);
                    let size = term.col(0).iter().map(|v| v.abs()).fold(0.0, f64::max);
                    sum += &term;
                    if size < 1e-17 {
                        break;
                    }
                }
                x = sum;
                now += tau;
            }
            let col: Vec<f64> = x.col(0).iter().copied().collect();
            out.push(self.operator_real(&col));
        }
        out
    }
}

fn hermitian_coordinates(rho: MatRef<'_, c64>) -> Vec<f64> {
    let d = rho.nrows();
    let mut x = vec![0.0; d * d];
    for l in 0..d {
        x[l + d * l] = rho[(l, l)].re;
        for k in 0..l {
            x[k + d * l] = SQRT_2 * rho[(k, l)].re;
            x[l + d * k] = SQRT_2 * rho[(k, l)].im;
        }
    }
    x
}

fn assemble(model: &ManyBodyModel) -> Mat<f64> {
    let d = model.basis.dim();
    let h = model.effective.as_ref();
    let jumps: Vec<Vec<Vec<(usize, c64)>>> =
        model.jumps.iter().map(|l| sparse_columns(l.as_ref())).collect();
    let gamma = model.gamma;
    let mut r = Mat::<f64>::zeros(d * d, d * d);
    let mut x = Mat::<c64>::zeros(d, d);

    // accumulate g * L(|k><l|) into x
    let add = |x: &mut Mat<c64>, g: c64, k: usize, l: usize| {
        let mi = c64::new(0.0, -1.0) * g;
        let pi = c64::new(0.0, 1.0) * g;
        for i in 0..d {
            x[(i, l)] += mi * h[(i, k)];
            x[(k, i)] += pi * h[(i, l)].conj();
        }
        for cols in &jumps {
            for &(i, a) in &cols[k] {
                for &(j, b) in &cols[l] {
                    x[(i, j)] += g * gamma * a * b.conj();
                }
            }
        }
    };

    for l in 0..d {
        for k in 0..d {
            x.fill(ZERO);
            let one = c64::new(1.0, 0.0);
            if k == l {
                add(&mut x, one, k, k);
            } else if k < l {
                let s = c64::new(FRAC_1_SQRT_2, 0.0);
                add(&mut x, s, k, l);
                add(&mut x, s, l, k);
            } else {
                // coordinate l + D k with l < k is i(E_lk - E_kl)/sqrt2
                let a = c64::new(0.0, FRAC_1_SQRT_2);
                add(&mut x, a, l, k);
                add(&mut x, -a, k, l);
            }
            let col = hermitian_coordinates(x.as_ref());
            for (p, v) in col.into_iter().enumerate() {
                r[(p, k + d * l)] = v;
            }
        }
    }
    r
}

fn min_eigenvalue(rho: MatRef<'_, c64>) -> Result<f64> {
    Ok(linalg::hermitian_eigenvalues(rho)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Eigenpairs of the real generator (complex, in Hermitian-basis coordinates).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub values: Vec<c64>,
    pub vectors: Mat<c64>,
}

impl SpectralDecomposition {
    /// Eigenvalues with `|lambda| < STEADY_TOL`.
    pub fn stationary_count(&self) -> usize {
        self.values.iter().filter(|z| z.norm() < STEADY_TOL).count()
    }

    pub fn steady_index(&self) -> Result<usize> {
        let count = self.stationary_count();
        if count > 1 {
            return Err(Error::DegenerateSteadyState { count, tol: STEADY_TOL });
        }
        self.values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Eigen("empty spectrum".into()))
    }

    /// Smallest non-zero `-Re lambda`.
    pub fn gap(&self) -> Option<f64> {
        let q = self.steady_index().ok()?;
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != q)
            .map(|(_, z)| -z.re)
            .min_by(f64::total_cmp)
    }

    /// Expansion coefficients of `x0`, or `None` when the eigenbasis cannot
    /// reproduce it.
    fn expansion(&self, x0: &[f64]) -> Option<Vec<c64>> {
        let n = x0.len();
        let rhs = Mat::from_fn(n, 1, |i, _| c64::new(x0[i], 0.0));
        let c = self.vectors.partial_piv_lu().solve(&rhs);
        let back = &self.vectors * &c;
        let scale = x0.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        let err = (0..n).map(|i| (back[(i, 0)] - rhs[(i, 0)]).norm()).fold(0.0, f64::max);
        let cmax = c.col(0).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(err / scale < CONDITION_TOL) || !(cmax / scale < 1e8) {
            return None;
        }
        Some(c.col(0).iter().copied().collect())
    }

    fn evaluate(&self, c: &[c64], t: f64) -> Vec<f64> {
        let n = self.vectors.nrows();
        let w: Vec<c64> = c.iter().zip(&self.values).map(|(c, l)| *c * (*l * t).exp()).collect();
        let mut x = vec![0.0; n];
        for (q, wq) in w.iter().enumerate() {
            if wq.norm() == 0.0 {
                continue;
            }
            let v = self.vectors.col(q);
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += (*wq * v[i]).re;
            }
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionMethod {
    Eigen,
    /// Taylor stepping because the eigenbasis was ill-conditioned.
    TaylorFallback,
    /// Taylor stepping because no decomposition was supplied.
    Taylor,
}

#[derive(Debug, Clone)]
pub struct DensityEvolution {
    pub method: EvolutionMethod,
    pub times: Vec<f64>,
    pub states: Vec<Mat<c64>>,
}

/// `Tr(rho n_l)` for every site.
pub fn site_densities(basis: &FockBasis, rho: MatRef<'_, c64>) -> Vec<f64> {
    (0..basis.sites())
        .map(|l| {
            basis
                .states()
                .iter()
                .enumerate()
                .filter(|(_, m)| *m & (1 << l) != 0)
                .map(|(s, _)| rho[(s, s)].re)
                .sum()
        })
        .collect()
}

/// `Tr(rho n_i n_j)`.
pub fn pair_density(basis: &FockBasis, rho: MatRef<'_, c64>, i: usize, j: usize) -> f64 {
    basis
        .states()
        .iter()
        .enumerate()
        .filter(|(_, m)| *m & (1 << i) != 0 && *m & (1 << j) != 0)
        .map(|(s, _)| rho[(s, s)].re)
        .sum()
}

pub fn trace(rho: MatRef<'_, c64>) -> c64 {
    (0..rho.nrows()).map(|i| rho[(i, i)]).fold(ZERO, |a, b| a + b)
}

/// `(1/2) || a - b ||_1` for Hermitian arguments.
pub fn trace_distance(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<f64> {
    let diff = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)]);
    Ok(0.5 * linalg::hermitian_eigenvalues(diff.as_ref())?.iter().map(|v| v.abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Boundary;

    fn sorted(mut v: Vec<c64>) -> Vec<c64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    fn close_spectra(a: Vec<c64>, b: Vec<c64>, tol: f64) {
        assert_eq!(a.len(), b.len());
        for z in &a {
            let best = b.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < tol, "{z} unmatched (closest {best:e})");
        }
    }

    #[test]
    fn two_site_generator_matches_hand_assembly() {
        let spec = ModelSpec::new(2).with_boundary(Boundary::Open);
        let sector = LiouvillianSector::build(&spec, 1).unwrap();
        // basis |10> (site 0) then |01> (site 1); h = [[0,J],[J,0]] with J = 1
        // one bond: d = (1, -i)/sqrt2, so D = d^dag d restricted to N = 1 is
        // P = |d><d| with d = (1, -i)/sqrt2 in (site 0, site 1) coordinates.
        // The feedback phase exp(i pi n_1) is -1 on |01>, +1 on |10>.
        let g = 0.5;
        let d = [c64::new(FRAC_1_SQRT_2, 0.0), c64::new(0.0, -FRAC_1_SQRT_2)];
        let p = Mat::from_fn(2, 2, |i, j| d[i] * d[j].conj());
        let ph = [c64::new(1.0, 0.0), c64::new(-1.0, 0.0)];
        let jump = Mat::from_fn(2, 2, |i, j| ph[i] * p[(i, j)]);
        let heff = Mat::from_fn(2, 2, |i, j| {
            let hop = if i != j { c64::new(1.0, 0.0) } else { ZERO };
            hop - c64::new(0.0, g / 2.0) * p[(i, j)]
        });
        let mut hand = Mat::<c64>::zeros(4, 4);
        for (a, (i, j)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            for (b, (k, l)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                let mut v = ZERO;
                if j == l {
                    v += c64::new(0.0, -1.0) * heff[(i, k)];
                }
                if i == k {
                    v += c64::new(0.0, 1.0) * heff[(j, l)].conj();
                }
                v += g * jump[(i, k)] * jump[(j, l)].conj();
                hand[(a, b)] = v;
            }
        }
        let m = sector.complex_matrix();
        assert!(linalg::max_abs((&m - &hand).as_ref()) < 1e-14);
        let from_real = sorted(sector.spectrum().unwrap());
        let from_hand = sorted(hand.eigenvalues().unwrap());
        close_spectra(from_real, from_hand, 1e-12);
    }

    #[test]
    fn real_generator_is_the_complex_one_in_another_basis() {
        let spec = ModelSpec::new(4).with_quasiperiodic(0.7);
        let sector = LiouvillianSector::build(&spec, 2).unwrap();
        let d = sector.dim();
        let mut rho = Mat::from_fn(d, d, |i, j| c64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
        rho = Mat::from_fn(d, d, |i, j| (rho[(i, j)] + rho[(j, i)].conj()) * 0.5);
        let x = sector.coordinates(rho.as_ref()).unwrap();
        let y = sector.generator() * Mat::from_fn(x.len(), 1, |i, _| x[i]);
        let yc: Vec<c64> = y.col(0).iter().map(|&v| c64::new(v, 0.0)).collect();
        let direct = sector.apply(rho.as_ref());
        assert!(linalg::max_abs((&sector.operator(&yc) - &direct).as_ref()) < 1e-12);
    }

    #[test]
    fn closed_system_spectrum_is_energy_differences() {
        let spec = ModelSpec::new(4).with_gamma(0.0).with_quasiperiodic(0.3);
        let sector = LiouvillianSector::build(&spec, 2).unwrap();
        let spec_vals = sector.spectrum().unwrap();
        assert!(spec_vals.iter().all(|z| z.re.abs() < 1e-10));
        let e = linalg::hermitian_eigenvalues(sector.model().hamiltonian.as_ref()).unwrap();
        let mut expect = Vec::new();
        for a in &e {
            for b in &e {
                expect.push(c64::new(0.0, -(a - b)));
            }
        }
        close_spectra(spec_vals, expect, 1e-9);
    }

    #[test]
    fn trace_is_preserved_and_spectrum_is_stable() {
        for (l, n) in [(2, 1), (4, 2), (6, 3)] {
            let sector = LiouvillianSector::build(&ModelSpec::new(l), n).unwrap();
            assert!(sector.trace_defect() < 1e-10);
            let dec = sector.decompose().unwrap();
            assert_eq!(dec.stationary_count(), 1, "L = {l}");
            assert!(dec.values.iter().all(|z| z.re <= 1e-10));
            for z in &dec.values {
                let partner = dec.values.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
                assert!(partner < 1e-9);
            }
        }
    }

    #[test]
    fn steady_state_is_a_density_matrix_with_left_weight() {
        let sector = LiouvillianSector::build(&ModelSpec::new(6), 3).unwrap();
        let dec = sector.decompose().unwrap();
        let rho = sector.steady_state(&dec).unwrap();
        assert!((trace(rho.as_ref()) - c64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(min_eigenvalue(rho.as_ref()).unwrap() > -1e-8);
        let n = site_densities(sector.basis(), rho.as_ref());
        assert!(n.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{n:?}");
        let x = sector.coordinates(rho.as_ref()).unwrap();
        let y = sector.generator() * Mat::from_fn(x.len(), 1, |i, _| x[i]);
        assert!(y.col(0).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn evolution_starts_at_rho0_relaxes_and_agrees_with_taylor() {
        let sector = LiouvillianSector::build(&ModelSpec::new(4), 2).unwrap();
        let basis = sector.basis();
        let psi = basis.fock_vector(&[1, 3]).unwrap();
        let rho0 = sector.pure_state(&psi).unwrap();
        let dec = sector.decompose().unwrap();
        let times = [0.0, 0.3, 1.0, 2.5, 400.0];
        let eig = sector.evolve_density(Some(&dec), rho0.as_ref(), &times).unwrap();
        assert_eq!(eig.method, EvolutionMethod::Eigen);
        let tay = sector.evolve_density(None, rho0.as_ref(), &times[..4]).unwrap();
        assert_eq!(tay.method, EvolutionMethod::Taylor);
        assert!(linalg::max_abs((&eig.states[0] - &rho0).as_ref()) < 1e-12);
        for (a, b) in eig.states.iter().zip(&tay.states) {
            assert!(linalg::max_abs((a - b).as_ref()) < 1e-10);
        }
        for rho in &eig.states {
            assert!((trace(rho.as_ref()).re - 1.0).abs() < 1e-8);
            assert!(min_eigenvalue(rho.as_ref()).unwrap() > -1e-8);
        }
        let ss = sector.steady_state(&dec).unwrap();
        assert!(trace_distance(eig.states[4].as_ref(), ss.as_ref()).unwrap() < 1e-6);
    }

    #[test]
    fn density_derivative_matches_pure_state_drift() {
        let spec = ModelSpec::new(4).with_quasiperiodic(0.5);
        let sector = LiouvillianSector::build(&spec, 2).unwrap();
        let basis = sector.basis();
        let mut psi: Vec<c64> = (0..basis.dim()).map(|i| c64::new(1.0 + i as f64, 0.3 * i as f64)).collect();
        crate::fock::normalize(&mut psi).unwrap();
        let rho = sector.pure_state(&psi).unwrap();
        let drho = sector.apply(rho.as_ref());
        for site in 0..4 {
            let op = basis.diagonal_operator(|m| c64::new(if m & (1 << site) != 0 { 1.0 } else { 0.0 }, 0.0));
            let from_rho = site_densities(basis, drho.as_ref())[site];
            let from_psi = sector.model().lindblad_drift(&psi, op.as_ref());
            assert!((from_rho - from_psi).abs() < 1e-12);
        }
    }

    #[test]
    fn oversize_sector_is_rejected() {
        let err = LiouvillianSector::build(&ModelSpec::new(10), 5).unwrap_err();
        assert!(matches!(err, Error::SectorTooLarge(_)));
    }
}
