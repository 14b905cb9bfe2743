//! Dense complex linear-algebra helpers shared by the engine and the oracles.
//!
//! Everything here is a thin layer over `faer`. The matrix exponential is a
//! Padé scaling-and-squaring implementation since faer does not ship one.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

pub use faer::c64;

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(a: MatRef<'_, c64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.col(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// `max |A^H A - I|` for a tall matrix with (supposedly) orthonormal columns.
pub fn orthonormality_defect(a: MatRef<'_, c64>) -> f64 {
    let n = a.ncols();
    let g = a.adjoint() * a;
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { ONE } else { ZERO };
            m = m.max((g[(i, j)] - target).norm());
        }
    }
    m
}

// Padé coefficients and thresholds for degrees 3, 5, 7, 9, 13 (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

fn scaled_identity(n: usize, s: f64) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(s, 0.0) } else { ZERO })
}

fn axpy_into(dst: &mut Mat<c64>, alpha: f64, x: &Mat<c64>) {
    let n = dst.nrows();
    let m = dst.ncols();
    for j in 0..m {
        for i in 0..n {
            dst[(i, j)] += x[(i, j)] * alpha;
        }
    }
}

fn matmul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a, b, ONE, Par::Seq);
    out
}

/// Low-degree Padé numerator/denominator parts `(U, V)` using powers of `A^2`.
fn pade_low(a: MatRef<'_, c64>, b: &[f64]) -> (Mat<c64>, Mat<c64>) {
    let n = a.nrows();
    let a2 = matmul(a, a);
    let mut odd = scaled_identity(n, b[1]);
    let mut even = scaled_identity(n, b[0]);
    let mut pow = a2.clone();
    let mut k = 2;
    while k < b.len() {
        axpy_into(&mut even, b[k], &pow);
        if k + 1 < b.len() {
            axpy_into(&mut odd, b[k + 1], &pow);
        }
        k += 2;
        if k < b.len() {
            pow = matmul(pow.as_ref(), a2.as_ref());
        }
    }
    (matmul(a, odd.as_ref()), even)
}

fn pade13(a: MatRef<'_, c64>) -> (Mat<c64>, Mat<c64>) {
    let n = a.nrows();
    let b = &PADE13;
    let a2 = matmul(a, a);
    let a4 = matmul(a2.as_ref(), a2.as_ref());
    let a6 = matmul(a4.as_ref(), a2.as_ref());

    let mut inner_u = Mat::<c64>::zeros(n, n);
    axpy_into(&mut inner_u, b[13], &a6);
    axpy_into(&mut inner_u, b[11], &a4);
    axpy_into(&mut inner_u, b[9], &a2);
    let mut u = matmul(a6.as_ref(), inner_u.as_ref());
    axpy_into(&mut u, b[7], &a6);
    axpy_into(&mut u, b[5], &a4);
    axpy_into(&mut u, b[3], &a2);
    for i in 0..n {
        u[(i, i)] += c64::new(b[1], 0.0);
    }
    let u = matmul(a, u.as_ref());

    let mut inner_v = Mat::<c64>::zeros(n, n);
    axpy_into(&mut inner_v, b[12], &a6);
    axpy_into(&mut inner_v, b[10], &a4);
    axpy_into(&mut inner_v, b[8], &a2);
    let mut v = matmul(a6.as_ref(), inner_v.as_ref());
    axpy_into(&mut v, b[6], &a6);
    axpy_into(&mut v, b[4], &a4);
    axpy_into(&mut v, b[2], &a2);
    for i in 0..n {
        v[(i, i)] += c64::new(b[0], 0.0);
    }
    (u, v)
}

/// Matrix exponential by Padé approximation with scaling and squaring.
pub fn expm(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "expm of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    for j in 0..n {
        for i in 0..n {
            let z = a[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Exponential("non-finite input entry".into()));
            }
        }
    }
    let norm = one_norm(a);
    let (u, v, squarings) = if norm <= THETA[0] {
        let (u, v) = pade_low(a, &PADE3);
        (u, v, 0)
    } else if norm <= THETA[1] {
        let (u, v) = pade_low(a, &PADE5);
        (u, v, 0)
    } else if norm <= THETA[2] {
        let (u, v) = pade_low(a, &PADE7);
        (u, v, 0)
    } else if norm <= THETA[3] {
        let (u, v) = pade_low(a, &PADE9);
        (u, v, 0)
    } else {
        let s = (norm / THETA[4]).log2().ceil().max(0.0) as i32;
        if s > 1000 {
            return Err(Error::Exponential("norm too large for scaling".into()));
        }
        let scale = 0.5f64.powi(s);
        let scaled = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
        let (u, v) = pade13(scaled.as_ref());
        (u, v, s)
    };
    let p = Mat::from_fn(n, n, |i, j| v[(i, j)] - u[(i, j)]);
    let q = Mat::from_fn(n, n, |i, j| v[(i, j)] + u[(i, j)]);
    let lu = p.partial_piv_lu();
    let mut r = lu.solve(q.as_ref());
    for _ in 0..squarings {
        r = matmul(r.as_ref(), r.as_ref());
    }
    for j in 0..n {
        for i in 0..n {
            let z = r[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Exponential("non-finite result".into()));
            }
        }
    }
    Ok(r)
}

/// One pass of Cholesky QR: returns `A R^{-1}` where `A^H A = R^H R`.
fn cholesky_qr_pass(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
    let n = a.ncols();
    let mut gram = Mat::<c64>::zeros(n, n);
    tri_matmul(
        gram.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        a.adjoint(),
        BlockStructure::Rectangular,
        a,
        BlockStructure::Rectangular,
        ONE,
        Par::Seq,
    );
    let llt = gram.llt(Side::Lower).map_err(|_| Error::RankDeficient)?;
    let l = llt.L();
    for k in 0..n {
        if !(l[(k, k)].re > 1e-7) {
            return Err(Error::RankDeficient);
        }
    }
    let mut linv = Mat::<c64>::zeros(n, n);
    faer::linalg::triangular_inverse::invert_lower_triangular(linv.as_mut(), l, Par::Seq);
    // Q = A L^{-H}
    let mut q = Mat::<c64>::zeros(a.nrows(), n);
    tri_matmul(
        q.as_mut(),
        BlockStructure::Rectangular,
        Accum::Replace,
        a,
        BlockStructure::Rectangular,
        linv.adjoint(),
        BlockStructure::TriangularUpper,
        ONE,
        Par::Seq,
    );
    Ok(q)
}

/// Single Cholesky QR pass. Accurate to `cond(A)^2 * eps`, so only for
/// inputs already close to orthonormal.
pub fn orthonormalize_nearly_orthonormal(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    if a.ncols() == 0 {
        return Ok(Mat::zeros(a.nrows(), 0));
    }
    cholesky_qr_pass(a)
}

/// Q factor of the reduced QR decomposition (positive diagonal in R).
///
/// Computed as two passes of Cholesky QR; the second pass removes the
/// `cond(A)^2` loss of the first. Fails when the columns are numerically
/// dependent.
pub fn orthonormalize(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    if a.ncols() == 0 {
        return Ok(Mat::zeros(a.nrows(), 0));
    }
    let q = cholesky_qr_pass(a)?;
    cholesky_qr_pass(q.as_ref())
}

/// `(log|det A|, phase of det A)` via LU with partial pivoting.
///
/// Returns `(-inf, 1)` for an exactly singular matrix.
pub fn log_abs_det(a: MatRef<'_, c64>) -> (f64, c64) {
    let n = a.nrows();
    if n == 0 {
        return (0.0, ONE);
    }
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let mut log = 0.0f64;
    let mut phase = ONE;
    for k in 0..n {
        let d = u[(k, k)];
        let m = d.norm();
        if m == 0.0 {
            return (f64::NEG_INFINITY, ONE);
        }
        log += m.ln();
        phase *= d / m;
    }
    let perm = lu.P();
    let (fwd, _) = perm.arrays();
    if permutation_is_odd(fwd) {
        phase = -phase;
    }
    (log, phase)
}

/// Complex determinant, assembled from the log-magnitude form.
pub fn det(a: MatRef<'_, c64>) -> c64 {
    let (log, phase) = log_abs_det(a);
    if log == f64::NEG_INFINITY {
        ZERO
    } else {
        phase * log.exp()
    }
}

fn permutation_is_odd(p: &[usize]) -> bool {
    let mut seen = alloc::vec![false; p.len()];
    let mut odd = false;
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0usize;
        let mut k = start;
        while !seen[k] {
            seen[k] = true;
            k = p[k];
            len += 1;
        }
        if len % 2 == 0 {
            odd = !odd;
        }
    }
    odd
}

/// Eigenvalues of a Hermitian matrix in nondecreasing order.
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(alloc::format!("{e:?}")))
}

/// Inverse of a square matrix through LU with partial pivoting.
pub fn inverse(a: MatRef<'_, c64>) -> Mat<c64> {
    a.partial_piv_lu().inverse()
}
