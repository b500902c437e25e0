//! Dense real linear-algebra kernels and matrix-equation solvers.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. All functions are pure;
//! none mutate their inputs.

mod expm;
mod lyapunov;
mod riccati;
mod schur;

pub use expm::expm;
pub use lyapunov::lyapunov_solve;
pub use riccati::{care_solve, dare_solve, CareSolution};
pub use schur::{ordered_schur, real_schur};

use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Relative tolerance for the symmetry predicate.
pub const SYM_TOL: f64 = 1e-12;

/// Eigenvalues with real part above this are treated as closing the loop
/// non-strictly; values in (-STAB_TOL, 0] get a `marginal` diagnostic.
pub const STAB_TOL: f64 = 1e-9;

/// Default rank threshold factor for the PBH test.
pub const PBH_TOL: f64 = 1e-10;

/// Eigenvalues of a real square matrix, with the maximum real part.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
}

impl Spectrum {
    pub fn hurwitz(&self) -> bool {
        self.max_real_part < 0.0
    }
}

/// Eigenvalues via the QR/Schur algorithm.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Spectrum> {
    require_square(m)?;
    let eig = m.clone().complex_eigenvalues();
    let eigenvalues: Vec<Complex64> = eig.iter().copied().collect();
    let max_real_part = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Spectrum {
        eigenvalues,
        max_real_part,
    })
}

/// Max absolute entry (the max-norm used in residual reporting).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

pub fn require_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn require_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{what} contains NaN/Inf entries")));
    }
    Ok(())
}

/// Symmetry predicate: max|M - M^T| <= SYM_TOL * max(1, max|M|).
pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    dev <= SYM_TOL * scale
}

pub fn require_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !is_symmetric(m) {
        return Err(Error::Validation(format!("{what} is not symmetric")));
    }
    Ok(())
}

/// (M + M^T)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Gather the submatrix M[rows, cols] by explicit index lists.
pub fn gather(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Van Loan integral: \int_0^h e^{Au} Q e^{A^T u} du via the block matrix
/// [[A, Q], [0, -A^T]] scaled by h.
pub fn van_loan_integral(a: &DMatrix<f64>, q: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    require_square(a)?;
    require_symmetric(q, "Q")?;
    if a.nrows() != q.nrows() {
        return Err(Error::Dimension(format!(
            "A is {}x{} but Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if h < 0.0 {
        return Err(Error::Validation(format!("horizon h = {h} must be >= 0")));
    }
    let n = a.nrows();
    if h == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, n)).copy_from(q);
    block
        .view_mut((n, n), (n, n))
        .copy_from(&(-a.transpose()));
    let f = expm(&block, h)?;
    // exp gives [[e^{Ah}, G], [0, e^{-A^T h}]] with G e^{A^T h} the integral;
    // e^{A^T h} is the transpose of the (1,1) block.
    let f11 = f.view((0, 0), (n, n)).into_owned();
    let f12 = f.view((0, n), (n, n)).into_owned();
    Ok(symmetrize(&(f12 * f11.transpose())))
}

/// PBH detectability test for the pair (A33, C): true iff every eigenvalue of
/// A33 with real part >= -tol is observable through C, i.e. the stacked matrix
/// [lambda I - A33; C] has full column rank.
pub fn pbh_detectable(a33: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> Result<bool> {
    require_square(a33)?;
    let m = a33.nrows();
    if c.ncols() != m {
        return Err(Error::Dimension(format!(
            "C has {} columns, expected {}",
            c.ncols(),
            m
        )));
    }
    let k = c.nrows();
    let spec = spectrum(a33)?;
    for lambda in spec.eigenvalues.iter().filter(|z| z.re >= -tol) {
        let mut stacked = DMatrix::<Complex64>::zeros(m + k, m);
        for i in 0..m {
            for j in 0..m {
                stacked[(i, j)] = Complex64::new(-a33[(i, j)], 0.0);
            }
            stacked[(i, i)] += lambda;
        }
        for i in 0..k {
            for j in 0..m {
                stacked[(m + i, j)] = Complex64::new(c[(i, j)], 0.0);
            }
        }
        let sv = stacked.svd(false, false).singular_values;
        let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
        let rank = sv.iter().filter(|&&s| s > tol * smax).count();
        if rank < m {
            return Ok(false);
        }
    }
    Ok(true)
}
