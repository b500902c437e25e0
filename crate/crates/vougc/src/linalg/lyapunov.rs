//! Bartels-Stewart solver for the continuous-time Lyapunov equation
//! A X + X A^T + Q = 0.

use super::schur::real_schur;
use super::{max_abs, require_square, require_symmetric, spectrum, symmetrize};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Solve A X + X A^T + Q = 0 for symmetric X.
///
/// Solvable iff no two eigenvalues of A sum to zero; a near-zero eigenvalue
/// sum is reported as an error, never silently perturbed.
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
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
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let spec = spectrum(a)?;
    let eig_scale = spec
        .eigenvalues
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut min_sum = f64::INFINITY;
    for (i, zi) in spec.eigenvalues.iter().enumerate() {
        for zj in &spec.eigenvalues[i..] {
            min_sum = min_sum.min((zi + zj).norm());
        }
    }
    if min_sum <= 1e-12 * eig_scale {
        return Err(Error::SingularLyapunov(min_sum));
    }

    let (u, t) = real_schur(a)?;
    let qt = u.transpose() * q * &u;
    let y = solve_quasi_triangular(&t, &qt)?;
    let x = symmetrize(&(&u * y * u.transpose()));

    let residual = max_abs(&(a * &x + &x * a.transpose() + q));
    let tol = 1e-10 * max_abs(q).max(1.0);
    if residual > tol {
        return Err(Error::Convergence { residual, tol });
    }
    Ok(x)
}

/// Block layout of a quasi-triangular matrix.
fn blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Solve T Y + Y T^T + Qt = 0 with T quasi-upper-triangular, exploiting the
/// symmetry of Y. Block columns are processed from last to first; within a
/// column, block rows from the bottom up to the diagonal.
fn solve_quasi_triangular(t: &DMatrix<f64>, qt: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let layout = blocks(t);
    let nb = layout.len();
    let mut y = DMatrix::<f64>::zeros(n, n);

    for lb in (0..nb).rev() {
        let (ls, lw) = layout[lb];
        for kb in (lb..nb).rev() {
            let (ks, kw) = layout[kb];
            // C = -Qt_kl - sum_{j>k} T_kj Y_jl - sum_{j>l} Y_kj T_lj^T
            let mut c = -qt.view((ks, ls), (kw, lw)).into_owned();
            for &(js, jw) in &layout[(kb + 1)..] {
                let tkj = t.view((ks, js), (kw, jw));
                // Y_jl with j > k >= l: lives in the lower block triangle
                let yjl = y.view((js, ls), (jw, lw));
                c -= tkj * yjl;
            }
            for &(js, jw) in &layout[(lb + 1)..] {
                // Y_kj with j > l: already computed (column j done, or same
                // column below the diagonal); stored symmetrically
                let ykj = y.view((ks, js), (kw, jw)).into_owned();
                let tlj = t.view((ls, js), (lw, jw));
                c += -ykj * tlj.transpose();
            }
            let tkk = t.view((ks, ks), (kw, kw)).into_owned();
            let tll = t.view((ls, ls), (lw, lw)).into_owned();
            let ykl = solve_small(&tkk, &tll, &c)?;
            y.view_mut((ks, ls), (kw, lw)).copy_from(&ykl);
            if kb != lb {
                y.view_mut((ls, ks), (lw, kw)).copy_from(&ykl.transpose());
            }
        }
    }
    Ok(y)
}

/// Solve A Y + Y B^T = C for blocks of size <= 2 via a Kronecker system.
fn solve_small(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let q = b.nrows();
    let dim = p * q;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..q {
        for i in 0..p {
            let row = i + p * j;
            for l in 0..p {
                k[(row, l + p * j)] += a[(i, l)];
            }
            for l in 0..q {
                // (Y B^T)[(i, j)] = sum_l Y[(i, l)] B[(j, l)]
                k[(row, i + p * l)] += b[(j, l)];
            }
        }
    }
    let rhs = DVector::from_fn(dim, |r, _| c[(r % p, r / p)]);
    let lu = k.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SingularLyapunov(0.0))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularLyapunov(0.0));
    }
    Ok(DMatrix::from_fn(p, q, |i, j| x[i + p * j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn negated_identity_gives_half_q() {
        let a = DMatrix::from_diagonal_element(2, 2, -1.0);
        let q = dmatrix![2.0, 0.5; 0.5, 1.0];
        let x = lyapunov_solve(&a, &q).unwrap();
        assert!(max_abs(&(&x - &q * 0.5)) < 1e-14);
    }

    #[test]
    fn scalar_case() {
        let x = lyapunov_solve(&dmatrix![-1.0], &dmatrix![2.0]).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_stable_5x5_residual() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..10 {
            let g = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let shift = spectrum(&g).unwrap().max_real_part + 0.5;
            let a = &g - DMatrix::identity(5, 5) * shift;
            let m = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let q = &m * m.transpose() + DMatrix::identity(5, 5) * 0.1;
            let x = lyapunov_solve(&a, &q).unwrap();
            let res = max_abs(&(&a * &x + &x * a.transpose() + &q));
            assert!(res <= 1e-10 * max_abs(&q).max(1.0), "residual {res}");
            assert!(crate::linalg::is_symmetric(&x));
        }
    }

    #[test]
    fn eigenvalue_sum_zero_reported() {
        // eigenvalues +1 and -1 sum to zero
        let a = DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0]);
        let q = DMatrix::identity(2, 2);
        match lyapunov_solve(&a, &q) {
            Err(Error::SingularLyapunov(_)) => {}
            other => panic!("expected singular-equation error, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_q_rejected() {
        let a = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let q = dmatrix![1.0, 0.2; 0.3, 1.0];
        assert!(lyapunov_solve(&a, &q).is_err());
    }
}
