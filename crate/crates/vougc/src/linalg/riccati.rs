//! Algebraic Riccati equation solvers.
//!
//! - CARE (filter form) via ordered Schur decomposition of the Hamiltonian
//!   matrix, with an optional Newton polish step.
//! - DARE via the structure-preserving doubling algorithm (SDA).

use super::lyapunov::lyapunov_solve;
use super::schur::ordered_schur;
use super::{max_abs, require_square, require_symmetric, spectrum, symmetrize, Spectrum, STAB_TOL};
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Stabilising CARE solution with diagnostics.
#[derive(Debug, Clone)]
pub struct CareSolution {
    /// Symmetric positive-semidefinite solution P.
    pub p: DMatrix<f64>,
    /// Spectrum of the closed-loop matrix Ahat - P R.
    pub closed_loop: Spectrum,
    /// max-norm residual of the defining equation.
    pub residual: f64,
    /// Closed-loop eigenvalue real parts fall in (-STAB_TOL, 0].
    pub marginal: bool,
}

/// Solve the filter-form CARE
///
/// ```text
/// Ahat P + P Ahat^T - P R P + Qhat = 0
/// ```
///
/// for the unique stabilising P (closed loop Ahat - P R Hurwitz), via the
/// ordered Schur decomposition of the 2m x 2m Hamiltonian
/// [[Ahat^T, -R], [-Qhat, -Ahat]].
pub fn care_solve(
    ahat: &DMatrix<f64>,
    r: &DMatrix<f64>,
    qhat: &DMatrix<f64>,
) -> Result<CareSolution> {
    require_square(ahat)?;
    require_symmetric(r, "R")?;
    require_symmetric(qhat, "Qhat")?;
    let m = ahat.nrows();
    if r.nrows() != m || qhat.nrows() != m {
        return Err(Error::Dimension(format!(
            "CARE blocks must all be {m}x{m}"
        )));
    }
    if m == 0 {
        return Ok(CareSolution {
            p: DMatrix::zeros(0, 0),
            closed_loop: Spectrum {
                eigenvalues: vec![],
                max_real_part: f64::NEG_INFINITY,
            },
            residual: 0.0,
            marginal: false,
        });
    }

    let mut h = DMatrix::<f64>::zeros(2 * m, 2 * m);
    h.view_mut((0, 0), (m, m)).copy_from(&ahat.transpose());
    h.view_mut((0, m), (m, m)).copy_from(&(-r));
    h.view_mut((m, 0), (m, m)).copy_from(&(-qhat));
    h.view_mut((m, m), (m, m)).copy_from(&(-ahat));

    let ham_spectrum = spectrum(&h)?;
    let (q, _t, k) = ordered_schur(&h, |z| z.re < 0.0)?;
    if k != m {
        return Err(Error::NoStabilisingSolution(ham_spectrum.eigenvalues));
    }
    let u1 = q.view((0, 0), (m, m)).into_owned();
    let u2 = q.view((m, 0), (m, m)).into_owned();
    // P = U2 U1^{-1}, via U1^T P^T = U2^T
    let pt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or_else(|| Error::NoStabilisingSolution(ham_spectrum.eigenvalues.clone()))?;
    let mut p = symmetrize(&pt.transpose());

    let care_residual = |p: &DMatrix<f64>| -> DMatrix<f64> { ahat * p + p * ahat.transpose() - p * r * p + qhat };
    let mut res_mat = care_residual(&p);
    let mut residual = max_abs(&res_mat);

    // one Newton polish step: (Ahat - PR) D + D (Ahat - PR)^T + Res = 0
    if residual > 0.0 {
        let f = ahat - &p * r;
        if let Ok(delta) = lyapunov_solve(&f, &symmetrize(&res_mat)) {
            let candidate = symmetrize(&(&p + delta));
            let cand_res = care_residual(&candidate);
            let cand_norm = max_abs(&cand_res);
            if cand_norm < residual {
                p = candidate;
                res_mat = cand_res;
                residual = cand_norm;
            }
        }
    }
    let _ = res_mat;

    let scale = max_abs(qhat)
        .max(max_abs(&(ahat * &p)))
        .max(max_abs(&(&p * r * &p)))
        .max(1e-300);
    let tol = 1e-8 * scale;
    if residual > tol {
        return Err(Error::Convergence { residual, tol });
    }

    let closed_loop = spectrum(&(ahat - &p * r))?;
    if closed_loop.max_real_part >= STAB_TOL {
        return Err(Error::NoStabilisingSolution(ham_spectrum.eigenvalues));
    }
    let marginal = closed_loop.max_real_part > -STAB_TOL;
    Ok(CareSolution {
        p,
        closed_loop,
        residual,
        marginal,
    })
}

/// Solve the (filter-form, cross-coupled) DARE
///
/// ```text
/// P = A P A^T + Q - (A P C^T + S)(C P C^T + Rm)^{-1}(A P C^T + S)^T
/// ```
///
/// for the stabilising P via the structure-preserving doubling algorithm.
pub fn dare_solve(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    s: &DMatrix<f64>,
    rm: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    require_square(a)?;
    require_symmetric(q, "Q")?;
    require_symmetric(rm, "Rm")?;
    let n = a.nrows();
    let k = c.nrows();
    if c.ncols() != n || q.nrows() != n || s.nrows() != n || s.ncols() != k || rm.nrows() != k {
        return Err(Error::Dimension(
            "DARE blocks have inconsistent dimensions".into(),
        ));
    }
    let rm_chol = nalgebra::Cholesky::new(rm.clone())
        .ok_or_else(|| Error::IllConditionedCovariance("Rm is not positive-definite".into()))?;

    // remove the cross term: At = A - S Rm^{-1} C, Qt = Q - S Rm^{-1} S^T
    let rinv_c = rm_chol.solve(c);
    let rinv_st = rm_chol.solve(&s.transpose());
    let at = a - s * &rinv_c;
    let qt = symmetrize(&(q - s * &rinv_st));

    // SDA on the control-form DARE with A -> At^T, B -> C^T
    let mut ak = at.transpose();
    let mut g = symmetrize(&(c.transpose() * &rinv_c));
    let mut hk = qt;
    let id = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    for _ in 0..200 {
        let w = &id + &g * &hk;
        let lu = w.lu();
        let w_inv_a = lu
            .solve(&ak)
            .ok_or_else(|| Error::Degeneracy("SDA inner system singular".into()))?;
        let w_inv_g = lu
            .solve(&g)
            .ok_or_else(|| Error::Degeneracy("SDA inner system singular".into()))?;
        let a_next = &ak * &w_inv_a;
        let g_next = symmetrize(&(&g + &ak * w_inv_g * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_inv_a));
        let delta = max_abs(&(&h_next - &hk));
        let scale = max_abs(&h_next).max(1e-300);
        if !delta.is_finite() || !scale.is_finite() {
            return Err(Error::Convergence {
                residual: f64::INFINITY,
                tol: 0.0,
            });
        }
        ak = a_next;
        g = g_next;
        hk = h_next;
        if delta <= 1e-15 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            residual: f64::INFINITY,
            tol: 0.0,
        });
    }
    let p = hk;

    // residual of the original cross-coupled equation
    let apct_s = a * &p * c.transpose() + s;
    let inner = symmetrize(&(c * &p * c.transpose() + rm));
    let inner_chol = nalgebra::Cholesky::new(inner)
        .ok_or_else(|| Error::Degeneracy("C P C^T + Rm not positive-definite".into()))?;
    let correction = &apct_s * inner_chol.solve(&apct_s.transpose());
    let rhs = a * &p * a.transpose() + q - correction;
    let residual = max_abs(&(&p - rhs));
    let scale = max_abs(&p).max(max_abs(q)).max(1e-300);
    let tol = 1e-10 * scale;
    if residual > tol {
        return Err(Error::Convergence { residual, tol });
    }
    Ok(p)
}
