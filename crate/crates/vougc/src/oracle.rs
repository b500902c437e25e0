//! Independent discrete-time verification path: stroboscopic subsampling of a
//! VOU process to a VAR(1), state-space GC via the reduced DARE, and the
//! convergence check F(dt)/dt -> rate.
//!
//! Restricted to Hurwitz-stable drift: the subsampled innovation covariance
//! comes from the stationary Lyapunov equation, which needs stability. The
//! unstable branch of the theory is verified via the finite-horizon GC
//! instead, which needs no stationarity.

use crate::gc::{Partition, VouModel};
use crate::linalg::{
    dare_solve, expm, gather, lyapunov_solve, max_abs, spectrum, symmetrize,
};
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix};

/// Discrete VAR(1) model from stroboscopic subsampling.
#[derive(Debug, Clone)]
pub struct Var1Model {
    /// Transition matrix Abar = e^{A dt}.
    pub abar: DMatrix<f64>,
    /// Innovation covariance SigmaBar = Omega - Abar Omega Abar^T.
    pub sigma_bar: DMatrix<f64>,
}

/// Subsample a stable VOU at interval dt to a VAR(1).
pub fn subsample(model: &VouModel, dt: f64) -> Result<Var1Model> {
    if dt <= 0.0 {
        return Err(Error::Validation(format!("dt = {dt} must be > 0")));
    }
    let spec = spectrum(model.drift())?;
    if !spec.hurwitz() {
        return Err(Error::Unsupported(format!(
            "subsampling oracle requires Hurwitz-stable A (max Re = {:.3e})",
            spec.max_real_part
        )));
    }
    let abar = expm(model.drift(), dt)?;
    let omega = lyapunov_solve(model.drift(), model.sigma())?;
    let sigma_bar = symmetrize(&(&omega - &abar * &omega * abar.transpose()));

    // PSD within a small eigenvalue floor
    let eigs = sigma_bar.clone().symmetric_eigenvalues();
    let scale = max_abs(&sigma_bar).max(1e-300);
    if eigs.iter().any(|&e| e < -1e-12 * scale) {
        return Err(Error::Degeneracy(
            "subsampled innovation covariance is not positive-semidefinite".into(),
        ));
    }
    Ok(Var1Model { abar, sigma_bar })
}

/// Discrete-time state-space GC F = log |Sigma^R_11| - log |SigmaBar_11|
/// via the reduced DARE over the source block.
pub fn discrete_ss_gc(var1: &Var1Model, part: &Partition) -> Result<f64> {
    let r = part.reduced();
    let s = part.source();
    let a33 = gather(&var1.abar, s, s);
    let ar3 = gather(&var1.abar, r, s);
    let sig_33 = gather(&var1.sigma_bar, s, s);
    let sig_3r = gather(&var1.sigma_bar, s, r);
    let sig_rr = gather(&var1.sigma_bar, r, r);

    let p33 = dare_solve(&a33, &ar3, &sig_33, &sig_3r, &sig_rr)?;
    let sig_red = symmetrize(&(&ar3 * &p33 * ar3.transpose() + &sig_rr));

    // target positions within the reduced index list
    let tpos: Vec<usize> = part
        .target()
        .iter()
        .map(|ti| r.iter().position(|ri| ri == ti).expect("target in reduced"))
        .collect();
    let red_11 = gather(&sig_red, &tpos, &tpos);
    let full_11 = gather(&var1.sigma_bar, part.target(), part.target());

    let ld_red = log_det(&red_11).ok_or_else(|| {
        Error::Degeneracy("reduced innovation covariance not positive-definite".into())
    })?;
    let ld_full = log_det(&full_11).ok_or_else(|| {
        Error::Degeneracy("innovation covariance not positive-definite".into())
    })?;
    Ok(ld_red - ld_full)
}

fn log_det(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    let mut ld = 0.0;
    for i in 0..m.nrows() {
        if l[(i, i)] <= 0.0 {
            return None;
        }
        ld += 2.0 * l[(i, i)].ln();
    }
    Some(ld)
}

/// F(dt)/dt: the subsampling estimate of the GC rate.
pub fn rate_via_subsampling(model: &VouModel, part: &Partition, dt: f64) -> Result<f64> {
    let var1 = subsample(model, dt)?;
    Ok(discrete_ss_gc(&var1, part)? / dt)
}
