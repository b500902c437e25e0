//! Closed-form Granger-causality and transfer-entropy rates for vector
//! Ornstein-Uhlenbeck (VOU) processes.
//!
//! A VOU model dy = A y dt + dw, dw ~ N(0, Sigma dt), is partitioned into
//! target / conditioning / source coordinates. The conditional GC rate from
//! source to target is obtained from the stabilising solution P33 of a
//! continuous-time algebraic Riccati equation over the source block, with a
//! scalar-quadratic fast path when the source is one-dimensional.

use crate::linalg::{
    self, care_solve, gather, max_abs, pbh_detectable, spectrum, symmetrize, van_loan_integral,
    PBH_TOL, STAB_TOL,
};
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix};

/// Relative tolerance on Cholesky pivots for Sigma positive-definiteness.
pub const PD_TOL: f64 = 1e-12;

/// Drift matrix A and fluctuation covariance Sigma of a linear SDE.
#[derive(Debug, Clone)]
pub struct VouModel {
    n: usize,
    a: DMatrix<f64>,
    sigma: DMatrix<f64>,
}

impl VouModel {
    pub fn new(a: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        linalg::require_square(&a)?;
        linalg::require_finite(&a, "A")?;
        linalg::require_finite(&sigma, "Sigma")?;
        if sigma.nrows() != a.nrows() || sigma.ncols() != a.ncols() {
            return Err(Error::Dimension(format!(
                "A is {}x{} but Sigma is {}x{}",
                a.nrows(),
                a.ncols(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        linalg::require_symmetric(&sigma, "Sigma")?;
        check_positive_definite(&sigma, "Sigma")?;
        Ok(VouModel {
            n: a.nrows(),
            a,
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Same model with Sigma -> nu * Sigma.
    pub fn scaled_sigma(&self, nu: f64) -> Result<Self> {
        VouModel::new(self.a.clone(), &self.sigma * nu)
    }
}

pub(crate) fn check_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let max_diag = (0..m.nrows()).map(|i| m[(i, i)]).fold(0.0f64, f64::max);
    let chol = Cholesky::new(m.clone()).ok_or_else(|| {
        Error::Validation(format!("{what} is not positive-definite (Cholesky failed)"))
    })?;
    let l = chol.l();
    for i in 0..m.nrows() {
        let pivot = l[(i, i)] * l[(i, i)];
        if pivot <= PD_TOL * max_diag {
            return Err(Error::Validation(format!(
                "{what} is not positive-definite: pivot {pivot:.3e} below tolerance"
            )));
        }
    }
    Ok(())
}

/// Disjoint target / conditioning / source index sets over coordinates.
#[derive(Debug, Clone)]
pub struct Partition {
    target: Vec<usize>,
    cond: Vec<usize>,
    source: Vec<usize>,
    /// target union cond, sorted ascending (the "reduced" multi-index).
    reduced: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, target: Vec<usize>, cond: Vec<usize>, source: Vec<usize>) -> Result<Self> {
        for (name, list) in [("target", &target), ("cond", &cond), ("source", &source)] {
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Validation(format!(
                    "{name} indices must be strictly increasing"
                )));
            }
        }
        if target.is_empty() || source.is_empty() {
            return Err(Error::Validation(
                "target and source must be non-empty".into(),
            ));
        }
        let mut seen = vec![0usize; n];
        for &i in target.iter().chain(&cond).chain(&source) {
            if i >= n {
                return Err(Error::Validation(format!(
                    "index {i} out of range for dimension {n}"
                )));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Validation(
                "target, cond and source must be pairwise disjoint and cover all coordinates"
                    .into(),
            ));
        }
        let mut reduced: Vec<usize> = target.iter().chain(&cond).copied().collect();
        reduced.sort_unstable();
        Ok(Partition {
            target,
            cond,
            source,
            reduced,
        })
    }

    /// Pairwise-conditional partition: target {i}, source {j}, cond the rest.
    pub fn pairwise(n: usize, i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::Validation("target and source coincide".into()));
        }
        let cond = (0..n).filter(|&k| k != i && k != j).collect();
        Partition::new(n, vec![i], cond, vec![j])
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }
    pub fn cond(&self) -> &[usize] {
        &self.cond
    }
    pub fn source(&self) -> &[usize] {
        &self.source
    }
    pub fn reduced(&self) -> &[usize] {
        &self.reduced
    }
}

/// Diagnostic flags attached to a GC result.
#[derive(Debug, Clone, Copy, Default)]
pub struct GcFlags {
    pub detectable: bool,
    pub source_decoupled: bool,
    pub marginal: bool,
}

/// A GC rate together with its Riccati solution and diagnostics.
#[derive(Debug, Clone)]
pub struct GcResult {
    /// GC rate in nats per unit time.
    pub rate: f64,
    /// Transfer-entropy rate, exactly rate / 2.
    pub te_rate: f64,
    /// Stabilising Riccati solution over the source block.
    pub p33: DMatrix<f64>,
    /// Reduced-model Kalman gain (source x reduced).
    pub kalman_gain: DMatrix<f64>,
    /// Max real part of the closed-loop spectrum.
    pub closed_loop_max_re: f64,
    pub flags: GcFlags,
    /// max-norm residual of the Riccati equation.
    pub residual: f64,
}

/// Which Riccati path to take for the source-block solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiPath {
    /// Scalar quadratic when the source is 1-dimensional, else Hamiltonian.
    Auto,
    /// Always the general Hamiltonian ordered-Schur solver.
    ForceGeneral,
}

/// Source-block Riccati solve, shared between the rate operations. Depends
/// only on the (reduced, source) split, not on the target.
struct SourceSolve {
    p33: DMatrix<f64>,
    kalman_gain: DMatrix<f64>,
    closed_loop_max_re: f64,
    residual: f64,
    flags: GcFlags,
}

fn solve_source(
    model: &VouModel,
    reduced: &[usize],
    source: &[usize],
    path: RiccatiPath,
) -> Result<SourceSolve> {
    let a = model.drift();
    let sig = model.sigma();
    let a33 = gather(a, source, source);
    let ar3 = gather(a, reduced, source);
    let sig_rr = gather(sig, reduced, reduced);
    let sig_3r = gather(sig, source, reduced);
    let sig_r3 = gather(sig, reduced, source);
    let sig_33 = gather(sig, source, source);
    let m = source.len();

    let source_decoupled = max_abs(&ar3) == 0.0;
    if source_decoupled && !spectrum(&a33)?.hurwitz() {
        // the reduced dynamics are unaffected by the source: rate 0 by fiat
        return Ok(SourceSolve {
            p33: DMatrix::zeros(m, m),
            kalman_gain: DMatrix::zeros(m, reduced.len()),
            closed_loop_max_re: spectrum(&a33)?.max_real_part,
            residual: 0.0,
            flags: GcFlags {
                detectable: false,
                source_decoupled: true,
                marginal: false,
            },
        });
    }

    if !pbh_detectable(&a33, &ar3, PBH_TOL)? {
        return Err(Error::NotDetectable);
    }

    let sig_rr_chol = Cholesky::new(sig_rr).ok_or_else(|| {
        Error::IllConditionedCovariance("Sigma_rr is numerically singular".into())
    })?;
    let rr_inv_ar3 = sig_rr_chol.solve(&ar3);
    let rr_inv_sr3 = sig_rr_chol.solve(&sig_r3);
    let ahat = &a33 - &sig_3r * &rr_inv_ar3;
    let rmat = symmetrize(&(ar3.transpose() * &rr_inv_ar3));
    let qhat = symmetrize(&(&sig_33 - &sig_3r * &rr_inv_sr3));

    let (p33, closed_loop_max_re, residual, marginal) = if m == 1 && path == RiccatiPath::Auto {
        // scalar quadratic: a P^2 - 2 b P - c = 0, positive discriminant root
        let qa = rmat[(0, 0)];
        let qb = ahat[(0, 0)];
        let qc = qhat[(0, 0)];
        let (p, closed) = if source_decoupled {
            // branch (i): Ar3 = 0 requires A33 < 0; Lyapunov solution
            (-qc / (2.0 * qb), qb)
        } else {
            let disc = qb * qb + qa * qc;
            let root = disc.max(0.0).sqrt();
            ((qb + root) / qa, -root)
        };
        let res = (2.0 * qb * p - qa * p * p + qc).abs();
        let marginal = closed > -STAB_TOL && closed <= 0.0;
        (DMatrix::from_element(1, 1, p), closed, res, marginal)
    } else {
        let sol = care_solve(&ahat, &rmat, &qhat)?;
        (
            sol.p,
            sol.closed_loop.max_real_part,
            sol.residual,
            sol.marginal,
        )
    };

    // K^R = (P33 Ar3^T + Sigma_3r) Sigma_rr^{-1}
    let kalman_gain = sig_rr_chol
        .solve(&(&ar3 * &p33 + sig_r3))
        .transpose();

    Ok(SourceSolve {
        p33,
        kalman_gain,
        closed_loop_max_re,
        residual,
        flags: GcFlags {
            detectable: true,
            source_decoupled,
            marginal,
        },
    })
}

/// rate = trace[Sigma_11^{-1} A_13 P33 A_13^T]
fn rate_from_p33(
    model: &VouModel,
    target: &[usize],
    source: &[usize],
    p33: &DMatrix<f64>,
) -> Result<f64> {
    let a13 = gather(model.drift(), target, source);
    let sig_11 = gather(model.sigma(), target, target);
    let chol = Cholesky::new(sig_11).ok_or_else(|| {
        Error::IllConditionedCovariance("Sigma_11 is numerically singular".into())
    })?;
    let w = &a13 * p33 * a13.transpose();
    Ok(chol.solve(&w).trace())
}

/// Conditional GC rate from source to target given the conditioning set.
pub fn conditional_rate(model: &VouModel, part: &Partition) -> Result<GcResult> {
    conditional_rate_path(model, part, RiccatiPath::Auto)
}

/// As [`conditional_rate`], with explicit control over the Riccati path
/// (used to cross-check the scalar quadratic against the Hamiltonian solver).
pub fn conditional_rate_path(
    model: &VouModel,
    part: &Partition,
    path: RiccatiPath,
) -> Result<GcResult> {
    check_partition(model, part)?;
    let ss = solve_source(model, part.reduced(), part.source(), path)?;
    let rate = rate_from_p33(model, part.target(), part.source(), &ss.p33)?;
    Ok(GcResult {
        rate,
        te_rate: rate / 2.0,
        p33: ss.p33,
        kalman_gain: ss.kalman_gain,
        closed_loop_max_re: ss.closed_loop_max_re,
        flags: ss.flags,
        residual: ss.residual,
    })
}

fn check_partition(model: &VouModel, part: &Partition) -> Result<()> {
    let covered = part.target().len() + part.cond().len() + part.source().len();
    if covered != model.dim() {
        return Err(Error::Validation(format!(
            "partition covers {covered} coordinates but the model has {}",
            model.dim()
        )));
    }
    Ok(())
}

/// Unconditional GC rate from source to target: R_{23->1} - R_{3->1|2},
/// with the complement of target and source in the remainder role.
pub fn unconditional_rate(
    model: &VouModel,
    target: &[usize],
    source: &[usize],
) -> Result<GcResult> {
    let n = model.dim();
    let mut remainder: Vec<usize> = (0..n)
        .filter(|i| !target.contains(i) && !source.contains(i))
        .collect();
    remainder.sort_unstable();

    let mut full_source: Vec<usize> = source.iter().chain(&remainder).copied().collect();
    full_source.sort_unstable();
    let full_part = Partition::new(n, target.to_vec(), vec![], full_source)?;
    let full = conditional_rate(model, &full_part)?;

    if remainder.is_empty() {
        return Ok(full);
    }

    let cond_part = Partition::new(n, target.to_vec(), source.to_vec(), remainder)?;
    let conditioned = conditional_rate(model, &cond_part)?;

    let rate = full.rate - conditioned.rate;
    if rate < -1e-8 {
        return Err(Error::Consistency(format!(
            "unconditional rate {rate:.3e} below -1e-8; solver failure suspected"
        )));
    }
    Ok(GcResult {
        rate,
        te_rate: rate / 2.0,
        p33: full.p33,
        kalman_gain: full.kalman_gain,
        closed_loop_max_re: full.closed_loop_max_re.max(conditioned.closed_loop_max_re),
        flags: GcFlags {
            detectable: full.flags.detectable && conditioned.flags.detectable,
            source_decoupled: full.flags.source_decoupled && conditioned.flags.source_decoupled,
            marginal: full.flags.marginal || conditioned.flags.marginal,
        },
        residual: full.residual.max(conditioned.residual),
    })
}

/// One entry of a causal graph.
#[derive(Debug, Clone)]
pub enum GraphEntry {
    /// Diagonal: self-causality is undefined.
    Diagonal,
    Rate(f64),
    /// Per-entry failure, recorded in place.
    Failed(String),
}

/// Matrix of causality rates G[i][j] = rate from j to i.
#[derive(Debug, Clone)]
pub struct GcGraph {
    n: usize,
    entries: Vec<GraphEntry>,
}

impl GcGraph {
    fn new(n: usize) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(if i == j {
                    GraphEntry::Diagonal
                } else {
                    GraphEntry::Failed("not computed".into())
                });
            }
        }
        GcGraph { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &GraphEntry {
        &self.entries[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, e: GraphEntry) {
        self.entries[i * self.n + j] = e;
    }

    pub fn rate(&self, i: usize, j: usize) -> Option<f64> {
        match self.entry(i, j) {
            GraphEntry::Rate(r) => Some(*r),
            _ => None,
        }
    }
}

/// Pairwise-conditional causal graph: G[i][j] = R_{y_j -> y_i | rest}.
///
/// The source-block quadratic depends only on the column j, so it is solved
/// once per column. Per-entry failures are recorded in place.
pub fn pairwise_graph(model: &VouModel) -> Result<GcGraph> {
    let n = model.dim();
    if n < 2 {
        return Err(Error::Validation("graph needs dimension >= 2".into()));
    }
    let mut g = GcGraph::new(n);
    for j in 0..n {
        let reduced: Vec<usize> = (0..n).filter(|&k| k != j).collect();
        let ss = match solve_source(model, &reduced, &[j], RiccatiPath::Auto) {
            Ok(ss) => ss,
            Err(e) => {
                for i in 0..n {
                    if i != j {
                        g.set(i, j, GraphEntry::Failed(e.to_string()));
                    }
                }
                continue;
            }
        };
        for i in 0..n {
            if i == j {
                continue;
            }
            match rate_from_p33(model, &[i], &[j], &ss.p33) {
                Ok(r) => g.set(i, j, GraphEntry::Rate(r)),
                Err(e) => g.set(i, j, GraphEntry::Failed(e.to_string())),
            }
        }
    }
    Ok(g)
}

/// Unconditional causal graph: G[i][j] = R_{y_j -> y_i}, computed per row
/// from the (n-1)-dimensional CARE with the full complement as source, minus
/// the conditional rate from the remaining variables given y_j.
pub fn unconditional_graph(model: &VouModel) -> Result<GcGraph> {
    let n = model.dim();
    let mut g = GcGraph::new(n);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let part = Partition::new(n, vec![i], vec![], others)?;
        let total = match conditional_rate(model, &part) {
            Ok(r) => r.rate,
            Err(e) => {
                for j in 0..n {
                    if j != i {
                        g.set(i, j, GraphEntry::Failed(e.to_string()));
                    }
                }
                continue;
            }
        };
        for j in 0..n {
            if j == i {
                continue;
            }
            if n == 2 {
                // no remainder to condition away
                g.set(i, j, GraphEntry::Rate(total));
                continue;
            }
            let rest: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
            let part = match Partition::new(n, vec![i], vec![j], rest) {
                Ok(p) => p,
                Err(e) => {
                    g.set(i, j, GraphEntry::Failed(e.to_string()));
                    continue;
                }
            };
            match conditional_rate(model, &part) {
                Ok(r) => g.set(i, j, GraphEntry::Rate(total - r.rate)),
                Err(e) => g.set(i, j, GraphEntry::Failed(e.to_string())),
            }
        }
    }
    Ok(g)
}

/// Finite-horizon GC F(h) = log |E^R_11(h)| - log |E_11(h)|, computed exactly
/// for the VOU case via Van Loan integrals and the reduced Kalman gain.
pub fn finite_horizon_gc(model: &VouModel, part: &Partition, h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::Validation(format!("horizon h = {h} must be > 0")));
    }
    check_partition(model, part)?;
    let cr = conditional_rate(model, part)?;
    let n = model.dim();
    let r = part.reduced();
    let s = part.source();
    let t = part.target();

    let full = van_loan_integral(model.drift(), model.sigma(), h)?;
    let e11 = gather(&full, t, t);

    // M = [I; K^R] arranged on global coordinates: reduced rows get identity,
    // source rows get the Kalman gain.
    let mut mmat = DMatrix::<f64>::zeros(n, r.len());
    for (k, &ri) in r.iter().enumerate() {
        mmat[(ri, k)] = 1.0;
    }
    for (l, &si) in s.iter().enumerate() {
        for k in 0..r.len() {
            mmat[(si, k)] = cr.kalman_gain[(l, k)];
        }
    }
    let sig_rr = gather(model.sigma(), r, r);
    let qr = symmetrize(&(&mmat * sig_rr * mmat.transpose()));
    let reduced = van_loan_integral(model.drift(), &qr, h)?;
    let er11 = gather(&reduced, t, t);

    let ld_full = log_det_pd(&e11).ok_or_else(|| {
        Error::Degeneracy("E_11(h) is not positive-definite; h too small".into())
    })?;
    let ld_red = log_det_pd(&er11).ok_or_else(|| {
        Error::Degeneracy("E^R_11(h) is not positive-definite; h too small".into())
    })?;
    Ok(ld_red - ld_full)
}

fn log_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    let mut ld = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if d <= 0.0 {
            return None;
        }
        ld += 2.0 * d.ln();
    }
    Some(ld)
}
