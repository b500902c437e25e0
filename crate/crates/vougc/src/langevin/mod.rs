//! Langevin/ODE system definitions: a drift-expression DSL with symbolic
//! differentiation, analytic built-ins (Lorenz), diffusion specifications,
//! and local linearization to a VOU model.
//!
//! The linearization of dy = f(y) dt + dw(y, t) around y0 keeps A = J(y0),
//! Sigma = Sigma(y0). The mean-level translation of the linearized process is
//! deliberately not computed: GC rates depend only on (A, Sigma), so rates
//! are produced even where J is singular, with the singularity flagged.
//! State-dependent diffusion is treated as weakly multiplicative: its
//! gradient never enters the linearization (a modeling assumption on the
//! user's side, not checked numerically).

pub mod expr;
mod parse;

pub use expr::Expr;
pub use parse::{parse_expression, parse_system};

use crate::gc::{check_positive_definite, VouModel};
use crate::linalg::{require_symmetric, spectrum};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Relative tolerance for flagging a singular Jacobian determinant.
pub const SING_TOL: f64 = 1e-10;

/// Diffusion covariance Sigma(y).
#[derive(Debug, Clone)]
pub enum DiffusionSpec {
    /// nu * I with nu > 0.
    ScalarIdentity(f64),
    /// Constant symmetric positive-definite matrix.
    Constant(DMatrix<f64>),
    /// Entry expressions; must evaluate symmetric positive-definite at every
    /// queried point.
    Expressions(Vec<Vec<Expr>>),
}

/// Jacobian strategy: symbolic is the default; central finite differences
/// are kept as a cross-check path.
#[derive(Debug, Clone)]
pub enum JacobianSpec {
    Symbolic(Vec<Vec<Expr>>),
    FiniteDifference,
}

/// A Langevin system dy = f(y) dt + dw with Cov[dw] = Sigma(y) dt.
#[derive(Debug, Clone)]
pub struct LangevinSystem {
    n: usize,
    drift: Vec<Expr>,
    jacobian: JacobianSpec,
    sigma: DiffusionSpec,
    params: BTreeMap<String, f64>,
}

impl LangevinSystem {
    /// Build a system from parsed parts; derives the symbolic Jacobian.
    pub fn from_parts(
        n: usize,
        drift: Vec<Expr>,
        sigma: DiffusionSpec,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if drift.len() != n {
            return Err(Error::Dimension(format!(
                "{} drift components for dimension {n}",
                drift.len()
            )));
        }
        match &sigma {
            DiffusionSpec::ScalarIdentity(nu) => {
                if !(nu.is_finite() && *nu > 0.0) {
                    return Err(Error::Validation(format!(
                        "scalar diffusion {nu} must be finite and positive"
                    )));
                }
            }
            DiffusionSpec::Constant(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::Dimension(format!(
                        "Sigma is {}x{} for dimension {n}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                require_symmetric(m, "Sigma")?;
                check_positive_definite(m, "Sigma")?;
            }
            DiffusionSpec::Expressions(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!(
                        "expression Sigma must be {n}x{n}"
                    )));
                }
            }
        }
        let jac: Vec<Vec<Expr>> = drift
            .iter()
            .map(|f| (0..n).map(|j| f.differentiate(j)).collect())
            .collect();
        Ok(LangevinSystem {
            n,
            drift,
            jacobian: JacobianSpec::Symbolic(jac),
            sigma,
            params,
        })
    }

    /// Override the derived Jacobian with hand-coded expressions.
    pub fn with_jacobian(mut self, jac: Vec<Vec<Expr>>) -> Result<Self> {
        if jac.len() != self.n || jac.iter().any(|r| r.len() != self.n) {
            return Err(Error::Dimension(format!(
                "Jacobian must be {0}x{0}",
                self.n
            )));
        }
        self.jacobian = JacobianSpec::Symbolic(jac);
        Ok(self)
    }

    /// Switch to the central finite-difference Jacobian path.
    pub fn with_finite_difference_jacobian(mut self) -> Self {
        self.jacobian = JacobianSpec::FiniteDifference;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn sigma_spec(&self) -> &DiffusionSpec {
        &self.sigma
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::Dimension(format!(
                "point has {} coordinates for dimension {}",
                y.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// f(y); NaN or infinity in any component is a domain error carrying y.
    pub fn drift_at(&self, y: &[f64]) -> Result<DVector<f64>> {
        self.check_point(y)?;
        let vals: Vec<f64> = self.drift.iter().map(|e| e.eval(y)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degeneracy(format!(
                "drift not finite at point {y:?}"
            )));
        }
        Ok(DVector::from_vec(vals))
    }

    /// J(y) = grad f(y), symbolic or finite-difference per the strategy.
    pub fn jacobian_at(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(y)?;
        let j = match &self.jacobian {
            JacobianSpec::Symbolic(rows) => DMatrix::from_fn(self.n, self.n, |i, k| {
                rows[i][k].eval(y)
            }),
            JacobianSpec::FiniteDifference => self.finite_difference_jacobian(y)?,
        };
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degeneracy(format!(
                "Jacobian not finite at point {y:?}"
            )));
        }
        Ok(j)
    }

    /// Central finite differences with step h = cbrt(eps) * max(1, |y_k|).
    pub fn finite_difference_jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(y)?;
        let h0 = f64::EPSILON.cbrt();
        let mut j = DMatrix::zeros(self.n, self.n);
        let mut lo = y.to_vec();
        let mut hi = y.to_vec();
        for k in 0..self.n {
            let h = h0 * y[k].abs().max(1.0);
            lo[k] = y[k] - h;
            hi[k] = y[k] + h;
            for (i, f) in self.drift.iter().enumerate() {
                j[(i, k)] = (f.eval(&hi) - f.eval(&lo)) / (2.0 * h);
            }
            lo[k] = y[k];
            hi[k] = y[k];
        }
        Ok(j)
    }

    /// Sigma(y), validated symmetric positive-definite.
    pub fn sigma_at(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(y)?;
        match &self.sigma {
            DiffusionSpec::ScalarIdentity(nu) => {
                Ok(DMatrix::from_diagonal_element(self.n, self.n, *nu))
            }
            DiffusionSpec::Constant(m) => Ok(m.clone()),
            DiffusionSpec::Expressions(rows) => {
                let m = DMatrix::from_fn(self.n, self.n, |i, k| rows[i][k].eval(y));
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Degeneracy(format!(
                        "diffusion not finite at point {y:?}"
                    )));
                }
                require_symmetric(&m, "Sigma(y)")?;
                check_positive_definite(&m, "Sigma(y)")?;
                Ok(m)
            }
        }
    }
}

/// Linearization of a Langevin system at one phase-space point.
#[derive(Debug, Clone)]
pub struct LocalLinearization {
    pub point: DVector<f64>,
    /// Local VOU model with A = J(y0), Sigma = Sigma(y0).
    pub vou: VouModel,
    pub det_j: f64,
    /// Largest real part of the Jacobian spectrum, lambda(y0).
    pub stability_exponent: f64,
    /// |det J| at or below SING_TOL * max(1, inf-norm of J). Flag only:
    /// rates are still computed at singular points.
    pub singular: bool,
}

/// Linearize at y0: A = J(y0), Sigma = Sigma(y0), plus det J, lambda and the
/// singularity flag.
pub fn linearize(system: &LangevinSystem, y0: &[f64]) -> Result<LocalLinearization> {
    let j = system.jacobian_at(y0)?;
    let sigma = system.sigma_at(y0)?;
    let det_j = j.clone().lu().determinant();
    let inf_norm = (0..j.nrows())
        .map(|i| j.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let singular = det_j.abs() <= SING_TOL * inf_norm.max(1.0);
    let stability_exponent = spectrum(&j)?.max_real_part;
    let vou = VouModel::new(j, sigma)?;
    Ok(LocalLinearization {
        point: DVector::from_column_slice(y0),
        vou,
        det_j,
        stability_exponent,
        singular,
    })
}

/// The three-variable Lorenz system with hand-coded Jacobian and isotropic
/// diffusion nu * I:
///   dy1 = sigma (y2 - y1)
///   dy2 = y1 (rho - y3) - y2
///   dy3 = y1 y2 - beta y3
pub fn builtin_lorenz(sigma: f64, rho: f64, beta: f64, nu: f64) -> Result<LangevinSystem> {
    for (name, v) in [("sigma", sigma), ("rho", rho), ("beta", beta), ("nu", nu)] {
        if !v.is_finite() {
            return Err(Error::Validation(format!("{name} = {v} is not finite")));
        }
    }
    use expr::{bin, neg, BinOp::*, Expr::Num};
    let y = Expr::var;
    let drift = vec![
        bin(Mul, Num(sigma), bin(Sub, y(1), y(0))),
        bin(Sub, bin(Mul, y(0), bin(Sub, Num(rho), y(2))), y(1)),
        bin(Sub, bin(Mul, y(0), y(1)), bin(Mul, Num(beta), y(2))),
    ];
    let jac = vec![
        vec![Num(-sigma), Num(sigma), Num(0.0)],
        vec![bin(Sub, Num(rho), y(2)), Num(-1.0), neg(y(0))],
        vec![y(1), y(0), Num(-beta)],
    ];
    let mut params = BTreeMap::new();
    params.insert("sigma".to_string(), sigma);
    params.insert("rho".to_string(), rho);
    params.insert("beta".to_string(), beta);
    params.insert("nu".to_string(), nu);
    LangevinSystem::from_parts(3, drift, DiffusionSpec::ScalarIdentity(nu), params)?
        .with_jacobian(jac)
}

/// DSL text for the Lorenz system, used to cross-check the parser and the
/// symbolic differentiation against the analytic built-in.
pub fn lorenz_dsl_text(sigma: f64, rho: f64, beta: f64, nu: f64) -> String {
    format!(
        "[system]\n\
         n = 3\n\
         [params]\n\
         sigma = {sigma}\n\
         rho = {rho}\n\
         beta = {beta}\n\
         [drift]\n\
         dy1 = sigma * (y2 - y1)\n\
         dy2 = y1 * (rho - y3) - y2\n\
         dy3 = y1 * y2 - beta * y3\n\
         [sigma]\n\
         scalar = {nu}\n"
    )
}

/// The Lorenz Jacobian-determinant identity
/// det J = sigma * (beta * (rho - 1 - y3) - y1 * (y1 + y2)).
pub fn lorenz_det_j(sigma: f64, rho: f64, beta: f64, y: &[f64]) -> f64 {
    sigma * (beta * (rho - 1.0 - y[2]) - y[0] * (y[0] + y[1]))
}
