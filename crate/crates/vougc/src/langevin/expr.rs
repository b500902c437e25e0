//! Expression AST for drift and diffusion definitions, with evaluation and
//! exact symbolic differentiation.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;

/// Maximum expression tree depth accepted from user input.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    /// Internal only (arises from differentiating abs); sign(0) = 0.
    Sign,
}

impl Func {
    pub fn by_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// 0-based state variable index (DSL surface: y1..yn).
    Var(usize),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Param(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.depth(),
            Expr::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Substitute parameter names with their numeric values.
    pub fn bind_params(&self, table: &BTreeMap<String, f64>) -> Result<Expr> {
        Ok(match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => Expr::Var(*i),
            Expr::Param(name) => {
                let v = table.get(name).ok_or_else(|| {
                    Error::Validation(format!("undefined parameter `{name}`"))
                })?;
                Expr::Num(*v)
            }
            Expr::Neg(e) => neg(e.bind_params(table)?),
            Expr::Bin(op, a, b) => bin(*op, a.bind_params(table)?, b.bind_params(table)?),
            Expr::Call(f, e) => call(*f, e.bind_params(table)?),
        })
    }

    /// Evaluate with state values; parameters must already be bound.
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => y[*i],
            Expr::Param(_) => f64::NAN,
            Expr::Neg(e) => -e.eval(y),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(y), b.eval(y));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let x = e.eval(y);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Sqrt => x.sqrt(),
                    Func::Tanh => x.tanh(),
                    Func::Abs => x.abs(),
                    Func::Sign => {
                        if x == 0.0 {
                            0.0
                        } else {
                            x.signum()
                        }
                    }
                }
            }
        }
    }

    /// Exact symbolic partial derivative with respect to state variable `wrt`.
    /// Simplification is limited to constant folding and identity elimination.
    /// d/dx |x| is sign(x), with sign(0) = 0 by convention.
    pub fn differentiate(&self, wrt: usize) -> Expr {
        match self {
            Expr::Num(_) | Expr::Param(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == wrt { 1.0 } else { 0.0 }),
            Expr::Neg(e) => neg(e.differentiate(wrt)),
            Expr::Bin(op, a, b) => {
                let da = a.differentiate(wrt);
                let db = b.differentiate(wrt);
                match op {
                    BinOp::Add => bin(BinOp::Add, da, db),
                    BinOp::Sub => bin(BinOp::Sub, da, db),
                    BinOp::Mul => bin(
                        BinOp::Add,
                        bin(BinOp::Mul, da, (**b).clone()),
                        bin(BinOp::Mul, (**a).clone(), db),
                    ),
                    BinOp::Div => {
                        // (da b - a db) / b^2
                        let numer = bin(
                            BinOp::Sub,
                            bin(BinOp::Mul, da, (**b).clone()),
                            bin(BinOp::Mul, (**a).clone(), db),
                        );
                        let denom = bin(BinOp::Mul, (**b).clone(), (**b).clone());
                        bin(BinOp::Div, numer, denom)
                    }
                    BinOp::Pow => match &**b {
                        // constant exponent: c a^(c-1) a'
                        Expr::Num(c) => bin(
                            BinOp::Mul,
                            bin(
                                BinOp::Mul,
                                Expr::Num(*c),
                                bin(BinOp::Pow, (**a).clone(), Expr::Num(c - 1.0)),
                            ),
                            da,
                        ),
                        // general: a^b (db log a + b a'/a)
                        _ => bin(
                            BinOp::Mul,
                            bin(BinOp::Pow, (**a).clone(), (**b).clone()),
                            bin(
                                BinOp::Add,
                                bin(BinOp::Mul, db, call(Func::Log, (**a).clone())),
                                bin(
                                    BinOp::Div,
                                    bin(BinOp::Mul, (**b).clone(), da),
                                    (**a).clone(),
                                ),
                            ),
                        ),
                    },
                }
            }
            Expr::Call(f, e) => {
                let de = e.differentiate(wrt);
                let inner = (**e).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tan => {
                        // 1 / cos^2
                        let c = call(Func::Cos, inner);
                        bin(
                            BinOp::Div,
                            Expr::Num(1.0),
                            bin(BinOp::Mul, c.clone(), c),
                        )
                    }
                    Func::Exp => call(Func::Exp, inner),
                    Func::Log => bin(BinOp::Div, Expr::Num(1.0), inner),
                    Func::Sqrt => bin(
                        BinOp::Div,
                        Expr::Num(0.5),
                        call(Func::Sqrt, inner),
                    ),
                    Func::Tanh => {
                        // 1 - tanh^2
                        let t = call(Func::Tanh, inner);
                        bin(BinOp::Sub, Expr::Num(1.0), bin(BinOp::Mul, t.clone(), t))
                    }
                    Func::Abs => call(Func::Sign, inner),
                    Func::Sign => Expr::Num(0.0),
                };
                bin(BinOp::Mul, outer, de)
            }
        }
    }
}

/// Smart constructor: constant folding and identity elimination.
pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        let v = match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
            BinOp::Pow => x.powf(*y),
        };
        if v.is_finite() {
            return Expr::Num(v);
        }
    }
    match (op, &a, &b) {
        (BinOp::Add, Expr::Num(z), _) if *z == 0.0 => return b,
        (BinOp::Add, _, Expr::Num(z)) if *z == 0.0 => return a,
        (BinOp::Sub, _, Expr::Num(z)) if *z == 0.0 => return a,
        (BinOp::Sub, Expr::Num(z), _) if *z == 0.0 => return neg(b),
        (BinOp::Mul, Expr::Num(z), _) | (BinOp::Mul, _, Expr::Num(z)) if *z == 0.0 => {
            return Expr::Num(0.0)
        }
        (BinOp::Mul, Expr::Num(o), _) if *o == 1.0 => return b,
        (BinOp::Mul, _, Expr::Num(o)) if *o == 1.0 => return a,
        (BinOp::Div, _, Expr::Num(o)) if *o == 1.0 => return a,
        (BinOp::Div, Expr::Num(z), _) if *z == 0.0 => return Expr::Num(0.0),
        (BinOp::Pow, _, Expr::Num(o)) if *o == 1.0 => return a,
        _ => {}
    }
    Expr::Bin(op, Box::new(a), Box::new(b))
}

pub fn neg(e: Expr) -> Expr {
    match e {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn call(f: Func, e: Expr) -> Expr {
    Expr::Call(f, Box::new(e))
}

impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(out, "{v}"),
            Expr::Var(i) => write!(out, "y{}", i + 1),
            Expr::Param(name) => write!(out, "{name}"),
            Expr::Neg(e) => write!(out, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(out, "({a} {sym} {b})")
            }
            Expr::Call(f, e) => write!(out, "{}({e})", f.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y(i: usize) -> Expr {
        Expr::var(i)
    }

    #[test]
    fn product_rule() {
        // d/dy1 (y1 * y2) = y2
        let e = bin(BinOp::Mul, y(0), y(1));
        assert_eq!(e.differentiate(0), y(1));
    }

    #[test]
    fn lorenz_jacobian_entries() {
        // d/dy3 (y1 * (rho - y3)) = -y1 (with rho bound)
        let rho = Expr::Num(28.0);
        let e = bin(BinOp::Mul, y(0), bin(BinOp::Sub, rho, y(2)));
        let d = e.differentiate(2);
        // evaluates to -y1 at arbitrary points
        for p in [[1.0, 2.0, 3.0], [-0.5, 4.0, 0.1]] {
            assert_eq!(d.eval(&p), -p[0]);
        }
        // d/dy2 (sigma * (y2 - y1)) = sigma
        let e = bin(
            BinOp::Mul,
            Expr::Num(10.0),
            bin(BinOp::Sub, y(1), y(0)),
        );
        assert_eq!(e.differentiate(1), Expr::Num(10.0));
    }

    #[test]
    fn abs_derivative_zero_at_origin() {
        let e = call(Func::Abs, y(0));
        let d = e.differentiate(0);
        assert_eq!(d.eval(&[0.0]), 0.0);
        assert_eq!(d.eval(&[2.0]), 1.0);
        assert_eq!(d.eval(&[-2.0]), -1.0);
    }

    #[test]
    fn symbolic_matches_finite_difference() {
        let exprs = vec![
            bin(
                BinOp::Mul,
                call(Func::Sin, y(0)),
                call(Func::Exp, bin(BinOp::Mul, Expr::Num(0.3), y(1))),
            ),
            bin(BinOp::Pow, y(0), Expr::Num(3.0)),
            bin(BinOp::Div, y(1), bin(BinOp::Add, y(0), Expr::Num(2.0))),
            call(Func::Tanh, bin(BinOp::Mul, y(0), y(1))),
            bin(BinOp::Pow, bin(BinOp::Add, y(0), Expr::Num(3.0)), y(1)),
        ];
        let h = f64::EPSILON.cbrt();
        for e in &exprs {
            for wrt in 0..2 {
                for point in [[0.7, -0.4], [1.3, 0.9], [0.2, 2.1]] {
                    let sym = e.differentiate(wrt).eval(&point);
                    let mut lo = point;
                    let mut hi = point;
                    let step = h * point[wrt].abs().max(1.0);
                    lo[wrt] -= step;
                    hi[wrt] += step;
                    let fd = (e.eval(&hi) - e.eval(&lo)) / (2.0 * step);
                    let rel = (sym - fd).abs() / sym.abs().max(1.0);
                    assert!(rel < 1e-5, "{e} d/dy{wrt} at {point:?}: sym={sym} fd={fd}");
                }
            }
        }
    }

    #[test]
    fn bind_params_folds_constants() {
        let mut table = BTreeMap::new();
        table.insert("a".to_string(), 2.0);
        let e = bin(BinOp::Mul, Expr::Param("a".into()), Expr::Num(3.0));
        assert_eq!(e.bind_params(&table).unwrap(), Expr::Num(6.0));
        let missing = Expr::Param("zeta".into());
        assert!(missing.bind_params(&table).is_err());
    }
}
