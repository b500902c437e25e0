//! Granger-causality rates for vector Ornstein-Uhlenbeck (VOU) processes,
//! computed in closed form via continuous-time algebraic Riccati equations,
//! and GC / stability maps for Langevin and deterministic ODE systems via
//! local linearization.
//!
//! The crate is organised as:
//!
//! - [`linalg`]: dense matrix-equation solvers (matrix exponential, Lyapunov,
//!   CARE, DARE, PBH detectability, Van Loan integrals).
//! - [`gc`]: closed-form conditional/unconditional GC rates and causal graphs
//!   for VOU models, plus the finite-horizon GC.
//! - [`oracle`]: independent discrete-time verification path via stroboscopic
//!   subsampling and the reduced DARE.
//! - [`langevin`]: drift-expression DSL, symbolic differentiation, built-in
//!   systems, and local linearization to a VOU model.
//! - [`map`]: trajectory integration, GC/stability map sampling, global rates.
//! - [`formats`]: model / system document formats and run manifests.

pub mod error;
pub mod formats;
pub mod gc;
pub mod langevin;
pub mod linalg;
pub mod map;
pub mod oracle;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
