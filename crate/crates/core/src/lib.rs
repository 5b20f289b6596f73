//! Numerical laboratory for the boundary-driven quasilinear wave equation
//! `r_t − p_x = 0`, `p_t − τ(r)_x = 0` on `[0, 1]`, with `p(t, 0) = 0` and
//! `τ(r(t, 1)) = τ̄(t)`.
//!
//! Weak solutions are approached through the viscous system with extra
//! Neumann conditions. The crate integrates that system, measures energy and
//! free-energy balances, builds bounded Lax entropy pairs, evaluates the
//! heat-kernel representation and compares with a stochastic oscillator chain.

pub mod acceptance;
pub mod chain_sde;
pub mod config;
pub mod convergence_lab;
pub mod entropy_pairs;
pub mod error;
pub mod greens;
pub mod model;
pub mod par;
pub mod quadrature;
pub mod thermo;
pub mod viscous_solver;

pub use error::{Error, Result};
pub use par::Execution;
