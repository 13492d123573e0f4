//! Long-run CVaR and mean-CVaR maximization for finite Markov decision
//! processes.
//!
//! Under a stationary randomized policy the per-step reward converges in law
//! to the reward of the stationary state-action distribution, so the
//! long-run CVaR becomes `max_x min_y v(x, y)` over the stationary
//! distribution polytope, with
//! `v(x, y) = Σ x(i,a) { y + [r(i,a) − y]⁺ / (1 − α) + β r(i,a) }`.
//! [`solver::solve_cvar`] solves this saddle problem with linear programs,
//! recovers an optimal policy with at most one randomized state, and
//! certifies the result against independent oracles.

pub mod chains;
pub mod error;
pub mod evaluate;
pub mod lp;
pub mod model;
pub mod risk;
pub mod solver;

pub use error::{Error, Result};
