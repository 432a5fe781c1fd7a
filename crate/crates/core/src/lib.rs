//! Numerical engine for shortfall-risk minimization of game (Israeli) options
//! in markets where every trade costs at least a fixed fee.
//!
//! The transaction cost of buying or selling `beta` shares at price `S` is
//! `max(delta, mu * |beta| * S)`, so rebalancing is only worthwhile finitely
//! often and classical delta hedging is unavailable. The engine computes the
//! minimal shortfall risk and the optimal hedge-with-cancellation policy on a
//! binomial lattice by a Dynkin-game dynamic program over a discretized
//! (cash, shares) state space, and validates the binomial answers against the
//! continuous Black-Scholes model by lifting the policy through a Skorokhod
//! first-passage embedding and simulating it with Monte Carlo.
//!
//! Module map:
//! - [`model`]: market parameters, binomial lattice, path simulation and
//!   first-passage embedding extraction.
//! - [`friction`]: the transaction-cost algebra (trade cost, post-trade
//!   value, feasible-trade intervals, no-trade mark-to-market).
//! - [`payoff`]: game payoff pairs and their lattice discretization.
//! - [`solver`]: the backward-induction solver producing a risk surface and
//!   a seller policy.
//! - [`oracle`]: brute-force enumeration on tiny trees, the independent
//!   cross-check of the solver.
//! - [`lift`]: policy lifting into the continuous model and Monte Carlo
//!   evaluation.
//! - [`experiments`]: convergence studies across lattice depth.
//! - [`checks`]: invariant suites run over solved surfaces.

pub mod checks;
mod exec;
pub mod experiments;
pub mod friction;
pub mod lift;
pub mod model;
pub mod oracle;
pub mod payoff;
pub mod solver;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("grid: {0}")]
    Grid(String),
    #[error("size limit: {0}")]
    SizeLimit(String),
    #[error("oracle enumeration too large: {leaves} leaf evaluations exceeds cap {cap}")]
    EnumerationTooLarge { leaves: u128, cap: u128 },
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("experiment: {0}")]
    Experiment(String),
    #[error("query: {0}")]
    Query(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParam {
            name,
            reason: format!("must be finite, got {value}"),
        })
    }
}
