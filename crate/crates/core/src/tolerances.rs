//! Thresholds shared by unit tests, the experiment runner and the
//! acceptance suite.

/// Per-step residual bound for identities that hold exactly in exact
/// arithmetic, before scaling by `1 + |state|^2`.
pub const SOLVER_EXACT: f64 = 1e-10;

/// Bound on algebraic tableau conditions.
pub const ALGEBRAIC: f64 = 1e-12;

/// Bound on tableau consistency (weight and row sums).
pub const CONSISTENCY: f64 = 1e-14;

/// Semidiscrete conservation-law contract, before scaling by `1 + |y|^2`.
pub const CONTRACT: f64 = 1e-12;

/// Per-node bound for fully discrete conservation and multisymplectic laws.
pub const DISCRETE_LAW: f64 = 1e-11;

/// Allowed deviation between measured and declared convergence order.
pub const ORDER_SLACK: f64 = 0.2;

pub fn solver_exact_bound(state_norm: f64) -> f64 {
    SOLVER_EXACT * (1.0 + state_norm * state_norm)
}

pub fn is_solver_exact(residual: f64, state_norm: f64) -> bool {
    residual.abs() <= solver_exact_bound(state_norm)
}
