//! Analytic equilibrium solver and mechanism simulator for resource markets
//! that sell through a fixed-price reservation stage followed by a
//! market-clearing spot stage, with risk-averse unit-demand buyers.
//!
//! - [`curves`]: piecewise-linear concave utility curves and the risk-aversion order
//! - [`population`]: finite type and supply distributions with explicit CDF conventions
//! - [`clearing`]: market-clearing prices and rationed allocations
//! - [`equilibrium`]: the unique subgame-perfect equilibrium of the dual mechanism
//! - [`mechanisms`]: revenue / welfare / efficiency of spot-only, reservation-only,
//!   and dual markets, plus the pay-the-spot-price welfare benchmark
//! - [`experiments`]: comparative statics, indifference budgets, price sweeps,
//!   and the seeded random scenario generator
//! - [`oracle`]: finite-agent Monte Carlo cross-validation
//! - [`scenario`]: the line-oriented scenario file format

pub mod clearing;
pub mod curves;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod mechanisms;
pub mod numfmt;
pub mod oracle;
pub mod population;
pub mod scenario;

pub use curves::{compare_risk_aversion, compose_concave, RiskOrder, UtilityCurve};
pub use equilibrium::{
    expected_spot_utility, solve, validate_assumptions, verify_equilibrium, Equilibrium,
    SpotDistribution, TieBreak, TieBreakPolicy,
};
pub use error::{MarketError, Result};
pub use mechanisms::{
    benchmark_welfare, check_welfare_chain, run_dual, run_reservation_only, run_spot_only,
    MechanismOutcome,
};
pub use population::{SupplyAtom, SupplyDistribution, TypeAtom, TypeDistribution};
pub use scenario::{parse_scenario, serialize_scenario, Scenario};
