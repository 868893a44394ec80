//! Container pre-marshalling under uncertain ship arrival orders.
//!
//! Finds storage layouts minimizing the conditional value-at-risk of the
//! number of misplaced containers over a set of sampled arrival orders,
//! either with one monolithic MILP ([`formulation::solve_direct`]) or with
//! an exact cutting-plane loop ([`cutting_plane::run_cutting_plane`]).

pub mod cutting_plane;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod formulation;
pub mod milp;
pub mod oracle;
pub mod risk;
pub mod sampling;

pub use domain::{count_misplaced, ArrivalOrder, BayConfig, Layout, Scenario, ScenarioSet};
pub use error::{Error, Result};
pub use risk::{empirical_cvar, loss_distribution, quantile, CvarResult, LossDistribution};
