//! Kelly-optimal portfolios for assets following multiplicative lognormal
//! random walks.
//!
//! The crate covers:
//! - the asset model and price simulation ([`model`]),
//! - Gaussian expectations, exact and small-variance approximations ([`expectation`]),
//! - Kelly solvers, closed form and numerical ([`kelly`]),
//! - mean-variance frontiers ([`markowitz`]),
//! - portfolio condensation analytics ([`condensation`]),
//! - the logarithmic efficient frontier ([`lef`]),
//! - Monte Carlo growth comparisons ([`simulate`]).

pub mod condensation;
pub mod error;
pub mod expectation;
pub mod kelly;
pub mod lef;
pub mod markowitz;
pub mod model;
pub mod projection;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use expectation::{ExpectationMethod, GrowthStats, ScenarioSet};
pub use kelly::{ConstrainedSolution, SolverOptions};
pub use markowitz::{FrontierPoint, KellyPoint, MomentSums};
pub use model::{Asset, AssetUniverse, ConstraintPolicy, Portfolio, PortfolioViolation, PricePaths};
