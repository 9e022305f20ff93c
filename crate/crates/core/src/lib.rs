//! Solvers for the capped-list school choice game with incomplete information.
//!
//! Students draw private types, submit preference lists of at most `l`
//! schools, and are matched by student-proposing deferred acceptance. This
//! crate simulates that game, computes symmetric Bayes-Nash equilibria in the
//! two tractable regimes (one application per student under strong
//! alpha-reducibility, and schools sharing a single scoring function), and
//! checks candidate strategies against exact and Monte Carlo payoff oracles.
//!
//! Probability bookkeeping (acceptance probabilities, capacity distributions,
//! rank tails) is generic over [`Scalar`], so the same code runs in `f64` for
//! production and in exact rationals for oracle comparisons.

pub mod error;
pub mod game;
pub mod identical;
pub mod io;
pub mod market;
pub mod sampling;
pub mod scalar;
pub mod strong_alpha;
pub mod verify;

pub use error::{Error, Result};
pub use game::{
    canonical_actions, ex_ante_payoff, exact_interim_payoff, exact_interim_payoffs,
    mc_interim_payoff, FiniteTypeSet, FunctionSpec, GameSpec, Oracle, PayoffEstimate, School,
    SymmetricStrategy, TypePoint,
};
pub use identical::{
    dp_capacity_distribution, school_pick, solve_identical_dp, solve_identical_mc,
    CapacityDistribution, CapacityVector, DenominatorMode,
};
pub use market::{
    alpha_reduce_match, deferred_acceptance, is_alpha_reducible_bruteforce, serial_dictatorship,
    utility_vector, Action, MarketInstance, Matching, TiePolicy,
};
pub use sampling::{
    analytic_strategy, convergence_experiment, rank_distribution, sample_types, smooth_strategy,
    AnalyticExample, ConvergenceTrace, DistributionSpec,
};
pub use scalar::Scalar;
pub use strong_alpha::{proba, solve_strong_alpha};
pub use verify::{audit_complete_info_outcome, check_interim_epsilon, VerificationReport};

/// Exact rational scalar used by the oracle paths.
pub type Exact = num_rational::BigRational;

/// Capacity distribution in double precision.
pub type CapacityDistributionF64 = CapacityDistribution<f64>;
/// Capacity distribution in exact rational arithmetic.
pub type ExactCapacityDistribution = CapacityDistribution<Exact>;

/// Crate version, recorded in output file headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
