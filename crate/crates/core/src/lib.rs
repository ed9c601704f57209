//! Probability-of-causation bounds and their Bayesian uncertainty.
//!
//! * [`bounds`]: deterministic interval arithmetic for PC and PC*.
//! * [`studies`]: 2x2 study tables, odds and risk ratios, design rules.
//! * [`posterior`]: Beta credences and seeded draws of the random interval.
//! * [`summaries`]: mixture summaries, coverage curves, histograms.
//! * [`simulate`]: potential-outcome population simulator used as an oracle.
//! * [`cli`]: the `pcbounds` command-line front end.

pub mod bounds;
pub mod cli;
pub mod posterior;
mod rng;
pub mod simulate;
pub mod studies;
pub mod summaries;

pub use bounds::{
    brute_force_pc_range, pc_bounds, pc_bounds_simple, pc_from_joint, pc_lower, pc_star_bounds, pc_star_from_pc,
    risk_ratio, BoundsError, ExposureChances, MarginalChances, PotentialJoint, RiskRatio, UncertaintyInterval,
};
pub use posterior::{beta_moments, posterior_update, prob_lower_zero, sample_draws, BetaParams, DrawSet, ModelSpec};

/// Version stamped into every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
