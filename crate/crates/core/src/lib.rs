//! Offline alignment from pairwise preferences, with certificates.
//!
//! The pipeline: estimate one linear reward model per preference oracle
//! from pairwise comparisons, then maximize the target reward regularized
//! toward a reference policy subject to lower bounds on the constraint
//! rewards. The constrained problem is solved through its convex dual by
//! projected gradient descent on the multipliers; closed-form Gibbs
//! policies make every dual evaluation exact. High-probability envelopes
//! on the estimated dual and its gradient turn the optimization output
//! into quantitative guarantees on dual gap, constraint violation, and
//! primal suboptimality.
//!
//! Everything operates on dense finite prompt/action spaces with exact
//! expectations, and every randomized routine draws from named, seeded
//! streams, so results are reproducible bit for bit.

pub mod certificates;
pub mod dual;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod mle;
pub mod rng;
pub mod solver;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
