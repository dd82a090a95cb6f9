//! Bayesian treatment-effect inference on the M-structure.
//!
//! The M-structure is the five-node causal graph `U -> T`, `U -> Z`, `W -> Z`,
//! `W -> Y`, `T -> Y` with `U` and `W` latent. Conditioning on the collider `Z`
//! *creates* confounding between `T` and `Y` (M-bias), so the back-door-adjusted
//! estimate is wrong while the unadjusted contrast is causal.
//!
//! The crate provides:
//!
//! - [`graph`]: DAGs with do-operator surgery (edge removal), d-separation, and
//!   the applicability conditions of the three do-calculus rules.
//! - [`model`]: the full generative M-structure over binary variables, exact
//!   enumeration of its 32-cell joint, ancestral sampling, and the
//!   reparameterization to `(alpha, omega, kappa, nu)` with the derived
//!   `psi`/`rho` outcome tables.
//! - [`estimators`]: plug-in frequentist estimates from a `(T, Z, Y)`
//!   contingency table - the unadjusted (causal) contrast and the per-stratum
//!   back-door (biased) contrasts.
//! - [`mcmc`]: priors, the aggregated log-likelihood, a prior-proposal
//!   independence sampler, and an importance-sampling oracle.
//! - [`analysis`]: per-draw treatment-effect decompositions, chain summaries,
//!   and CSV/SVG artifact export.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod mcmc;
pub mod model;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
