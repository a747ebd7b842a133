//! Order-constrained Extended Plackett-Luce (EPL) ranking model.
//!
//! The EPL generalizes the Plackett-Luce distribution by letting the ranker
//! assign positions in a latent *reference order* instead of strictly
//! best-to-worst. Here the reference order is constrained to the
//! "top-or-bottom" space of size 2^(K-1): at every stage the ranker fills
//! either the lowest or the highest still-open rank.
//!
//! The crate provides:
//!
//! - [`perm`]: permutation algebra, the restricted reference-order space and
//!   its binary codec, Borda orderings;
//! - [`model`]: PL/EPL log densities, forward sampling, the exponential
//!   latent-variable augmentation, and an exact Mallows-Hamming oracle;
//! - [`mcmc`]: the tuned joint Metropolis-within-Gibbs sampler with an
//!   adjacent-swap kernel, plus posterior summaries;
//! - [`diag`]: the rank-concordance adequacy statistic, bootstrap and
//!   posterior-predictive p-values, and a Type-I-error/power study runner.
//!
//! Replicate-level loops (bootstrap, power study) run on rayon when the
//! default `parallel` feature is enabled; results are identical either way
//! because every replicate draws from its own seeded stream.

pub mod diag;
pub mod exec;
pub mod mcmc;
pub mod model;
pub mod perm;
