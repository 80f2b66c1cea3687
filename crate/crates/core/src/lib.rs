//! Sojourn time of an entire batch in the M^X/M/1 processor-sharing queue
//! with geometrically distributed batch sizes.
//!
//! The crate computes the Laplace–Stieltjes transform of the batch sojourn
//! time, its mean, and its tail (by numerical inversion), and carries two
//! independent ground truths for every analytic result:
//!
//! * [`oracle`] solves the conditional recurrence for `E[exp(-s Ω_{n,b})]`
//!   (and the conditional means) on a truncated `(n, b)` window;
//! * [`simulator`] runs a Monte Carlo jump chain for a tagged batch started
//!   from the exact stationary queue length.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`model`] | parameters, spectral data of `P(s; u)`, kernel `R`, characteristic curves, stationary law |
//! | [`special`] | log-gamma, Gauss ₂F₁, Appell F1, the implicit branch θ(ν; w) |
//! | [`quadrature`] | tanh-sinh integration with endpoint-distance aware integrands |
//! | [`triangular`] | boundary coefficients `E_ℓ(q)` from the lower-triangular system |
//! | [`analytic`] | `E(q,v)`, `F(u,v)`, batch transform, mean, CCDF by inversion |
//! | [`oracle`] | truncated conditional-recurrence solver |
//! | [`simulator`] | Monte Carlo tagged-batch simulator |
//! | [`validation`] | the cross-check suite used by the `validate` command |

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod error;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod simulator;
pub mod special;
pub mod triangular;
pub mod validation;

pub use error::{Error, Result};
pub use model::{ModelParams, SpectralData, StationaryLaw};
