//! Pointwise kernel conditional density estimation with greedy, per-point
//! bandwidth selection (the RevDir rodeo).
//!
//! For an observation `W = (X, Y)` with `X ∈ R^{d1}` and `Y ∈ R^{d2}`, the
//! estimator of `f(y | x)` at `w = (x, y)` is
//!
//! ```text
//! f̂_h(w) = (1/n) Σ_i Π_k h_k⁻¹ K((w_k − W_ik)/h_k) / f̃_X(X_i)
//! ```
//!
//! and [`rodeo::select`] picks one bandwidth per coordinate by testing the
//! derivative statistics `Z_hj` against the thresholds `λ_hj`. Irrelevant
//! coordinates end with bandwidths near 1, relevant ones shrink.
//!
//! ```
//! use cdrodeo::{models, rodeo, estimator::MarginalValues, EvalPoint};
//!
//! let spec = models::ModelSpec::new(models::Model::B, 2, 7).unwrap();
//! let sample = models::sample_model(&spec, 5_000).unwrap();
//! let marginal = MarginalValues::new(
//!     (0..sample.n())
//!         .map(|i| models::marginal_density(&spec, sample.x(i)).unwrap())
//!         .collect(),
//! )
//! .unwrap();
//! let w = EvalPoint::zeros(3);
//! let result = rodeo::select(&sample, &marginal, &w, &rodeo::RodeoConfig::default()).unwrap();
//! assert!(result.estimate.is_finite());
//! assert_eq!(result.bandwidth.values().len(), 3);
//! ```

pub mod bandwidth;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod kernels;
pub mod marginal;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod rodeo;
pub mod sample;

pub use bandwidth::Bandwidth;
pub use error::{Error, Result};
pub use kernels::Kernel;
pub use sample::{EvalPoint, Sample};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/rodeo.md")]
    mod rodeo {}
    #[doc = include_str!("../../../book/src/marginal.md")]
    mod marginal {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
