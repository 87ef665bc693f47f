//! Sampling laboratory for Langevin-type samplers driven by inexact scores.
//!
//! The crate is organized around five pieces:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`targets`] | Gaussian and Gaussian-mixture targets with analytic scores, Gaussian smoothing, OU marginals |
//! | [`estimators`] | Score estimators: exact, affine-perturbed, constant offset, population and empirical KDE |
//! | [`metrics`] | Score-error metrics (L², MGF, L∞) and KL / Rényi / Fisher divergences |
//! | [`samplers`] | ILA / ULA / ILD steppers, the DDPM exponential-integrator sampler, exact moment propagation |
//! | [`bounds`] | Right-hand sides of the convergence bounds, step-size windows, trajectory audits |
//!
//! Everything that has a closed form on Gaussian fixtures is computed in
//! closed form; Monte-Carlo paths take explicit seeds and are deterministic.
//!
//! Config-driven runs, sweeps and artifacts live in the `scorelab-cli` crate
//! (the `lab` binary).
//!
//! ```rust
//! use scorelab_core::prelude::*;
//!
//! let target = make_gaussian_target(GaussianSpec::isotropic(2, 1.0).unwrap());
//! let est = perturbed_gaussian_estimator(1.2, 2).unwrap();
//! let init = GaussianMoments::isotropic(2, 4.0);
//! let (a, b) = est.affine_parts().unwrap();
//! let law = gaussian_ila_propagate(&init, a, b, 0.01, 500).unwrap();
//! let kl = kl_gaussian(law.last().unwrap(), &target.gaussian_moments().unwrap()).unwrap();
//! assert!(kl > 0.0);
//! ```

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod rng;
pub mod samplers;
pub mod targets;

#[cfg(test)]
pub(crate) mod oracle;

pub use error::{Error, Result};
pub use moments::GaussianMoments;

pub mod prelude {
    pub use crate::bounds::*;
    pub use crate::error::{Error, Result};
    pub use crate::estimators::*;
    pub use crate::metrics::*;
    pub use crate::moments::GaussianMoments;
    pub use crate::samplers::*;
    pub use crate::targets::*;
}
