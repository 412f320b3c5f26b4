//! Constructive lower-bound machinery for shallow-network training on `[0,1]^d`.
//!
//! The crate builds `C^r` fooling functions that vanish on every projected ball of a
//! ball-average quadrature rule, assembles slow-approximation targets from them, and
//! trains width-`m` mean-field networks by the particle form of the Wasserstein
//! gradient flow while tracking second moments, Barron-norm bounds and risk decay.
//!
//! Modules:
//!
//! | module | contents |
//! |--------|----------|
//! | [`geometry`] | torus metric, projected balls, ball sampling, ball volumes |
//! | [`fooling`] | the fooling function, its constants and statistical verifiers |
//! | [`quadrature`] | the operators `A_n`, `A`, point selection, gap certificates |
//! | [`sequences`] | exact super-exponential sequences and time scales |
//! | [`adversary`] | truncated slow-approximation targets with sign selection |
//! | [`meanfield`] | particle measures, risks, the particle flow, Barron diagnostics |
//! | [`harness`] | experiment configs, rate fits, reports, plots |

pub mod adversary;
pub mod error;
pub mod fooling;
pub mod geometry;
pub mod harness;
pub mod integrand;
pub mod meanfield;
pub mod quadrature;
pub mod seed;
pub mod sequences;

pub use error::{Error, Result};
pub use integrand::{Estimate, Integrand};
