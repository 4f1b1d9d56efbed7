//! Phase-space and Gaussian simulation of squeezed-light-enhanced Mach-Zehnder
//! atom interferometry.
//!
//! Pipeline: [`sampler`] draws Wigner initial conditions, [`dynamics`] runs the
//! atom-light state transfer, [`network`] applies the interferometer, loss and
//! homodyne optics, and [`estimators`] turns ensembles into corrected moments
//! and phase sensitivities. [`analytics`] holds the undepleted closed forms and
//! a Gaussian covariance engine; [`oracle`] is an exact Fock-basis reference.

// `!(x > 0.0)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod network;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod sampler;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
