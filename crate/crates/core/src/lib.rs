//! Trivariate wrapped Cauchy copula with non-uniform marginals (TWCM).
//!
//! The copula layer ([`copula`]) works on `[0, 2π)³` with uniform marginals.
//! [`model::TwcmModel`] composes it with three [`marginals::Marginal`] laws,
//! which may be circular or linear, giving densities on the torus or on a
//! hyper-cylinder. [`fit`] estimates models by inference functions for
//! margins, [`mixture`] fits finite mixtures by EM, and [`timeseries`]
//! simulates the circular AR(2) process built from the conditional law.

pub mod angle;
pub mod copula;
pub mod error;
pub mod fit;
pub mod gof;
pub mod marginals;
pub mod mixture;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod special;
pub mod timeseries;

pub use copula::{RhoVector, Twcc};
pub use error::{Result, TwcmError};
pub use marginals::{Domain, Family, Marginal};
pub use model::{Observation, TwcmModel};
