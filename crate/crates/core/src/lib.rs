//! Significant vector regression for the nonlinear single-variable model
//! F(X) = f(Pi_gamma X): the response depends on X only through its
//! closest-point parameter on an unknown curve gamma.
//!
//! * [`curve`] builds and measures curves,
//! * [`link`] and [`synthesis`] generate data from the model,
//! * [`estimator`] fits and evaluates the regressor,
//! * [`tuning`] picks the number of slices and bins from theory,
//! * [`experiments`] runs convergence studies and writes CSV results.

pub mod config;
pub mod curve;
pub mod error;
pub mod estimator;
pub mod experiments;
mod float_serde;
pub mod io;
pub mod link;
pub mod synthesis;
pub mod tuning;
pub mod util;

pub use error::{Result, SvrError};
