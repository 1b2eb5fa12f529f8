//! Bayesian inversion of linear problems with a fractional total-variation
//! Gaussian prior, a Gamma hyperprior on the regularisation weight, and a
//! diagonal transport map used to precondition an independence sampler.

// `!(x > 0.0)` checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod fractional;
pub mod gaussian;
pub mod grid;
pub mod io;
pub mod posterior;
pub mod samplers;
pub mod transport;

pub use error::{Error, Result};
pub use fractional::{Boundary, FtvOperator, GrunwaldWeights};
pub use gaussian::GaussianMeasure;
pub use grid::{Axis, Field, Grid};
