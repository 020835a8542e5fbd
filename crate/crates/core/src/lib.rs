//! Wishart processes, Wishart bridges and their Laplace-transform identities,
//! with a Monte Carlo harness that checks every closed form against path
//! simulation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dist;
pub mod error;
pub mod girsanov;
pub mod harness;
pub mod matcore;
pub mod model;
pub mod sim;
pub mod special;
pub mod transforms;
pub mod variant;

pub use error::{Error, Result};
pub use matcore::{Cone, MatFn, SpdMat, SymMat};
pub use model::{RawParams, Violation, WishartParams};
pub use variant::Variant;
