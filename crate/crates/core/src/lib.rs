//! Common-ancestor type distribution of the two-type Moran model with
//! selection and mutation.
//!
//! The probabilities `h_k` are computed three ways: from a tridiagonal
//! coefficient system ([`coeffs`]), from the stationary line count of the
//! pruned lookdown ancestral selection graph ([`ldasg`]), and by forward
//! and backward Monte Carlo ([`asg`]). The large-population limits live
//! alongside, and [`branching`] holds the related two-type branching
//! process.

pub mod asg;
pub mod branching;
pub mod chain;
pub mod coeffs;
pub mod error;
pub mod forward;
pub mod io;
pub mod ldasg;
pub mod params;
pub mod rng;

pub use chain::{BirthDeathRates, Pmf, RateMatrix, Trajectory};
pub use error::{Error, ErrorClass, Result};
pub use params::{DerivedConstants, ModelParams};
