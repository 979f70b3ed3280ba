//! Localization and magnitude estimation of load disturbances from generator
//! frequency measurements.
//!
//! The crate covers the whole pipeline: a swing-equation simulator on the
//! New England 39-bus network ([`grid`]), mean-filtered deviation features
//! ([`features`]), a multinomial logistic localizer ([`localizer`]), per-bus
//! least-squares magnitude regression ([`magnitude`]), model banks for missing
//! measurements ([`missing`]), and the experiment harness ([`eval`]).

pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod localizer;
pub mod magnitude;
pub mod missing;
pub mod optim;
pub mod par;

pub use error::{Error, Result};
