//! Energy-aware trajectory planning for a sensing UAV tracking a ground
//! target: simulation, tracking filter, bound-based objective, the
//! fractional/moment-SDP optimizer, energy reserve planning and the online
//! controller.

// `!(x > 0.0)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod dynamics;
pub mod ekf;
pub mod energy;
pub mod episode;
pub mod error;
pub mod oracles;
pub mod pcrb;
pub mod polyopt;
pub mod scenario;

pub use error::{Error, Result};
