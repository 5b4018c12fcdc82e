//! Numerical laboratory for smooth time-changes of the horocycle flow on the
//! unit tangent bundle of the Bolza surface.

pub mod cheb;
pub mod dd;
pub mod error;
pub mod flows;
pub mod hyperbolic;
pub mod jet;
pub mod mc;
pub mod observables;
pub mod rng;
pub mod statistics;
pub mod surface;

pub use error::{Error, Result};
