//! Simulation, approximation and dose scheduling for a fractional-order
//! two-compartment pharmacokinetic model.
//!
//! Units are ng for amounts and days for time throughout.
//!
//! * [`laplace`]: numerical inverse Laplace transforms (reference solutions)
//! * [`rational`], [`lti`]: rational approximations of `s^alpha` and their
//!   state-space simulation
//! * [`abm`], [`flmm`], [`gl`]: time-domain solvers
//! * [`scheduler`], [`qp`]: constrained open-loop dose scheduling
//! * [`bench`], [`metrics`]: method comparison

pub mod abm;
pub mod bench;
pub mod commensurate;
pub mod conv;
pub mod error;
pub mod flmm;
pub mod frac;
pub mod gl;
pub mod laplace;
pub mod lti;
pub mod metrics;
pub mod pk;
pub mod poly;
pub mod qp;
pub mod rational;
pub mod scalar;
pub mod scheduler;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PkParams = pk::PkParams<f64>;
pub type Trajectory = trajectory::Trajectory<f64>;
pub type GlRealization = gl::GlRealization<f64>;
pub type GlWeightSequence = frac::GlWeightSequence<f64>;
pub type FractionalOrder = frac::FractionalOrder<f64>;
