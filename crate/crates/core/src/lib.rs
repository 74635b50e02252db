//! Electricity-market dynamics toolkit.
//!
//! Continuous, discrete, delay and fractional-order market models together
//! with equilibrium computation, matrix-pencil stability analysis and
//! merit-order dispatch.

pub mod equilibrium;
pub mod model;
pub mod pencil;
pub mod continuous;
pub mod discrete;
pub mod fractional;
pub mod dispatch;
pub mod scenario;
