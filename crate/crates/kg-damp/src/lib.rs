//! Numerical laboratory for the damped nonlinear Klein-Gordon equation
//!
//! ```text
//! u_tt + a(x) u_t - Lap u + u + f'(u) = 0   (defocusing)
//! u_tt + a(x) u_t - Lap u + u - f'(u) = 0   (focusing, f >= 0)
//! ```
//!
//! on lines, balls, and exterior-of-ball domains with radial symmetry.
//! The time integrator conserves a discrete energy exactly in the undamped
//! case and satisfies the exact discrete dissipation identity
//! E(t) - E(0) = -2 A(t) under damping, which is the backbone every
//! diagnostic and acceptance test leans on.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod nonlinearity;
pub mod rates;
pub mod stepper;
pub mod variational;
