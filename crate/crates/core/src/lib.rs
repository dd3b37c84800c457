//! Stability, boundedness, decay and blow-up certificates for
//! `u' = B(t)u + G(t,u) + f(t)` built from the evolution operator of the
//! linear part, each cross-checked by direct simulation.

pub mod certificates;
pub mod coeffs;
pub mod config;
pub mod expr;
pub mod linalg;
pub mod ode;
pub mod par;
pub mod propagator;
pub mod quad;
pub mod report;
pub mod scenarios;
pub mod simulate;
