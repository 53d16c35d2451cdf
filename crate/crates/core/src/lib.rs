//! # roughkit
//!
//! Geometric rough paths of arbitrary Hölder roughness and the equations
//! they drive.
//!
//! - [`algebra`]: words, the truncated shuffle Hopf algebra, characters.
//! - [`roughpath`]: piecewise-linear lifts, increments, Hölder diagnostics,
//!   fractional Brownian drivers.
//! - [`controlled`]: controlled rough paths, composition with smooth maps,
//!   compensated-Riemann-sum rough integrals.
//! - [`rde`]: derived vector fields, Davie-scheme RDE solving, flow
//!   derivatives, the `Γ_w` operators and Itô-type checks.
//! - [`rpde`]: rough transport (backward) and continuity (forward)
//!   equations with graded-estimate verifiers.
//!
//! Supporting modules: [`jet`] (truncated multivariate Taylor arithmetic),
//! [`smooth`] (smooth maps with derivative oracles), [`order`] (log-log
//! order regression), [`io`] (JSON/CSV schemas).

pub mod algebra;
pub mod controlled;
pub mod error;
pub mod io;
pub mod jet;
pub mod order;
pub mod parallel;
pub mod rde;
pub mod roughpath;
pub mod rpde;
pub mod smooth;

pub use error::{Error, Result};
