//! Mean-square stability analysis of linear mean-field stochastic
//! differential equations
//!
//! ```text
//! dX_t = (A(t) X_t + B(t) E X_t) dt + (C(t) X_t + D(t) E X_t) dW_t
//! ```
//!
//! through the deterministic linear ODE satisfied by the pair of first and
//! second moments, together with an interacting-particle Monte Carlo
//! cross-check and the moment-level pitchfork experiments for
//!
//! ```text
//! dX_t = (alpha X_t + beta E X_t - X_t E X_t^2) dt + X_t dW_t
//! ```
//!
//! Module map:
//!
//! - [`numerics`]: dense matrices, RK4 / Dormand-Prince integrators, a
//!   Hessenberg + shifted QR eigensolver and exact-rounding summation.
//! - [`moment`]: moment states, coefficient schedules, the `d(d+1)`-dimensional
//!   lift and moment propagation.
//! - [`spectrum`]: eigen-lift and finite-time estimators of the mean-square
//!   dichotomy spectrum.
//! - [`mc_sim`]: Euler-Maruyama particle ensembles with counter-based noise.
//! - [`pitchfork`]: closed forms, reduced moment ODE, pullback runs and the
//!   bifurcation sweep.

pub mod error;
pub mod mc_sim;
pub mod moment;
pub mod numerics;
pub mod pitchfork;
pub mod rng;
pub mod spectrum;

pub use error::{Error, Result};
pub use numerics::Matrix;
