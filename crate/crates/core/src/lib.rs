//! Simulation, calibration and pricing for the rough Bergomi model with an
//! EWMA-driven, time-dependent Hurst exponent.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernel`]: the adapted Volterra kernel and the Gaussian variance driver.
//! - [`hurst`]: the EWMA variance filter and the clipped Hurst map.
//! - [`engine`]: Monte Carlo path generation (EWMA-rBergomi, constant-H
//!   rBergomi and a full-truncation Heston baseline).
//! - [`metrics`]: kernel density estimates and the Jensen-Shannon distance.
//! - [`calibrate`]: penalised JS-distance calibration of `(V0, nu, alpha, beta)`.
//! - [`analytics`]: empirical series, rolling volatility correlations and the
//!   Novikov integrability diagnostic.
//! - [`pricing`]: European Monte Carlo prices, Greeks and roughness sensitivity.



pub mod engine;
mod error;
pub mod gamma;
pub mod hurst;
pub mod analytics;
pub mod calibrate;
pub mod optim;
pub mod pricing;
pub mod kernel;
pub mod metrics;


pub mod rng;
pub mod stats;

pub use error::{Result, RoughVolError};

/// Trading days per year used for annualisation and the default daily step.
pub const TRADING_DAYS: f64 = 252.0;
