//! Nonparametric estimation of the drift and squared diffusion of an
//! unobserved volatility process from discretely observed prices.
//!
//! The price follows `dX = sqrt(V) dB` with `V` a positive diffusion
//! `dV = b(V) dt + sigma(V) dW` independent of `B`. From the increments of
//! `X` the crate builds realized quadratic variation blocks, regresses block
//! increments on block levels, and selects among least-squares projection
//! estimators with a data-calibrated penalty.
//!
//! Pipeline, one module per stage:
//!
//! * [`models`]: reference volatility models and exact path steppers;
//! * [`sampling`]: fine-grid paths, integrated blocks, price increments;
//! * [`quadvar`]: realized quadratic variation and regression samples;
//! * [`bases`]: trigonometric and piecewise polynomial spaces;
//! * [`lsq`]: least-squares fits on one space;
//! * [`selection`]: penalized selection and constant calibration;
//! * [`estimate`]: the two targets end to end;
//! * [`harness`]: Monte Carlo tables;
//! * [`config`] and [`io`]: run configuration and file formats.

pub mod bases;
pub mod config;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod io;
pub mod lsq;
pub mod models;
pub mod quadvar;
pub mod rng;
pub mod sampling;
pub mod selection;

pub use error::{Error, Result};
