//! Spatio-temporal count models for disease surveillance panels: additive
//! autoregressive (endemic-epidemic) models with spatial coupling, and
//! multiplicative gravity models driven by air-traffic covariates. Includes
//! negative-binomial likelihoods with analytic gradients, quasi-Newton
//! fitting with profile grids, model comparison metrics, a seeded simulator,
//! and the on-disk formats used by the command-line tool.

pub mod compare;
pub mod covariate;
pub mod error;
pub mod fit;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod panel;
pub mod params;
pub mod sim;
pub mod spatial;
pub mod weights;

pub use error::{Error, Result};
