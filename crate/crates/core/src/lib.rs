//! Malaria case forecasting for province and country series: missForest
//! imputation of climate gaps, 18→5 province redistricting, sliding-window
//! LSTM regressors trained from scratch, and RMSE/totals reporting.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod impute;
pub mod lstm;
pub mod math;
pub mod pipeline;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
