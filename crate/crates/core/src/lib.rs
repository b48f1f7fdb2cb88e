//! Channel estimation and Fisher-information bounds for multi-user MIMO
//! uplinks with 1-bit ADCs and receiver oversampling.

pub mod channel;
pub mod config;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod export;
pub mod fisher;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod validation;

pub use config::SystemConfig;
pub use error::{Error, Result};
