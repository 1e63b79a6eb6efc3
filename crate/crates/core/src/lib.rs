//! Uplink cooperative rate-splitting multiple access (C-RSMA) simulator.
//!
//! The pipeline runs channel synthesis, CCU/CEU pairing, rate evaluation and
//! SCA power allocation, with baseline schemes and Monte-Carlo sweeps on top.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod experiment;
pub mod pairing;
pub mod rates;
pub mod sca;
pub mod streams;

pub use config::SystemConfig;
pub use error::{Error, Result};
