//! SCADA-based early fault detection for wind-turbine gear bearings.
//!
//! The crate trains single- and multi-target MLP normal-behaviour models of the
//! gear bearing temperature, overlays synthetic linear temperature trends,
//! raises alarms from residuals against a 99.9th-percentile threshold, and
//! compares detection delay and stability between the two model families.

pub mod alarm;
pub mod config;
pub mod error;
pub mod eval;
pub mod fault;
pub mod mlp;
pub mod pipeline;
pub mod scada;
pub mod seeds;
pub mod stats;

pub use error::{Error, Result};
