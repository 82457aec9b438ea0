//! Voltage-security analysis: AC power flow, Q-V margins, VSC-HVDC upgrade
//! scenarios and k-means clustering of their zone-level impact.

pub mod cluster;
pub mod error;
pub mod network;
pub mod parallel;
pub mod powerflow;
pub mod qv;
pub mod scenario;

pub use error::{Error, Result};
