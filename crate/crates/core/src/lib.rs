//! Coverage and spatial-throughput analysis of dense cellular downlinks with
//! multi-slope pathloss, an antenna-height difference and multi-antenna
//! beamforming.

pub mod analytic;
pub mod cli;
pub mod density;
pub mod error;
pub mod montecarlo;
pub mod pathloss;
pub mod specfun;

pub use analytic::{CpStPoint, Method, NetworkConfig};
pub use error::{Error, Result};
pub use pathloss::PathlossModel;
