//! Design and analysis toolkit for two-actuator-array cross-directional
//! control systems.

pub mod error;
pub mod io;
pub mod numlin;
pub mod plant;
pub mod spectral;
pub mod design;
pub mod analysis;
pub mod sim;
pub mod cli;

pub use error::{Error, Result};
