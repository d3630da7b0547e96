//! Simulation library for multirobot informative path planning aimed at
//! estimating quantiles of a scalar field.

pub mod error;
pub mod field;
pub mod gp;
pub mod objective;
pub mod planner;
pub mod seed;
pub mod stats;
pub mod team;

pub use error::{Error, Result};
